#include "umr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "umr/error.hpp"

namespace umr::ad {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(data_.size() == product(shape_), "Tensor: data size does not match shape " + shape_string(shape_));
}

Tensor Tensor::from_complex(const ComplexTensor& t) {
  const auto raw = t.raw();
  return Tensor({2 * t.channels(), t.height(), t.width()}, std::vector<double>(raw.begin(), raw.end()));
}

Tensor Tensor::from_image(const RealImage& img) { return Tensor({1, img.height, img.width}, img.data); }

ComplexTensor Tensor::to_complex() const {
  require(rank() == 3 && shape_[0] % 2 == 0, "Tensor::to_complex: need [2C, H, W], got " + shape_string(shape_));
  return ComplexTensor(Shape3{shape_[0] / 2, shape_[1], shape_[2]}, data_);
}

RealImage Tensor::to_image() const {
  require(rank() == 3 && shape_[0] == 1, "Tensor::to_image: need [1, H, W], got " + shape_string(shape_));
  RealImage img(shape_[1], shape_[2]);
  img.data = data_;
  return img;
}

double Tensor::item() const {
  require(data_.size() == 1, "Tensor::item: tensor has " + std::to_string(data_.size()) + " entries");
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Parameter::reset_state() {
  moment1 = Tensor(value.shape());
  moment2 = Tensor(value.shape());
  steps = 0;
}

Parameter& ParameterStore::add(std::string name, Tensor init) {
  require(find(name) == nullptr, "ParameterStore: duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->zero_grad();
  p->reset_state();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

Parameter& ParameterStore::at(std::string_view name) {
  Parameter* p = find(name);
  require(p != nullptr, "ParameterStore: no parameter named '" + std::string(name) + "'");
  return *p;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterStore::reset_state() {
  for (auto& p : params_) p->reset_state();
}

Var Graph::constant(Tensor value, std::string_view name) {
  Node n;
  n.rule = std::string(name);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.rule = "param:" + p.name;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_[&p] = id;
  return {this, id};
}

Var Graph::record(std::string_view rule, Tensor value, std::vector<Var> parents, BackwardFn fn) {
  Node n;
  n.rule = std::string(rule);
  n.value = std::move(value);
  for (const Var& v : parents) {
    require(v.graph == this, "Graph::record: input from another graph in '" + n.rule + "'");
    n.parents.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(v.id)].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

bool Graph::is_constant(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return !n.requires_grad && n.parents.empty();
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.has_grad) return Tensor(n.value.shape());
  return n.grad;
}

Tensor& Graph::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  require(loss.graph == this, "Graph::backward: loss belongs to another graph");
  const Tensor& lv = value(loss);
  require(lv.size() == 1, "Graph::backward: loss must be scalar, got shape " + shape_string(lv.shape()));
  if (!std::isfinite(lv[0])) fail(ErrorCode::Numerical, "Graph::backward: non-finite loss");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!requires_grad(loss)) return;
  grad_slot(loss.id).fill(1.0);

  std::vector<Tensor*> gin;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.requires_grad) continue;
    if (!n.grad.all_finite()) {
      fail(ErrorCode::Numerical,
           "Graph::backward: non-finite gradient at node " + std::to_string(id) + " (" + n.rule + ")");
    }
    if (n.param != nullptr) {
      Tensor& acc = n.param->grad;
      if (!acc.same_shape(n.grad)) acc = Tensor(n.grad.shape());
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += n.grad[i];
      continue;
    }
    if (!n.backward) continue;
    gin.clear();
    for (int p : n.parents) {
      gin.push_back(nodes_[static_cast<std::size_t>(p)].requires_grad ? &grad_slot(p) : nullptr);
    }
    n.backward(n.grad, gin);
    for (std::size_t k = 0; k < gin.size(); ++k) {
      if (gin[k] != nullptr && !gin[k]->all_finite()) {
        fail(ErrorCode::Numerical, "Graph::backward: " + n.rule + " (node " + std::to_string(id) +
                                       ") produced a non-finite gradient for node " +
                                       std::to_string(n.parents[k]));
      }
    }
  }
}

}  // namespace umr::ad
