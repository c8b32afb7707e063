#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "umr/tensor.hpp"

namespace umr::ad {

/// Dense real tensor, row-major. Complex values enter the graph in split form:
/// a C-channel ComplexTensor becomes a [2C, H, W] tensor (re block, im block).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor from_complex(const ComplexTensor& t);
  static Tensor from_image(const RealImage& img);
  ComplexTensor to_complex() const;
  RealImage to_image() const;

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Trainable tensor with gradient accumulator and optimizer moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor moment1;  // Adam m / unused by RMSProp
  Tensor moment2;  // Adam v / RMSProp mean square
  std::int64_t steps = 0;

  void zero_grad() { grad = Tensor(value.shape()); }
  void reset_state();
};

/// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  /// Total number of scalar entries.
  std::size_t scalar_count() const;
  void zero_grad();
  void reset_state();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
};

/// Accumulates into the gradients of the node's inputs. `gin[i]` is null when
/// input i does not require a gradient.
using BackwardFn = std::function<void(const Tensor& gout, std::span<Tensor* const> gin)>;

/// Tape of one forward evaluation. Node ids are a topological order, so the
/// backward sweep walks them in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value, std::string_view name = "constant");
  /// One node per parameter per graph; repeated calls return the same node.
  Var parameter(Parameter& p);
  Var record(std::string_view rule, Tensor value, std::vector<Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  bool is_constant(Var v) const;
  const std::string& rule(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].rule; }
  /// Gradient of the last backward() with respect to v (zeros if unreached).
  Tensor grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and accumulates into Parameter::grad.
  /// Throws Numerical naming the node whose gradient became non-finite.
  void backward(Var loss);

 private:
  struct Node {
    std::string rule;
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Tensor& grad_slot(int id);

  std::deque<Node> nodes_;
  std::map<const Parameter*, int> param_nodes_;
};

inline const Tensor& Var::value() const { return graph->value(*this); }

}  // namespace umr::ad
