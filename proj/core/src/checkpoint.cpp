#include "umr/checkpoint.hpp"

#include "umr/error.hpp"

namespace umr::ad {
namespace {

NamedArray as_array(const std::string& name, const Tensor& t) {
  NamedArray a;
  a.name = name;
  a.shape = t.shape();
  for (std::size_t i = 0; i < a.shape.size(); ++i) a.axes.push_back("d" + std::to_string(i));
  a.data.assign(t.values().begin(), t.values().end());
  return a;
}

Tensor as_tensor(const NamedArray& a, const std::vector<std::size_t>& shape) {
  if (a.shape != shape) {
    fail(ErrorCode::SchemaViolation,
         "checkpoint array '" + a.name + "' has shape " + shape_string(a.shape) + ", expected " + shape_string(shape));
  }
  return Tensor(shape, a.data);
}

}  // namespace

void store_parameters(NamedArrayFile& file, const ParameterStore& store, bool with_state) {
  for (const Parameter* p : store.all()) {
    file.put(as_array("param/" + p->name, p->value));
    if (!with_state) continue;
    if (p->moment1.size() == p->value.size()) file.put(as_array("adam_m/" + p->name, p->moment1));
    if (p->moment2.size() == p->value.size()) file.put(as_array("mean_sq/" + p->name, p->moment2));
    file.set_attr("steps/" + p->name, static_cast<double>(p->steps));
  }
}

void load_parameters(const NamedArrayFile& file, ParameterStore& store) {
  for (Parameter* p : store.all()) {
    p->value = as_tensor(file.get("param/" + p->name), p->value.shape());
    p->reset_state();
    if (file.has("adam_m/" + p->name)) p->moment1 = as_tensor(file.get("adam_m/" + p->name), p->value.shape());
    if (file.has("mean_sq/" + p->name)) p->moment2 = as_tensor(file.get("mean_sq/" + p->name), p->value.shape());
    if (file.has_attr("steps/" + p->name)) p->steps = static_cast<std::int64_t>(file.attr_scalar("steps/" + p->name));
  }
}

}  // namespace umr::ad
