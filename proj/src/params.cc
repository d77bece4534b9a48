#include "seqinf/params.h"

#include <algorithm>

#include "seqinf/errors.h"

namespace seqinf {

Tensor uniform_param(Shape shape, double range, Rng& rng) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = round_param(rng.uniform(-range, range));
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor zero_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor constant_param(Shape shape, double value) {
  return Tensor::filled(std::move(shape), round_param(value), true);
}

void zero_grads(const ParamList& params) {
  for (const NamedParam& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

void append_params(ParamList& out, const std::string& prefix, const ParamList& params) {
  for (const NamedParam& p : params) out.push_back({prefix + p.name, p.tensor});
}

size_t count_values(const ParamList& params) {
  size_t n = 0;
  for (const NamedParam& p : params) n += p.tensor.size();
  return n;
}

FreezeScope::FreezeScope(const ParamList& params) {
  for (const NamedParam& p : params) {
    tensors_.push_back(p.tensor);
    saved_.push_back(p.tensor.requires_grad());
    tensors_.back().set_requires_grad(false);
  }
}

FreezeScope::~FreezeScope() {
  for (size_t i = 0; i < tensors_.size(); ++i) tensors_[i].set_requires_grad(saved_[i]);
}

void copy_values(const ParamList& from, const ParamList& to) {
  if (from.size() != to.size()) throw ContractError("copy_values: parameter lists differ");
  for (size_t i = 0; i < from.size(); ++i) {
    if (from[i].tensor.shape() != to[i].tensor.shape()) {
      throw ShapeError("copy_values: " + from[i].name + " " +
                       shape_string(from[i].tensor.shape()) + " vs " +
                       shape_string(to[i].tensor.shape()));
    }
    Tensor dst = to[i].tensor;
    std::copy(from[i].tensor.data().begin(), from[i].tensor.data().end(),
              dst.mutable_data().begin());
  }
}

}  // namespace seqinf
