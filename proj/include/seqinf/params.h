#pragma once

#include <string>
#include <vector>

#include "seqinf/rng.h"
#include "seqinf/tensor.h"

namespace seqinf {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

// Learnable leaf drawn uniform(-range, range), stored at parameter precision.
Tensor uniform_param(Shape shape, double range, Rng& rng);
Tensor zero_param(Shape shape);
Tensor constant_param(Shape shape, double value);

void zero_grads(const ParamList& params);
void append_params(ParamList& out, const std::string& prefix, const ParamList& params);
size_t count_values(const ParamList& params);

// Toggles requires_grad on every parameter and restores it on destruction.
// Used to hold a parameter group fixed while another group is updated.
class FreezeScope {
 public:
  explicit FreezeScope(const ParamList& params);
  ~FreezeScope();
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  std::vector<Tensor> tensors_;
  std::vector<bool> saved_;
};

// Copies values (not gradients) between two structurally identical lists.
void copy_values(const ParamList& from, const ParamList& to);

}  // namespace seqinf
