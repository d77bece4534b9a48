#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqinf/energies.h"
#include "seqinf/tensor.h"

namespace seqinf {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  // Parameter index and flat entry of the worst disagreement.
  int worst_param = -1;
  size_t worst_entry = 0;
  size_t entries_checked = 0;
};

// Compares tape gradients of the scalar `f()` with respect to `params` against
// central finite differences (step `step`). The relative error of an entry is
// |a - b| / max(1, |a|, |b|). `f` is evaluated twice at the base point; any
// difference throws NumericError, since finite differences of a
// non-deterministic function are meaningless. Runs in double precision.
// Gradients of `params` are zeroed before and after the check.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           double step = 1e-5, double tol = 1e-6);

// Randomized gradient check of one structured energy term with respect to
// the relaxed labels and every term parameter. Each instance draws a fresh
// term, a length in [1, max_length] and random simplex rows.
struct TermCheckSpec {
  StructuredConfig term;
  int num_labels = 4;
  int max_length = 0;  // 0 means order + 3
  int instances = 100;
  uint64_t seed = 1;
  double step = 1e-5;
  double tol = 1e-4;
  // Adds a term whose recorded gradient is wrong, as a negative control.
  bool corrupt_gradient = false;
};

struct TermCheckResult {
  double max_rel_err = 0.0;
  bool pass = true;
  int instances = 0;
  size_t entries_checked = 0;
  double seconds = 0.0;
};

TermCheckResult check_term_gradients(const TermCheckSpec& spec);

}  // namespace seqinf
