#include "seqinf/gradcheck.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "seqinf/errors.h"

namespace seqinf {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           double step, double tol) {
  PrecisionScope double_mode(Precision::kDouble);
  for (Tensor& p : params) {
    if (!p.requires_grad()) throw ContractError("grad_check: parameter without requires_grad");
    p.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
  }
  for (Tensor& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
    p.zero_grad();
  }

  auto evaluate = [&f]() {
    NoGradScope no_grad;
    return f().item();
  };
  const double base1 = evaluate();
  const double base2 = evaluate();
  if (!(base1 == base2) && !(std::isnan(base1) && std::isnan(base2))) {
    throw NumericError("grad_check: function is not deterministic");
  }

  GradCheckReport report;
  for (size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    for (size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate();
      values[i] = saved - step;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.entries_checked;
      if (!(rel <= report.max_rel_err)) {
        // NaN lands here as well and makes the check fail.
        report.max_rel_err = std::isnan(rel) ? INFINITY : rel;
        report.worst_param = static_cast<int>(k);
        report.worst_entry = i;
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

TermCheckResult check_term_gradients(const TermCheckSpec& spec) {
  PrecisionScope double_mode(Precision::kDouble);
  const auto start = std::chrono::steady_clock::now();
  Rng rng(spec.seed);
  const int labels = spec.num_labels;
  const int max_len = spec.max_length > 0 ? spec.max_length : std::max(1, spec.term.order) + 3;
  TermCheckResult result;
  for (int n = 0; n < spec.instances; ++n) {
    const StructuredTerm term = make_structured(spec.term, labels, rng);
    const int steps = rng.range(1, max_len);
    std::vector<double> y(static_cast<size_t>(steps) * labels);
    for (int t = 0; t < steps; ++t) {
      double total = 0.0;
      for (int j = 0; j < labels; ++j) total += y[static_cast<size_t>(t) * labels + j] = rng.uniform(0.05, 1.0);
      for (int j = 0; j < labels; ++j) y[static_cast<size_t>(t) * labels + j] /= total;
    }
    Tensor labels_t = Tensor::from({steps, labels}, std::move(y), true);
    std::vector<Tensor> params{labels_t};
    for (const NamedParam& p : structured_params(term)) params.push_back(p.tensor);
    auto f = [&]() {
      Tensor e = structured_energy(labels_t, term);
      if (spec.corrupt_gradient) {
        e = e + make_op({1}, {0.0}, {labels_t}, [](TensorNode& self) {
              if (double* g = self.input_grad(0)) g[0] += 0.5 * self.grad[0];
            });
      }
      return e;
    };
    const GradCheckReport r = grad_check(f, params, spec.step, spec.tol);
    result.max_rel_err = std::max(result.max_rel_err, r.max_rel_err);
    result.entries_checked += r.entries_checked;
    ++result.instances;
  }
  result.pass = result.max_rel_err < spec.tol;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace seqinf
