#include "seqinf/exact_inference.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqinf/errors.h"

namespace seqinf {
namespace {

double log_sum_exp(const double* v, int n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

void check_gold(const ChainPotentials& p, std::span<const int> gold) {
  if (static_cast<int>(gold.size()) != p.length) {
    throw ContractError("crf: gold length " + std::to_string(gold.size()) + " vs " +
                        std::to_string(p.length) + " positions");
  }
  for (int g : gold) {
    if (g < 0 || g >= p.num_labels) throw ContractError("crf: gold label " + std::to_string(g) + " out of range");
  }
}

// Forward log-messages alpha[t, j] and backward beta[t, j].
void forward_backward(const ChainPotentials& p, std::vector<double>& alpha,
                      std::vector<double>& beta) {
  const int steps = p.length, labels = p.num_labels;
  alpha.assign(static_cast<size_t>(steps) * labels, 0.0);
  beta.assign(static_cast<size_t>(steps) * labels, 0.0);
  std::vector<double> buf(labels);
  for (int j = 0; j < labels; ++j) alpha[j] = p.u(0, j);
  for (int t = 1; t < steps; ++t) {
    for (int j = 0; j < labels; ++j) {
      for (int i = 0; i < labels; ++i) buf[i] = alpha[static_cast<size_t>(t - 1) * labels + i] + p.w(i, j);
      alpha[static_cast<size_t>(t) * labels + j] = log_sum_exp(buf.data(), labels) + p.u(t, j);
    }
  }
  for (int t = steps - 2; t >= 0; --t) {
    for (int i = 0; i < labels; ++i) {
      for (int j = 0; j < labels; ++j) {
        buf[j] = p.w(i, j) + p.u(t + 1, j) + beta[static_cast<size_t>(t + 1) * labels + j];
      }
      beta[static_cast<size_t>(t) * labels + i] = log_sum_exp(buf.data(), labels);
    }
  }
}

}  // namespace

ChainPotentials ChainPotentials::from_tensors(const Tensor& unary, const Tensor& transition) {
  if (unary.rank() != 2 || transition.rank() != 2 || transition.dim(0) != unary.dim(1) ||
      transition.dim(1) != unary.dim(1)) {
    throw ShapeError("chain potentials: unary " + shape_string(unary.shape()) + ", transition " +
                     shape_string(transition.shape()));
  }
  ChainPotentials p;
  p.length = unary.dim(0);
  p.num_labels = unary.dim(1);
  p.unary.assign(unary.data().begin(), unary.data().end());
  p.transition.assign(transition.data().begin(), transition.data().end());
  return p;
}

double ChainPotentials::score(std::span<const int> labels) const {
  double s = 0.0;
  for (int t = 0; t < length; ++t) {
    s += u(t, labels[t]);
    if (t > 0) s += w(labels[t - 1], labels[t]);
  }
  return s;
}

Decoded viterbi_decode(const ChainPotentials& p) {
  const int steps = p.length, labels = p.num_labels;
  if (steps < 1) throw ContractError("viterbi_decode: empty sequence");
  std::vector<double> best(labels), next(labels);
  std::vector<int> back(static_cast<size_t>(steps) * labels, 0);
  for (int j = 0; j < labels; ++j) best[j] = p.u(0, j);
  for (int t = 1; t < steps; ++t) {
    for (int j = 0; j < labels; ++j) {
      int arg = 0;
      double mx = best[0] + p.w(0, j);
      for (int i = 1; i < labels; ++i) {
        const double s = best[i] + p.w(i, j);
        if (s > mx) {
          mx = s;
          arg = i;
        }
      }
      next[j] = mx + p.u(t, j);
      back[static_cast<size_t>(t) * labels + j] = arg;
    }
    best.swap(next);
  }
  Decoded out;
  int last = 0;
  for (int j = 1; j < labels; ++j) {
    if (best[j] > best[last]) last = j;
  }
  out.labels.resize(steps);
  out.labels[steps - 1] = last;
  for (int t = steps - 1; t > 0; --t) {
    out.labels[t - 1] = back[static_cast<size_t>(t) * labels + out.labels[t]];
  }
  // Rescored in score() order so the value matches score(labels) exactly.
  out.score = p.score(out.labels);
  return out;
}

double crf_log_partition(const ChainPotentials& p) {
  if (p.length < 1) throw ContractError("crf_log_partition: empty sequence");
  const int labels = p.num_labels;
  std::vector<double> alpha(labels), next(labels), buf(labels);
  for (int j = 0; j < labels; ++j) alpha[j] = p.u(0, j);
  for (int t = 1; t < p.length; ++t) {
    for (int j = 0; j < labels; ++j) {
      for (int i = 0; i < labels; ++i) buf[i] = alpha[i] + p.w(i, j);
      next[j] = log_sum_exp(buf.data(), labels) + p.u(t, j);
    }
    alpha.swap(next);
  }
  return log_sum_exp(alpha.data(), labels);
}

std::vector<double> crf_marginals(const ChainPotentials& p) {
  if (p.length < 1) throw ContractError("crf_marginals: empty sequence");
  std::vector<double> alpha, beta;
  forward_backward(p, alpha, beta);
  const int steps = p.length, labels = p.num_labels;
  const double log_z = log_sum_exp(alpha.data() + static_cast<size_t>(steps - 1) * labels, labels);
  std::vector<double> m(alpha.size());
  for (size_t k = 0; k < m.size(); ++k) m[k] = std::exp(alpha[k] + beta[k] - log_z);
  return m;
}

double crf_nll(const ChainPotentials& p, std::span<const int> gold) {
  check_gold(p, gold);
  return crf_log_partition(p) - p.score(gold);
}

Tensor crf_nll_loss(const Tensor& unary, const Tensor& transition, std::span<const int> gold) {
  ChainPotentials p = ChainPotentials::from_tensors(unary, transition);
  check_gold(p, gold);
  std::vector<double> alpha, beta;
  forward_backward(p, alpha, beta);
  const int steps = p.length, labels = p.num_labels;
  const double log_z = log_sum_exp(alpha.data() + static_cast<size_t>(steps - 1) * labels, labels);
  const double value = log_z - p.score(gold);
  std::vector<int> g(gold.begin(), gold.end());
  return make_op(
      {1}, {value}, {unary, transition},
      [p = std::move(p), alpha = std::move(alpha), beta = std::move(beta), g = std::move(g),
       log_z](TensorNode& self) {
        const double d = self.grad[0];
        const int steps = p.length, labels = p.num_labels;
        if (double* gu = self.input_grad(0)) {
          for (int t = 0; t < steps; ++t) {
            for (int j = 0; j < labels; ++j) {
              const size_t k = static_cast<size_t>(t) * labels + j;
              gu[k] += d * std::exp(alpha[k] + beta[k] - log_z);
            }
            gu[static_cast<size_t>(t) * labels + g[t]] -= d;
          }
        }
        if (double* gw = self.input_grad(1)) {
          for (int t = 1; t < steps; ++t) {
            for (int i = 0; i < labels; ++i)
              for (int j = 0; j < labels; ++j) {
                const double lp = alpha[static_cast<size_t>(t - 1) * labels + i] + p.w(i, j) +
                                  p.u(t, j) + beta[static_cast<size_t>(t) * labels + j] - log_z;
                gw[static_cast<size_t>(i) * labels + j] += d * std::exp(lp);
              }
            gw[static_cast<size_t>(g[t - 1]) * labels + g[t]] -= d;
          }
        }
      });
}

void enumerate_sequences(int length, int num_labels,
                         const std::function<void(std::span<const int>)>& visit) {
  if (length < 1 || num_labels < 1) throw ContractError("enumerate_sequences: empty space");
  if (std::pow(static_cast<double>(num_labels), length) > kMaxEnumeration) {
    throw ContractError("enumeration of " + std::to_string(num_labels) + "^" +
                        std::to_string(length) + " sequences exceeds the guard");
  }
  std::vector<int> labels(length, 0);
  while (true) {
    visit(labels);
    int pos = length - 1;
    while (pos >= 0 && ++labels[pos] == num_labels) {
      labels[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

ArgminResult brute_force_argmin(const EnergyModel& model, std::span<const int> tokens) {
  const int steps = static_cast<int>(tokens.size());
  const int labels = model.shape().num_labels;
  if (steps < 1) throw ContractError("brute_force_argmin: empty sequence");
  if (std::pow(static_cast<double>(labels), steps) > kMaxEnumeration) {
    throw ContractError("brute_force_argmin: " + std::to_string(labels) + "^" +
                        std::to_string(steps) + " sequences exceeds the guard");
  }
  NoGradScope no_grad;
  const Tensor scores = model.unary_scores(tokens);
  ArgminResult best;
  best.energy = std::numeric_limits<double>::infinity();
  Tensor y = Tensor::zeros({steps, labels});
  enumerate_sequences(steps, labels, [&](std::span<const int> seq) {
    auto data = y.mutable_data();
    std::fill(data.begin(), data.end(), 0.0);
    for (int t = 0; t < steps; ++t) data[static_cast<size_t>(t) * labels + seq[t]] = 1.0;
    const double e = model.energy_from_scores(scores, y).item();
    if (e < best.energy) {
      best.energy = e;
      best.labels.assign(seq.begin(), seq.end());
    }
  });
  best.y = one_hot(best.labels, labels);
  return best;
}

}  // namespace seqinf
