#pragma once

// Exact decoders and CRF quantities for first-order chains, plus exhaustive
// search over the discrete output space for small instances of any energy.
//
// Chain scores follow the energies boundary convention: position 0 is scored
// by its unary row only, there are no start or stop transitions.

#include <functional>
#include <span>
#include <vector>

#include "seqinf/energies.h"
#include "seqinf/tensor.h"

namespace seqinf {

struct ChainPotentials {
  int length = 0;
  int num_labels = 0;
  std::vector<double> unary;       // [T, L] row-major
  std::vector<double> transition;  // [L, L]; [prev, next]

  static ChainPotentials from_tensors(const Tensor& unary, const Tensor& transition);
  double u(int t, int j) const { return unary[static_cast<size_t>(t) * num_labels + j]; }
  double w(int i, int j) const { return transition[static_cast<size_t>(i) * num_labels + j]; }
  // Score of a discrete sequence.
  double score(std::span<const int> labels) const;
};

struct Decoded {
  std::vector<int> labels;
  double score = 0.0;  // equals score(labels) bit for bit
};

// Highest scoring sequence. Ties prefer the lowest label index, both for the
// final label and at every backpointer.
Decoded viterbi_decode(const ChainPotentials& p);

// log sum_y exp(score(y)) via the forward recursion.
double crf_log_partition(const ChainPotentials& p);

// Posterior label marginals [T, L] from forward-backward.
std::vector<double> crf_marginals(const ChainPotentials& p);

// log Z - score(gold). Throws ContractError on an out-of-range label or a
// length mismatch.
double crf_nll(const ChainPotentials& p, std::span<const int> gold);

// Differentiable crf_nll: gradients are (marginals - gold indicators) for the
// unary scores and (pairwise marginals - gold transition counts) for the
// transition matrix.
Tensor crf_nll_loss(const Tensor& unary, const Tensor& transition, std::span<const int> gold);

struct ArgminResult {
  std::vector<int> labels;
  Tensor y;  // one-hot [T, L]
  double energy = 0.0;
};

inline constexpr double kMaxEnumeration = 1e6;

// Exact minimizer of total_energy over all L^T discrete sequences, visited in
// lexicographic order (first minimum wins). Throws ContractError when
// L^T > kMaxEnumeration.
ArgminResult brute_force_argmin(const EnergyModel& model, std::span<const int> tokens);

// Calls `visit(labels)` for every sequence of length T over L labels in
// lexicographic order. Throws ContractError above kMaxEnumeration.
void enumerate_sequences(int length, int num_labels,
                         const std::function<void(std::span<const int>)>& visit);

}  // namespace seqinf
