#pragma once

// Joint training of an energy model and its two inference networks, plus the
// local-classifier and CRF baselines that share the same encoders.
//
// Per batch the inference networks take one step on the negated (Phi, Psi)
// objective, then the energy takes one step on the compound hinge loss.
// Batch losses are means over sentences; each sentence gets its own tape and
// gradients add up in the parameter buffers until the optimizer step.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqinf/data.h"
#include "seqinf/encoders.h"
#include "seqinf/energies.h"
#include "seqinf/params.h"
#include "seqinf/rng.h"
#include "seqinf/tensor.h"

namespace seqinf {

struct OptimizerSpec {
  enum class Kind { kSgdMomentum, kAdam };
  Kind kind = Kind::kAdam;
  double lr = 0.001;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerSpec adam(double lr = 0.001);
  static OptimizerSpec sgd_momentum(double lr = 0.005, double momentum = 0.9);
  // Throws ConfigError on a non-positive learning rate or moments outside [0, 1).
  void validate() const;
};

std::string optimizer_kind_name(OptimizerSpec::Kind kind);
OptimizerSpec::Kind parse_optimizer_kind(const std::string& name);

// Moment buffers aligned with a parameter list.
struct OptimizerState {
  std::vector<std::vector<double>> first;   // momentum velocity or Adam m
  std::vector<std::vector<double>> second;  // Adam v
  long step = 0;

  static OptimizerState for_params(const ParamList& params);
};

// Applies one update from the gradients currently stored on `params`, then
// rounds the values to parameter precision. SGD: v' = m v + g, p' = p - lr v'.
// Adam: bias-corrected first and second moments. Throws NumericError naming
// the parameter on a non-finite gradient, before anything is modified.
void optimizer_step(const ParamList& params, OptimizerState& state, const OptimizerSpec& spec);

struct TrainConfig {
  double lambda = 1.0;
  double tau = 1.0;
  int batch_size = 100;
  OptimizerSpec energy_optimizer = OptimizerSpec::adam(0.001);
  OptimizerSpec infnet_optimizer = OptimizerSpec::sgd_momentum(0.005, 0.9);
  int max_epochs = 50;
  int patience = 5;
  uint64_t seed = 1;
  std::string dev_metric = "acc";  // acc | f1
  bool warm_start = false;         // initialize F and A from a local classifier
  int warm_start_epochs = 5;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// F (cost-augmented, parameters Phi) and A (test time, parameters Psi).
struct InferenceNetworkPair {
  InferenceNetwork cost_augmented;
  InferenceNetwork test_time;

  static InferenceNetworkPair create(const InferenceNetworkShape& shape, Rng& rng);
  ParamList params() const;  // "F." then "A."
  ParamList state() const;
};

// Expected Hamming distance sum_t (1 - pred[t, gold_t]). Throws ContractError
// unless `gold` is one-hot with the shape of `pred`.
Tensor hamming_cost(const Tensor& pred, const Tensor& gold);

// -sum_t log pred[t, gold_t], with the log clamped at kLogFloor.
inline constexpr double kLogFloor = 1e-12;
Tensor token_ce_loss(const Tensor& pred, const Tensor& gold);

// Per-sentence pieces, exposed for recomposition checks.
struct ThetaTerms {
  Tensor cost;         // Delta(F(x), y)
  Tensor energy_gold;  // E(x, y)
  Tensor energy_f;     // E(x, F(x))
  Tensor energy_a;     // E(x, A(x))
  Tensor hinge;        // [Delta - E(x, F) + E(x, y)]_+
  Tensor perceptron;   // [-E(x, A) + E(x, y)]_+
  Tensor loss;         // hinge + lambda * perceptron
};

// The inference networks are evaluated without recording, so gradients reach
// the energy parameters only.
ThetaTerms theta_terms(const Sentence& s, const EnergyModel& model,
                       const InferenceNetworkPair& nets, double lambda);
// Mean over the batch of theta_terms(...).loss.
Tensor theta_loss(std::span<const Sentence> batch, const EnergyModel& model,
                  const InferenceNetworkPair& nets, const TrainConfig& cfg);

struct PsiPhiTerms {
  Tensor cost;      // Delta(F(x), y)
  Tensor energy_f;  // E(x, F(x))
  Tensor energy_a;  // E(x, A(x))
  Tensor token_ce;  // l_token(y, A(x))
  Tensor objective; // Delta - E(x, F) - lambda E(x, A) - tau l_token, to maximize
};

// Unary scores are computed without recording. The structured term is
// applied to F(x) and A(x) on the graph, so the caller holds the energy
// parameters in a FreezeScope through backward to keep gradients off Theta.
PsiPhiTerms psi_phi_terms(const Sentence& s, const EnergyModel& model,
                          const InferenceNetworkPair& nets, double lambda, double tau);
// Mean over the batch of the objective (to be maximized).
Tensor psi_phi_loss(std::span<const Sentence> batch, const EnergyModel& model,
                    const InferenceNetworkPair& nets, const TrainConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double theta_loss = 0.0;  // mean per-sentence training loss over the epoch
  double infnet_obj = 0.0;
  double dev_metric = 0.0;
  double seconds = 0.0;

  std::string json_line() const;  // {"epoch":..,"theta_loss":..,..}
};

struct AlternatingStates {
  OptimizerState energy;
  OptimizerState infnet;

  static AlternatingStates create(const EnergyModel& model, const InferenceNetworkPair& nets);
};

// Shuffles the corpus with `rng`, then for every batch takes one (Phi, Psi)
// step followed by one Theta step. dev_metric is left for the caller.
EpochMetrics alternating_train_epoch(const TaggedCorpus& corpus, EnergyModel& model,
                                     InferenceNetworkPair& nets, const TrainConfig& cfg,
                                     AlternatingStates& states, Rng& rng);

// One epoch of token cross-entropy on a stand-alone network. Returns the mean
// per-sentence loss.
double local_train_epoch(const TaggedCorpus& corpus, InferenceNetwork& net,
                         const TrainConfig& cfg, const OptimizerSpec& spec, OptimizerState& state,
                         Rng& rng);

// BiLSTM-CRF baseline: an energy model with a linear-chain term trained by
// exact negative log-likelihood. Returns the mean per-sentence NLL.
double crf_train_epoch(const TaggedCorpus& corpus, EnergyModel& model, const TrainConfig& cfg,
                       OptimizerState& state, Rng& rng);
// Viterbi decode of a linear-chain energy model.
std::vector<int> crf_decode(const EnergyModel& model, std::span<const int> tokens);

struct EarlyStopDecision {
  bool stop = false;
  int best_epoch = 0;  // 1-based; 0 for an empty history
  int stale = 0;       // epochs since best
};

// history[i] is the dev metric after epoch i + 1. Stops once the last
// `patience` epochs all failed to beat the best; best = highest metric, ties
// to the earlier epoch.
EarlyStopDecision early_stop(std::span<const double> history, int patience);

// Dev metric of a decoder over a corpus, "acc" or "f1".
double dev_metric(const TaggedCorpus& corpus, const std::string& metric,
                  const std::function<std::vector<int>(std::span<const int>)>& decode);

}  // namespace seqinf
