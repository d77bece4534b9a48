#include "seqinf/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "seqinf/errors.h"
#include "seqinf/evalviz.h"
#include "seqinf/exact_inference.h"

namespace seqinf {

// --- Optimizers -------------------------------------------------------------------

OptimizerSpec OptimizerSpec::adam(double lr) {
  OptimizerSpec s;
  s.kind = Kind::kAdam;
  s.lr = lr;
  return s;
}

OptimizerSpec OptimizerSpec::sgd_momentum(double lr, double momentum) {
  OptimizerSpec s;
  s.kind = Kind::kSgdMomentum;
  s.lr = lr;
  s.momentum = momentum;
  return s;
}

void OptimizerSpec::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optimizer lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("optimizer eps must be positive");
}

std::string optimizer_kind_name(OptimizerSpec::Kind kind) {
  return kind == OptimizerSpec::Kind::kAdam ? "adam" : "sgd";
}

OptimizerSpec::Kind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerSpec::Kind::kAdam;
  if (name == "sgd") return OptimizerSpec::Kind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

OptimizerState OptimizerState::for_params(const ParamList& params) {
  OptimizerState s;
  for (const NamedParam& p : params) {
    s.first.emplace_back(p.tensor.size(), 0.0);
    s.second.emplace_back(p.tensor.size(), 0.0);
  }
  return s;
}

void optimizer_step(const ParamList& params, OptimizerState& state, const OptimizerSpec& spec) {
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ContractError("optimizer_step: state holds " + std::to_string(state.first.size()) +
                        " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (size_t k = 0; k < params.size(); ++k) {
    const Tensor& t = params[k].tensor;
    if (state.first[k].size() != t.size()) {
      throw ContractError("optimizer_step: buffer size mismatch for " + params[k].name);
    }
    const auto g = t.grad();
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("non-finite gradient " + std::to_string(g[i]) + " in parameter " +
                           params[k].name + " at entry " + std::to_string(i));
      }
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(spec.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(spec.beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    const auto g = t.grad();
    if (g.empty()) continue;
    auto p = t.mutable_data();
    auto& m = state.first[k];
    auto& v = state.second[k];
    if (spec.kind == OptimizerSpec::Kind::kSgdMomentum) {
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = spec.momentum * m[i] + g[i];
        p[i] = round_param(p[i] - spec.lr * m[i]);
      }
    } else {
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = spec.beta1 * m[i] + (1.0 - spec.beta1) * g[i];
        v[i] = spec.beta2 * v[i] + (1.0 - spec.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] = round_param(p[i] - spec.lr * mhat / (std::sqrt(vhat) + spec.eps));
      }
    }
  }
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(tau >= 0.0)) throw ConfigError("tau must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (dev_metric != "acc" && dev_metric != "f1") {
    throw ConfigError("dev_metric must be acc or f1, got '" + dev_metric + "'");
  }
  if (warm_start_epochs < 0) throw ConfigError("warm_start_epochs must be non-negative");
  energy_optimizer.validate();
  infnet_optimizer.validate();
}

// --- Networks -------------------------------------------------------------------

InferenceNetworkPair InferenceNetworkPair::create(const InferenceNetworkShape& shape, Rng& rng) {
  InferenceNetworkPair p;
  p.cost_augmented = InferenceNetwork(shape, rng);
  p.test_time = InferenceNetwork(shape, rng);
  return p;
}

ParamList InferenceNetworkPair::params() const {
  ParamList out;
  append_params(out, "F.", cost_augmented.params());
  append_params(out, "A.", test_time.params());
  return out;
}

ParamList InferenceNetworkPair::state() const {
  ParamList out;
  append_params(out, "F.", cost_augmented.state());
  append_params(out, "A.", test_time.state());
  return out;
}

// --- Losses ---------------------------------------------------------------------

namespace {

void require_one_hot(const Tensor& pred, const Tensor& gold, const char* who) {
  if (pred.rank() != 2 || pred.shape() != gold.shape()) {
    throw ContractError(std::string(who) + ": prediction " + shape_string(pred.shape()) +
                        " vs gold " + shape_string(gold.shape()));
  }
  const int cols = gold.dim(1);
  const auto g = gold.data();
  for (int t = 0; t < gold.dim(0); ++t) {
    int ones = 0;
    for (int j = 0; j < cols; ++j) {
      const double v = g[static_cast<size_t>(t) * cols + j];
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) {
      throw ContractError(std::string(who) + ": gold row " + std::to_string(t) + " is not one-hot");
    }
  }
}

}  // namespace

Tensor hamming_cost(const Tensor& pred, const Tensor& gold) {
  require_one_hot(pred, gold, "hamming_cost");
  return add_scalar(-sum(pred * gold), static_cast<double>(pred.dim(0)));
}

Tensor token_ce_loss(const Tensor& pred, const Tensor& gold) {
  require_one_hot(pred, gold, "token_ce_loss");
  return -sum(gold * log(pred, kLogFloor));
}

ThetaTerms theta_terms(const Sentence& s, const EnergyModel& model,
                       const InferenceNetworkPair& nets, double lambda) {
  Tensor yf, ya;
  {
    NoGradScope no_grad;
    yf = nets.cost_augmented.forward(s.tokens);
    ya = nets.test_time.forward(s.tokens);
  }
  const Tensor gold = one_hot(s.labels, model.shape().num_labels);
  const Tensor scores = model.unary_scores(s.tokens);
  ThetaTerms t;
  t.cost = hamming_cost(yf, gold);
  t.energy_gold = model.energy_from_scores(scores, gold);
  t.energy_f = model.energy_from_scores(scores, yf);
  t.energy_a = model.energy_from_scores(scores, ya);
  t.hinge = relu(t.cost - t.energy_f + t.energy_gold);
  t.perceptron = relu(t.energy_gold - t.energy_a);
  t.loss = t.hinge + lambda * t.perceptron;
  return t;
}

Tensor theta_loss(std::span<const Sentence> batch, const EnergyModel& model,
                  const InferenceNetworkPair& nets, const TrainConfig& cfg) {
  if (batch.empty()) throw ContractError("theta_loss: empty batch");
  Tensor total;
  for (const Sentence& s : batch) {
    Tensor l = theta_terms(s, model, nets, cfg.lambda).loss;
    total = total.defined() ? total + l : l;
  }
  return (1.0 / static_cast<double>(batch.size())) * total;
}

PsiPhiTerms psi_phi_terms(const Sentence& s, const EnergyModel& model,
                          const InferenceNetworkPair& nets, double lambda, double tau) {
  Tensor scores;
  {
    NoGradScope no_grad;
    scores = model.unary_scores(s.tokens);
  }
  const Tensor gold = one_hot(s.labels, model.shape().num_labels);
  const Tensor yf = nets.cost_augmented.forward(s.tokens);
  const Tensor ya = nets.test_time.forward(s.tokens);
  PsiPhiTerms t;
  t.cost = hamming_cost(yf, gold);
  t.energy_f = model.energy_from_scores(scores, yf);
  t.energy_a = model.energy_from_scores(scores, ya);
  t.token_ce = token_ce_loss(ya, gold);
  t.objective = t.cost - t.energy_f - lambda * t.energy_a - tau * t.token_ce;
  return t;
}

Tensor psi_phi_loss(std::span<const Sentence> batch, const EnergyModel& model,
                    const InferenceNetworkPair& nets, const TrainConfig& cfg) {
  if (batch.empty()) throw ContractError("psi_phi_loss: empty batch");
  Tensor total;
  for (const Sentence& s : batch) {
    Tensor o = psi_phi_terms(s, model, nets, cfg.lambda, cfg.tau).objective;
    total = total.defined() ? total + o : o;
  }
  return (1.0 / static_cast<double>(batch.size())) * total;
}

// --- Epochs ---------------------------------------------------------------------

std::string EpochMetrics::json_line() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["theta_loss"] = theta_loss;
  j["infnet_obj"] = infnet_obj;
  j["dev_metric"] = dev_metric;
  j["seconds"] = seconds;
  return j.dump();
}

AlternatingStates AlternatingStates::create(const EnergyModel& model,
                                            const InferenceNetworkPair& nets) {
  return {OptimizerState::for_params(model.params()), OptimizerState::for_params(nets.params())};
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<size_t> shuffled_order(size_t n, Rng& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  rng.shuffle(order);
  return order;
}

double elapsed(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Calls `per_batch` on consecutive batches of a shuffled order and sums its
// return values.
template <typename Fn>
double run_batches(const TaggedCorpus& corpus, const TrainConfig& cfg, Rng& rng, Fn&& per_batch) {
  const auto order = shuffled_order(corpus.sentences.size(), rng);
  double total = 0.0;
  std::vector<Sentence> batch;
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
    const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
    batch.clear();
    for (size_t i = begin; i < end; ++i) batch.push_back(corpus.sentences[order[i]]);
    total += per_batch(std::span<const Sentence>(batch));
  }
  return total;
}

void require_nonempty(const TaggedCorpus& corpus, const char* who) {
  if (corpus.sentences.empty()) throw DataError(std::string(who) + ": empty training corpus");
}

}  // namespace

EpochMetrics alternating_train_epoch(const TaggedCorpus& corpus, EnergyModel& model,
                                     InferenceNetworkPair& nets, const TrainConfig& cfg,
                                     AlternatingStates& states, Rng& rng) {
  require_nonempty(corpus, "alternating_train_epoch");
  const auto start = Clock::now();
  const ParamList theta = model.params();
  const ParamList phi_psi = nets.params();
  double theta_sum = 0.0;
  double obj_sum = 0.0;
  run_batches(corpus, cfg, rng, [&](std::span<const Sentence> batch) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    zero_grads(phi_psi);
    {
      FreezeScope frozen(theta);
      for (const Sentence& s : batch) {
        Tape tape;
        PsiPhiTerms t = psi_phi_terms(s, model, nets, cfg.lambda, cfg.tau);
        obj_sum += t.objective.item();
        tape.backward(t.objective, -scale);
      }
    }
    optimizer_step(phi_psi, states.infnet, cfg.infnet_optimizer);
    zero_grads(theta);
    {
      FreezeScope frozen(phi_psi);
      for (const Sentence& s : batch) {
        Tape tape;
        ThetaTerms t = theta_terms(s, model, nets, cfg.lambda);
        theta_sum += t.loss.item();
        tape.backward(t.loss, scale);
      }
    }
    optimizer_step(theta, states.energy, cfg.energy_optimizer);
    return 0.0;
  });
  EpochMetrics m;
  const double n = static_cast<double>(corpus.sentences.size());
  m.theta_loss = theta_sum / n;
  m.infnet_obj = obj_sum / n;
  m.seconds = elapsed(start);
  return m;
}

double local_train_epoch(const TaggedCorpus& corpus, InferenceNetwork& net,
                         const TrainConfig& cfg, const OptimizerSpec& spec, OptimizerState& state,
                         Rng& rng) {
  require_nonempty(corpus, "local_train_epoch");
  const ParamList params = net.params();
  const double total = run_batches(corpus, cfg, rng, [&](std::span<const Sentence> batch) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    double sum_loss = 0.0;
    zero_grads(params);
    for (const Sentence& s : batch) {
      Tape tape;
      Tensor loss = token_ce_loss(net.forward(s.tokens), one_hot(s.labels, net.shape().num_labels));
      sum_loss += loss.item();
      tape.backward(loss, scale);
    }
    optimizer_step(params, state, spec);
    return sum_loss;
  });
  return total / static_cast<double>(corpus.sentences.size());
}

namespace {

const LinearChainEnergy& require_chain(const EnergyModel& model, const char* who) {
  const auto* lc = std::get_if<LinearChainEnergy>(&model.structured());
  if (lc == nullptr) {
    throw ContractError(std::string(who) + ": needs a linear-chain energy, got " +
                        structured_kind(model.structured()));
  }
  return *lc;
}

}  // namespace

double crf_train_epoch(const TaggedCorpus& corpus, EnergyModel& model, const TrainConfig& cfg,
                       OptimizerState& state, Rng& rng) {
  require_nonempty(corpus, "crf_train_epoch");
  const LinearChainEnergy& lc = require_chain(model, "crf_train_epoch");
  const ParamList params = model.params();
  const double total = run_batches(corpus, cfg, rng, [&](std::span<const Sentence> batch) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    double sum_loss = 0.0;
    zero_grads(params);
    for (const Sentence& s : batch) {
      Tape tape;
      Tensor loss = crf_nll_loss(model.unary_scores(s.tokens), lc.w, s.labels);
      sum_loss += loss.item();
      tape.backward(loss, scale);
    }
    optimizer_step(params, state, cfg.energy_optimizer);
    return sum_loss;
  });
  return total / static_cast<double>(corpus.sentences.size());
}

std::vector<int> crf_decode(const EnergyModel& model, std::span<const int> tokens) {
  const LinearChainEnergy& lc = require_chain(model, "crf_decode");
  NoGradScope no_grad;
  return viterbi_decode(ChainPotentials::from_tensors(model.unary_scores(tokens), lc.w)).labels;
}

// --- Early stopping and dev metrics ---------------------------------------------

EarlyStopDecision early_stop(std::span<const double> history, int patience) {
  EarlyStopDecision d;
  if (history.empty()) return d;
  size_t best = 0;
  for (size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[best]) best = i;
  }
  d.best_epoch = static_cast<int>(best) + 1;
  d.stale = static_cast<int>(history.size() - 1 - best);
  d.stop = d.stale >= patience;
  return d;
}

double dev_metric(const TaggedCorpus& corpus, const std::string& metric,
                  const std::function<std::vector<int>(std::span<const int>)>& decode) {
  if (corpus.sentences.empty()) throw DataError("dev_metric: empty corpus");
  std::vector<std::vector<int>> pred, gold;
  pred.reserve(corpus.sentences.size());
  for (const Sentence& s : corpus.sentences) {
    pred.push_back(decode(s.tokens));
    gold.push_back(s.labels);
  }
  if (metric == "acc") {
    return token_accuracy(pred, gold, corpus.labels.id(LabelSet::kTruncated));
  }
  if (metric == "f1") {
    std::vector<std::vector<std::string>> p, g;
    for (size_t i = 0; i < pred.size(); ++i) {
      p.push_back(corpus.label_names(pred[i]));
      g.push_back(corpus.label_names(gold[i]));
    }
    return span_f1(p, g).f1;
  }
  throw ConfigError("unknown dev metric '" + metric + "'");
}

}  // namespace seqinf
