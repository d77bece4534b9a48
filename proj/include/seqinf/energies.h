#pragma once

// Energy functions over relaxed label sequences.
//
// A relaxed label sequence is a [T, L] tensor whose rows are distributions
// over labels; one-hot rows are discrete labels. All energies here accept
// any [T, L] tensor and are differentiable in both the labels and their
// parameters. Structured terms are scores (higher is better); the full
// energy of a labelling is
//
//   E(x, y) = -( sum_t sum_j y[t,j] * (U_j . b(x,t)) + structured(y) )
//
// so lower energy is better. Terms that reference a position before the
// first one are skipped, and windowed terms contribute nothing when the
// sequence is shorter than the window.

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "seqinf/encoders.h"
#include "seqinf/params.h"
#include "seqinf/rng.h"
#include "seqinf/tensor.h"

namespace seqinf {

struct RelaxedLabelSequence {
  Tensor y;  // [T, L]
  bool discrete = false;

  static RelaxedLabelSequence one_hot(std::span<const int> labels, int num_labels);
  static RelaxedLabelSequence uniform(int length, int num_labels);
  // Wraps `y` after checking rows are non-negative and sum to one within
  // `tol`; throws ContractError otherwise.
  static RelaxedLabelSequence checked(Tensor y, double tol = 1e-6);

  int length() const { return y.dim(0); }
  int num_labels() const { return y.dim(1); }
};

Tensor one_hot(std::span<const int> labels, int num_labels);

struct UnaryEnergy {
  Tensor u;  // [L, d]; row j is U_j
};

struct LinearChainEnergy {
  Tensor w;  // [L, L]; rows index the earlier label
};

struct SkipChainEnergy {
  std::vector<Tensor> w;  // w[i-1] scores labels i positions apart
  int window() const { return static_cast<int>(w.size()); }
};

// High-order term scoring windows of M+1 labels through a tensor derived
// from label embeddings: W[j0..jM] = v . LayerNorm(z + MLP(z)), z the
// concatenation of the M+1 label embeddings.
struct VkpEnergy {
  int order = 2;               // M
  Tensor label_embeddings;     // [L, n_l]
  Tensor v;                    // [(M+1) n_l]
  Mlp mlp;                     // (M+1) n_l -> (M+1) n_l
  Tensor norm_gain;            // [(M+1) n_l]
  Tensor norm_bias;            // [(M+1) n_l]
  int num_labels() const { return label_embeddings.dim(0); }
};

// Several VKP terms of different orders whose energies add up.
struct VkpSumEnergy {
  std::vector<VkpEnergy> terms;
};

struct CnnEnergy {
  int order = 2;   // M; filters span M+1 labels
  Tensor filters;  // [N, L (M+1)]; entry (n, p L + j) weighs label j at window offset p
  Tensor bias;     // [N]
};

// Tag language model: an LSTM over expected label embeddings predicting the
// next label. In whole-sequence mode a learned start vector is consumed
// first and every position is scored.
struct TlmEnergy {
  int order = 2;  // M (ignored in whole-sequence mode)
  bool whole_sequence = true;
  Tensor label_embeddings;  // [L, n_e]
  Tensor start;             // [1, n_e]
  LstmCell cell;
  ClassifierHead output;    // hidden -> L logits
};

// Single-head scaled dot-product self-attention over label windows.
struct SelfAttentionEnergy {
  int order = 2;  // M
  bool whole_sequence = false;
  Tensor query;   // [L, L]
  Tensor key;     // [L, L]
  Tensor value;   // [L, L]
};

// Skip-chain with W_i = S D_i^T, evaluated without forming W_i.
struct FullyConnectedEnergy {
  Tensor s;               // [L, d]
  std::vector<Tensor> d;  // M tensors [L, d]
  int window() const { return static_cast<int>(d.size()); }
};

Tensor unary_energy(const Tensor& features, const Tensor& y, const UnaryEnergy& u);
Tensor linear_chain_energy(const Tensor& y, const LinearChainEnergy& lc);
Tensor skip_chain_energy(const Tensor& y, const SkipChainEnergy& sc);

// Vectorized outer product of the inputs: entry
// (((i1 * n2 + i2) * n3 + i3) ...) = v1[i1] v2[i2] v3[i3] ... Result is a
// vector. Throws ContractError on an empty list.
Tensor kron_product(const std::vector<Tensor>& vectors);

// Single tensor entry W[indices[0], ..., indices[M]].
double vkp_entry(std::span<const int> indices, const VkpEnergy& vkp);
// The full tensor reshaped to [L^M, L]; row = flattened prefix j0..j(M-1).
Tensor vkp_tensor(const VkpEnergy& vkp);
Tensor vkp_energy(const Tensor& y, const VkpEnergy& vkp);

Tensor cnn_energy(const Tensor& y, const CnnEnergy& cnn);
Tensor tlm_energy(const Tensor& y, const TlmEnergy& tlm);
Tensor self_attention_energy(const Tensor& y, const SelfAttentionEnergy& sa);
Tensor fully_connected_energy(const Tensor& y, const FullyConnectedEnergy& fc);

using StructuredTerm = std::variant<LinearChainEnergy, SkipChainEnergy, VkpEnergy, VkpSumEnergy,
                                    CnnEnergy, TlmEnergy, SelfAttentionEnergy,
                                    FullyConnectedEnergy>;

Tensor structured_energy(const Tensor& y, const StructuredTerm& term);
ParamList structured_params(const StructuredTerm& term);
std::string structured_kind(const StructuredTerm& term);

// Hyperparameters for building a structured term. Window `order` means M:
// the number of earlier labels each term looks back over.
struct StructuredConfig {
  std::string kind = "linear-chain";  // linear-chain, skip-chain, vkp, cnn, tlm,
                                      // self-attention, fully-connected
  int order = 1;
  bool whole_sequence = false;        // tlm / self-attention
  std::vector<int> vkp_orders;        // several VKP terms summed, overrides order
  int label_dim = 20;                 // n_l for VKP, n_e for TLM
  int filters = 50;
  int tlm_hidden = 100;
  int rank = 20;                      // fully-connected d
  double init_range = 0.01;           // pairwise matrices
};

StructuredTerm make_structured(const StructuredConfig& cfg, int num_labels, Rng& rng);

struct EnergyModelShape {
  int vocab_size = 0;
  int num_labels = 0;
  int embed_dim = 100;
  int hidden_dim = 100;
  int num_layers = 1;
};

// Parameters of the full energy: token encoder, unary weights and one
// structured term.
class EnergyModel {
 public:
  EnergyModel() = default;
  EnergyModel(const EnergyModelShape& shape, const StructuredConfig& cfg, Rng& rng);
  EnergyModel(const EnergyModelShape& shape, const StructuredConfig& cfg, EmbeddingTable emb,
              Rng& rng);

  // b(x, t) for every position: [T, d].
  Tensor features(std::span<const int> tokens) const;
  // U_j . b(x, t): [T, L].
  Tensor unary_scores(std::span<const int> tokens) const;
  // Energy from precomputed unary scores; lets callers share one encoder
  // pass across several labellings of the same sentence.
  Tensor energy_from_scores(const Tensor& scores, const Tensor& y) const;

  const EnergyModelShape& shape() const { return shape_; }
  const StructuredConfig& structured_config() const { return config_; }
  const EmbeddingTable& embeddings() const { return embeddings_; }
  const BiLstmEncoder& encoder() const { return encoder_; }
  const UnaryEnergy& unary() const { return unary_; }
  UnaryEnergy& unary() { return unary_; }
  const StructuredTerm& structured() const { return structured_; }
  StructuredTerm& structured() { return structured_; }

  ParamList params() const;
  ParamList state() const;

 private:
  EnergyModelShape shape_;
  StructuredConfig config_;
  EmbeddingTable embeddings_;
  BiLstmEncoder encoder_;
  UnaryEnergy unary_;
  StructuredTerm structured_;
};

// Throws ContractError when y and tokens differ in length.
Tensor total_energy(std::span<const int> tokens, const Tensor& y, const EnergyModel& model);

}  // namespace seqinf
