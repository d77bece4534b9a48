#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqinf/params.h"
#include "seqinf/rng.h"
#include "seqinf/tensor.h"

namespace seqinf {

// Token embedding table. Id 0 is the UNK row.
//
// A randomly initialized table is trained as a whole. A table loaded from a
// text file is frozen except for the UNK row, which is a separate learnable
// vector; vocabulary words missing from the file are routed to it.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  static EmbeddingTable random(int vocab_size, int dim, Rng& rng);

  // Reads `word v1 ... vdim` lines. `words[i]` is the vocabulary entry with
  // id i; words[0] is UNK. Throws DataError on ragged or non-numeric lines.
  static EmbeddingTable load_text(std::istream& in, const std::vector<std::string>& words,
                                  Rng& rng);
  // Frozen table from saved state: matrix [V, dim], UNK vector [1, dim] and
  // the id -> row map (row 0 routes to the UNK vector).
  static EmbeddingTable restore(Tensor matrix, Tensor unk, std::vector<int> row_of);
  // Deep copy with fresh parameter tensors.
  EmbeddingTable clone() const;

  Tensor lookup(std::span<const int> ids) const;

  int vocab_size() const { return vocab_size_; }
  int dim() const { return dim_; }
  bool trainable() const { return trainable_; }
  int words_from_file() const { return words_from_file_; }
  const Tensor& matrix() const { return matrix_; }
  // Learnable tensors only.
  ParamList params() const;
  // Everything needed to restore the table, frozen rows included.
  ParamList state() const;

 private:
  int vocab_size_ = 0;
  int dim_ = 0;
  bool trainable_ = true;
  int words_from_file_ = 0;
  Tensor matrix_;
  Tensor unk_;                // [1, dim], only for frozen tables
  std::vector<int> row_of_;   // vocabulary id -> matrix row, only for frozen tables
};

// Parameters of one LSTM cell. Gate blocks in the 4h-wide affine outputs are
// ordered input, forget, candidate, output.
struct LstmCell {
  int input_dim = 0;
  int hidden_dim = 0;
  Tensor w_input;      // [input_dim, 4h]
  Tensor w_recurrent;  // [h, 4h]
  Tensor bias;         // [4h]

  static LstmCell create(int input_dim, int hidden_dim, Rng& rng);
  ParamList params() const;
};

// One recurrence step: i,f,o = sigmoid(.), g = tanh(.), c' = f*c + i*g,
// h' = o*tanh(c'). `x` has input_dim entries, `h` and `c` hidden_dim entries
// (any shape); results have the shape of `h`.
std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                         const LstmCell& cell);

// Runs `cell` over the rows of `inputs` ([T, input_dim]), left to right or
// right to left, from a zero state. Row t of the result is the hidden state
// after consuming input t.
Tensor lstm_sequence(const Tensor& inputs, const LstmCell& cell, bool reverse);

class BiLstmEncoder {
 public:
  BiLstmEncoder() = default;
  static BiLstmEncoder create(int input_dim, int hidden_dim, int num_layers, Rng& rng);

  // [T, input_dim] -> [T, 2 * hidden_dim]; row t is [forward h_t ; backward h_t].
  Tensor encode(const Tensor& inputs) const;

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  int output_dim() const { return 2 * hidden_dim_; }
  ParamList params() const;

  // Direct access for tests that permute directions.
  std::vector<std::pair<LstmCell, LstmCell>>& layers() { return layers_; }
  const std::vector<std::pair<LstmCell, LstmCell>>& layers() const { return layers_; }

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  std::vector<std::pair<LstmCell, LstmCell>> layers_;
};

// Token ids -> BiLSTM features. Throws ContractError on an empty sequence.
Tensor bilstm_encode(std::span<const int> tokens, const EmbeddingTable& emb,
                     const BiLstmEncoder& enc);

enum class Activation { kIdentity, kTanh, kRelu, kSigmoid };

Activation parse_activation(const std::string& name);
Tensor activate(const Tensor& x, Activation act);

// Stack of affine layers; `hidden_activation` after every layer but the
// last, `output_activation` after the last.
class Mlp {
 public:
  Mlp() = default;
  static Mlp create(const std::vector<int>& sizes, Activation hidden_activation,
                    Activation output_activation, Rng& rng);

  // Rows of `x` ([n, sizes.front()]) -> [n, sizes.back()].
  Tensor forward(const Tensor& x) const;

  const std::vector<int>& sizes() const { return sizes_; }
  std::vector<Tensor>& weights() { return weights_; }
  std::vector<Tensor>& biases() { return biases_; }
  ParamList params() const;

 private:
  std::vector<int> sizes_;
  std::vector<Tensor> weights_;  // [in, out]
  std::vector<Tensor> biases_;   // [out]
  Activation hidden_ = Activation::kTanh;
  Activation output_ = Activation::kIdentity;
};

// Per-position affine scorer shared by local classifiers and inference
// networks: weight [L, d], bias [L].
struct ClassifierHead {
  Tensor weight;
  Tensor bias;

  static ClassifierHead create(int num_labels, int feature_dim, Rng& rng);
  int num_labels() const { return weight.dim(0); }
  ParamList params() const;
};

Tensor head_logits(const Tensor& features, const ClassifierHead& head);
// Row t = softmax(W b_t + bias); every row sums to one.
Tensor classify_positions(const Tensor& features, const ClassifierHead& head);

struct InferenceNetworkShape {
  int vocab_size = 0;
  int num_labels = 0;
  int embed_dim = 100;
  int hidden_dim = 100;
  int num_layers = 1;
};

// Maps a token sequence to a relaxed label sequence: embeddings, BiLSTM and
// a softmax head.
class InferenceNetwork {
 public:
  InferenceNetwork() = default;
  InferenceNetwork(const InferenceNetworkShape& shape, Rng& rng);
  InferenceNetwork(const InferenceNetworkShape& shape, EmbeddingTable embeddings, Rng& rng);

  // [T, L] label distributions.
  Tensor forward(std::span<const int> tokens) const;
  // Hard decode: per-position argmax, ties to the lowest label.
  std::vector<int> predict(std::span<const int> tokens) const;

  const InferenceNetworkShape& shape() const { return shape_; }
  const EmbeddingTable& embeddings() const { return embeddings_; }
  const BiLstmEncoder& encoder() const { return encoder_; }
  const ClassifierHead& head() const { return head_; }
  ParamList params() const;
  ParamList state() const;

 private:
  InferenceNetworkShape shape_;
  EmbeddingTable embeddings_;
  BiLstmEncoder encoder_;
  ClassifierHead head_;
};

std::vector<int> argmax_rows(const Tensor& scores);

}  // namespace seqinf
