#include "seqinf/encoders.h"

#include <cmath>
#include <istream>
#include <sstream>
#include <unordered_map>

#include "seqinf/errors.h"

namespace seqinf {

// --- EmbeddingTable -------------------------------------------------------------

EmbeddingTable EmbeddingTable::random(int vocab_size, int dim, Rng& rng) {
  if (vocab_size < 1 || dim < 1) throw ContractError("embedding table needs positive sizes");
  EmbeddingTable t;
  t.vocab_size_ = vocab_size;
  t.dim_ = dim;
  t.trainable_ = true;
  t.matrix_ = uniform_param({vocab_size, dim}, 0.1, rng);
  return t;
}

EmbeddingTable EmbeddingTable::load_text(std::istream& in, const std::vector<std::string>& words,
                                         Rng& rng) {
  if (words.empty()) throw ContractError("embedding vocabulary is empty");
  std::unordered_map<std::string, int> id_of;
  for (size_t i = 1; i < words.size(); ++i) id_of.emplace(words[i], static_cast<int>(i));

  const int vocab = static_cast<int>(words.size());
  int dim = 0;
  std::vector<double> values;
  std::vector<int> row_of(vocab, 0);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<double> vec;
    std::string tok;
    while (fields >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw DataError("embeddings line " + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
      vec.push_back(v);
    }
    if (vec.empty()) {
      throw DataError("embeddings line " + std::to_string(line_no) + ": no vector");
    }
    if (dim == 0) {
      dim = static_cast<int>(vec.size());
      values.assign(static_cast<size_t>(vocab) * dim, 0.0);
    } else if (static_cast<int>(vec.size()) != dim) {
      throw DataError("embeddings line " + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, got " + std::to_string(vec.size()));
    }
    auto it = id_of.find(word);
    if (it == id_of.end()) continue;
    const int id = it->second;
    row_of[id] = id;
    for (int j = 0; j < dim; ++j) values[static_cast<size_t>(id) * dim + j] = round_param(vec[j]);
  }
  if (dim == 0) throw DataError("embeddings file contains no vectors");

  EmbeddingTable t;
  t.vocab_size_ = vocab;
  t.dim_ = dim;
  t.trainable_ = false;
  t.matrix_ = Tensor::from({vocab, dim}, std::move(values));
  t.unk_ = uniform_param({1, dim}, 0.1, rng);
  for (int id = 1; id < vocab; ++id) t.words_from_file_ += row_of[id] != 0;
  t.row_of_ = std::move(row_of);
  return t;
}

EmbeddingTable EmbeddingTable::restore(Tensor matrix, Tensor unk, std::vector<int> row_of) {
  if (matrix.rank() != 2 || unk.size() != static_cast<size_t>(matrix.dim(1)) ||
      row_of.size() != static_cast<size_t>(matrix.dim(0))) {
    throw ShapeError("embedding restore: matrix " + shape_string(matrix.shape()) + ", unk " +
                     shape_string(unk.shape()) + ", " + std::to_string(row_of.size()) + " rows mapped");
  }
  EmbeddingTable t;
  t.vocab_size_ = matrix.dim(0);
  t.dim_ = matrix.dim(1);
  t.trainable_ = false;
  t.matrix_ = matrix.clone(false);
  t.unk_ = reshape(unk, {1, t.dim_}).clone(true);
  for (int id = 0; id < t.vocab_size_; ++id) {
    if (row_of[id] != 0 && row_of[id] != id) throw ContractError("embedding restore: bad row map");
    t.words_from_file_ += id > 0 && row_of[id] != 0;
  }
  t.row_of_ = std::move(row_of);
  return t;
}

EmbeddingTable EmbeddingTable::clone() const {
  EmbeddingTable t = *this;
  if (matrix_.defined()) t.matrix_ = matrix_.clone(trainable_);
  if (unk_.defined()) t.unk_ = unk_.clone(true);
  return t;
}

Tensor EmbeddingTable::lookup(std::span<const int> ids) const {
  if (trainable_) return gather_rows(matrix_, ids);
  std::vector<int> rows(ids.size());
  std::vector<double> is_unk(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab_size_) {
      throw ContractError("token id " + std::to_string(ids[i]) + " outside vocabulary");
    }
    rows[i] = row_of_[ids[i]];
    is_unk[i] = rows[i] == 0 ? 1.0 : 0.0;
  }
  const int n = static_cast<int>(ids.size());
  return gather_rows(matrix_, rows) + matmul(Tensor::from({n, 1}, std::move(is_unk)), unk_);
}

ParamList EmbeddingTable::params() const {
  if (trainable_) return {{"embeddings", matrix_}};
  return {{"unk", unk_}};
}

ParamList EmbeddingTable::state() const {
  if (trainable_) return params();
  std::vector<double> map(row_of_.begin(), row_of_.end());
  return {{"unk", unk_},
          {"frozen", matrix_},
          {"row_map", Tensor::from({vocab_size_}, std::move(map))}};
}

// --- LSTM -------------------------------------------------------------------------

LstmCell LstmCell::create(int input_dim, int hidden_dim, Rng& rng) {
  if (input_dim < 1 || hidden_dim < 1) throw ContractError("LSTM needs positive sizes");
  const double r = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  LstmCell cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  cell.w_input = uniform_param({input_dim, 4 * hidden_dim}, r, rng);
  cell.w_recurrent = uniform_param({hidden_dim, 4 * hidden_dim}, r, rng);
  cell.bias = zero_param({4 * hidden_dim});
  return cell;
}

ParamList LstmCell::params() const {
  return {{"w_input", w_input}, {"w_recurrent", w_recurrent}, {"bias", bias}};
}

namespace {

// Gate pre-activations [1, 4h] and previous cell state [1, h] -> (h', c').
std::pair<Tensor, Tensor> lstm_update(const Tensor& gates, const Tensor& c, int h) {
  Tensor i = sigmoid(slice_cols(gates, 0, h));
  Tensor f = sigmoid(slice_cols(gates, h, 2 * h));
  Tensor g = tanh(slice_cols(gates, 2 * h, 3 * h));
  Tensor o = sigmoid(slice_cols(gates, 3 * h, 4 * h));
  Tensor c_next = f * c + i * g;
  Tensor h_next = o * tanh(c_next);
  return {h_next, c_next};
}

}  // namespace

std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                         const LstmCell& cell) {
  const int dh = cell.hidden_dim;
  if (static_cast<int>(x.size()) != cell.input_dim || static_cast<int>(h.size()) != dh ||
      static_cast<int>(c.size()) != dh) {
    throw ShapeError("lstm_cell_step: x " + shape_string(x.shape()) + ", h " +
                     shape_string(h.shape()) + ", c " + shape_string(c.shape()) +
                     " for cell " + std::to_string(cell.input_dim) + "->" + std::to_string(dh));
  }
  Tensor x_row = reshape(x, {1, cell.input_dim});
  Tensor h_row = reshape(h, {1, dh});
  Tensor c_row = reshape(c, {1, dh});
  Tensor gates =
      add_row(matmul(x_row, cell.w_input) + matmul(h_row, cell.w_recurrent), cell.bias);
  auto [h_next, c_next] = lstm_update(gates, c_row, dh);
  return {reshape(h_next, h.shape()), reshape(c_next, h.shape())};
}

Tensor lstm_sequence(const Tensor& inputs, const LstmCell& cell, bool reverse) {
  if (inputs.rank() != 2 || inputs.dim(1) != cell.input_dim) {
    throw ShapeError("lstm_sequence: inputs " + shape_string(inputs.shape()) +
                     " for input dim " + std::to_string(cell.input_dim));
  }
  const int steps = inputs.dim(0);
  const int dh = cell.hidden_dim;
  // Input projections for all steps at once.
  Tensor projected = add_row(matmul(inputs, cell.w_input), cell.bias);
  Tensor h = Tensor::zeros({1, dh});
  Tensor c = Tensor::zeros({1, dh});
  std::vector<Tensor> outputs(steps);
  for (int k = 0; k < steps; ++k) {
    const int t = reverse ? steps - 1 - k : k;
    Tensor gates = slice_rows(projected, t, t + 1) + matmul(h, cell.w_recurrent);
    std::tie(h, c) = lstm_update(gates, c, dh);
    outputs[t] = h;
  }
  return concat(outputs, 0);
}

BiLstmEncoder BiLstmEncoder::create(int input_dim, int hidden_dim, int num_layers, Rng& rng) {
  if (num_layers < 1) throw ContractError("BiLSTM needs at least one layer");
  BiLstmEncoder enc;
  enc.input_dim_ = input_dim;
  enc.hidden_dim_ = hidden_dim;
  int in = input_dim;
  for (int l = 0; l < num_layers; ++l) {
    LstmCell fwd = LstmCell::create(in, hidden_dim, rng);
    LstmCell bwd = LstmCell::create(in, hidden_dim, rng);
    enc.layers_.emplace_back(std::move(fwd), std::move(bwd));
    in = 2 * hidden_dim;
  }
  return enc;
}

Tensor BiLstmEncoder::encode(const Tensor& inputs) const {
  Tensor x = inputs;
  for (const auto& [fwd, bwd] : layers_) {
    x = concat({lstm_sequence(x, fwd, false), lstm_sequence(x, bwd, true)}, 1);
  }
  return x;
}

ParamList BiLstmEncoder::params() const {
  ParamList out;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    append_params(out, prefix + "fwd.", layers_[l].first.params());
    append_params(out, prefix + "bwd.", layers_[l].second.params());
  }
  return out;
}

Tensor bilstm_encode(std::span<const int> tokens, const EmbeddingTable& emb,
                     const BiLstmEncoder& enc) {
  if (tokens.empty()) throw ContractError("bilstm_encode: empty token sequence");
  return enc.encode(emb.lookup(tokens));
}

// --- MLP ------------------------------------------------------------------------

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return x;
    case Activation::kTanh:
      return tanh(x);
    case Activation::kRelu:
      return relu(x);
    case Activation::kSigmoid:
      return sigmoid(x);
  }
  return x;
}

Mlp Mlp::create(const std::vector<int>& sizes, Activation hidden_activation,
                Activation output_activation, Rng& rng) {
  if (sizes.size() < 2) throw ContractError("MLP needs input and output sizes");
  Mlp mlp;
  mlp.sizes_ = sizes;
  mlp.hidden_ = hidden_activation;
  mlp.output_ = output_activation;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double r = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    mlp.weights_.push_back(uniform_param({sizes[l], sizes[l + 1]}, r, rng));
    mlp.biases_.push_back(zero_param({sizes[l + 1]}));
  }
  return mlp;
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (size_t l = 0; l < weights_.size(); ++l) {
    h = add_row(matmul(h, weights_[l]), biases_[l]);
    h = activate(h, l + 1 == weights_.size() ? output_ : hidden_);
  }
  return h;
}

ParamList Mlp::params() const {
  ParamList out;
  for (size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({"w" + std::to_string(l), weights_[l]});
    out.push_back({"b" + std::to_string(l), biases_[l]});
  }
  return out;
}

// --- Heads and inference networks -------------------------------------------------

ClassifierHead ClassifierHead::create(int num_labels, int feature_dim, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  return {uniform_param({num_labels, feature_dim}, r, rng), zero_param({num_labels})};
}

ParamList ClassifierHead::params() const { return {{"weight", weight}, {"bias", bias}}; }

Tensor head_logits(const Tensor& features, const ClassifierHead& head) {
  return add_row(matmul_nt(features, head.weight), head.bias);
}

Tensor classify_positions(const Tensor& features, const ClassifierHead& head) {
  return softmax(head_logits(features, head), 1);
}

InferenceNetwork::InferenceNetwork(const InferenceNetworkShape& shape, Rng& rng)
    : InferenceNetwork(shape, EmbeddingTable::random(shape.vocab_size, shape.embed_dim, rng),
                       rng) {}

InferenceNetwork::InferenceNetwork(const InferenceNetworkShape& shape, EmbeddingTable embeddings,
                                   Rng& rng)
    : shape_(shape), embeddings_(std::move(embeddings)) {
  shape_.embed_dim = embeddings_.dim();
  encoder_ = BiLstmEncoder::create(shape_.embed_dim, shape_.hidden_dim, shape_.num_layers, rng);
  head_ = ClassifierHead::create(shape_.num_labels, encoder_.output_dim(), rng);
}

Tensor InferenceNetwork::forward(std::span<const int> tokens) const {
  return classify_positions(bilstm_encode(tokens, embeddings_, encoder_), head_);
}

std::vector<int> InferenceNetwork::predict(std::span<const int> tokens) const {
  NoGradScope no_grad;
  return argmax_rows(forward(tokens));
}

ParamList InferenceNetwork::params() const {
  ParamList out;
  append_params(out, "emb.", embeddings_.params());
  append_params(out, "enc.", encoder_.params());
  append_params(out, "head.", head_.params());
  return out;
}

ParamList InferenceNetwork::state() const {
  ParamList out;
  append_params(out, "emb.", embeddings_.state());
  append_params(out, "enc.", encoder_.params());
  append_params(out, "head.", head_.params());
  return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  const int rows = scores.rows(), cols = scores.cols();
  std::vector<int> out(rows);
  const auto v = scores.data();
  for (int r = 0; r < rows; ++r) {
    int best = 0;
    for (int j = 1; j < cols; ++j) {
      if (v[static_cast<size_t>(r) * cols + j] > v[static_cast<size_t>(r) * cols + best]) best = j;
    }
    out[r] = best;
  }
  return out;
}

}  // namespace seqinf
