#include "seqinf/energies.h"

#include <cmath>

#include "seqinf/errors.h"

namespace seqinf {
namespace {

Tensor zero_scalar() { return Tensor::scalar(0.0); }

// Sum of scalar tensors, recorded as a single node.
Tensor sum_scalars(const std::vector<Tensor>& parts) {
  if (parts.empty()) return zero_scalar();
  if (parts.size() == 1) return parts.front();
  return sum(concat(parts, 0));
}

void require_labels(const Tensor& y, int num_labels, const char* who) {
  if (y.rank() != 2 || y.dim(1) != num_labels) {
    throw ShapeError(std::string(who) + ": labels " + shape_string(y.shape()) + " for " +
                     std::to_string(num_labels) + " labels");
  }
}

// sum_i sum_t y_{t-i}^T W_i y_t over i = 1..|w|, skipping t - i < 1.
Tensor pairwise_energy(const Tensor& y, const std::vector<Tensor>& w, const char* who) {
  if (w.empty()) return zero_scalar();
  require_labels(y, w.front().dim(0), who);
  const int steps = y.dim(0);
  std::vector<Tensor> parts;
  for (int i = 1; i <= static_cast<int>(w.size()) && i < steps; ++i) {
    parts.push_back(
        sum(matmul(slice_rows(y, 0, steps - i), w[i - 1]) * slice_rows(y, i, steps)));
  }
  return sum_scalars(parts);
}

int ipow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Rows of LayerNorm(z + MLP(z)) . v for the given concatenated label
// embeddings z ([n, (M+1) n_l]); returns [n, 1].
Tensor vkp_scores(const Tensor& z, const VkpEnergy& vkp) {
  Tensor h = layer_norm(z + vkp.mlp.forward(z), vkp.norm_gain, vkp.norm_bias);
  return matmul(h, reshape(vkp.v, {static_cast<int>(vkp.v.size()), 1}));
}

}  // namespace

// --- Relaxed labels -------------------------------------------------------------

Tensor one_hot(std::span<const int> labels, int num_labels) {
  if (labels.empty()) throw ContractError("one_hot: empty label sequence");
  const int steps = static_cast<int>(labels.size());
  Tensor y = Tensor::zeros({steps, num_labels});
  auto data = y.mutable_data();
  for (int t = 0; t < steps; ++t) {
    if (labels[t] < 0 || labels[t] >= num_labels) {
      throw ContractError("one_hot: label " + std::to_string(labels[t]) + " out of range");
    }
    data[static_cast<size_t>(t) * num_labels + labels[t]] = 1.0;
  }
  return y;
}

RelaxedLabelSequence RelaxedLabelSequence::one_hot(std::span<const int> labels, int num_labels) {
  return {seqinf::one_hot(labels, num_labels), true};
}

RelaxedLabelSequence RelaxedLabelSequence::uniform(int length, int num_labels) {
  return {Tensor::filled({length, num_labels}, 1.0 / num_labels), num_labels == 1};
}

RelaxedLabelSequence RelaxedLabelSequence::checked(Tensor y, double tol) {
  if (y.rank() != 2) throw ContractError("relaxed labels must be [T, L], got " + shape_string(y.shape()));
  const int steps = y.dim(0), labels = y.dim(1);
  bool discrete = true;
  const auto v = y.data();
  for (int t = 0; t < steps; ++t) {
    double total = 0.0;
    int ones = 0;
    for (int j = 0; j < labels; ++j) {
      const double p = v[static_cast<size_t>(t) * labels + j];
      if (!(p >= 0.0)) throw ContractError("relaxed labels: negative entry at row " + std::to_string(t));
      total += p;
      if (p == 1.0) ++ones;
      else if (p != 0.0) discrete = false;
    }
    if (std::abs(total - 1.0) > tol) {
      throw ContractError("relaxed labels: row " + std::to_string(t) + " sums to " +
                          std::to_string(total));
    }
    if (ones != 1) discrete = false;
  }
  return {std::move(y), discrete};
}

// --- Terms ------------------------------------------------------------------------

Tensor unary_energy(const Tensor& features, const Tensor& y, const UnaryEnergy& u) {
  if (features.rank() != 2 || y.rank() != 2 || features.dim(0) != y.dim(0)) {
    throw ShapeError("unary_energy: features " + shape_string(features.shape()) +
                     " vs labels " + shape_string(y.shape()));
  }
  return sum(y * matmul_nt(features, u.u));
}

Tensor linear_chain_energy(const Tensor& y, const LinearChainEnergy& lc) {
  return pairwise_energy(y, {lc.w}, "linear_chain_energy");
}

Tensor skip_chain_energy(const Tensor& y, const SkipChainEnergy& sc) {
  return pairwise_energy(y, sc.w, "skip_chain_energy");
}

Tensor kron_product(const std::vector<Tensor>& vectors) {
  if (vectors.empty()) throw ContractError("kron_product: no vectors");
  Tensor acc = reshape(vectors.front(), {1, static_cast<int>(vectors.front().size())});
  for (size_t k = 1; k < vectors.size(); ++k) {
    acc = kron_rows(acc, reshape(vectors[k], {1, static_cast<int>(vectors[k].size())}));
  }
  return reshape(acc, {static_cast<int>(acc.size())});
}

double vkp_entry(std::span<const int> indices, const VkpEnergy& vkp) {
  const int labels = vkp.num_labels();
  if (static_cast<int>(indices.size()) != vkp.order + 1) {
    throw ContractError("vkp_entry: expected " + std::to_string(vkp.order + 1) + " indices");
  }
  for (int j : indices) {
    if (j < 0 || j >= labels) throw ContractError("vkp_entry: label index " + std::to_string(j) + " out of range");
  }
  NoGradScope no_grad;
  std::vector<Tensor> parts;
  for (int j : indices) parts.push_back(gather_rows(vkp.label_embeddings, std::span<const int>(&j, 1)));
  return vkp_scores(concat(parts, 1), vkp).item();
}

Tensor vkp_tensor(const VkpEnergy& vkp) {
  const int labels = vkp.num_labels();
  const int m = vkp.order;
  const int tuples = ipow(labels, m + 1);
  // Column block p of z holds the embedding of tuple position p.
  std::vector<Tensor> blocks;
  for (int p = 0; p <= m; ++p) {
    const int stride = ipow(labels, m - p);
    std::vector<int> ids(tuples);
    for (int flat = 0; flat < tuples; ++flat) ids[flat] = (flat / stride) % labels;
    blocks.push_back(gather_rows(vkp.label_embeddings, ids));
  }
  return reshape(vkp_scores(concat(blocks, 1), vkp), {ipow(labels, m), labels});
}

Tensor vkp_energy(const Tensor& y, const VkpEnergy& vkp) {
  require_labels(y, vkp.num_labels(), "vkp_energy");
  const int steps = y.dim(0), m = vkp.order;
  if (steps < m + 1) return zero_scalar();
  const int windows = steps - m;
  Tensor prefix = slice_rows(y, 0, windows);
  for (int s = 1; s < m; ++s) prefix = kron_rows(prefix, slice_rows(y, s, s + windows));
  return sum(matmul(prefix, vkp_tensor(vkp)) * slice_rows(y, m, steps));
}

Tensor cnn_energy(const Tensor& y, const CnnEnergy& cnn) {
  const int labels = cnn.filters.dim(1) / (cnn.order + 1);
  require_labels(y, labels, "cnn_energy");
  const int steps = y.dim(0), m = cnn.order;
  if (steps < m + 1) return zero_scalar();
  const int windows = steps - m;
  std::vector<Tensor> cols;
  for (int s = 0; s <= m; ++s) cols.push_back(slice_rows(y, s, s + windows));
  Tensor stacked = concat(cols, 1);  // [windows, L (M+1)]
  return sum(relu(add_row(matmul_nt(stacked, cnn.filters), cnn.bias)));
}

Tensor tlm_energy(const Tensor& y, const TlmEnergy& tlm) {
  const int labels = tlm.label_embeddings.dim(0);
  require_labels(y, labels, "tlm_energy");
  const int steps = y.dim(0);
  if (tlm.whole_sequence) {
    Tensor inputs = tlm.start;
    if (steps > 1) {
      inputs = concat({tlm.start, matmul(slice_rows(y, 0, steps - 1), tlm.label_embeddings)}, 0);
    }
    Tensor hidden = lstm_sequence(inputs, tlm.cell, false);
    Tensor logp = log_softmax(head_logits(hidden, tlm.output), 1);
    return -sum(y * logp);
  }
  const int m = tlm.order;
  if (steps < m + 1) return zero_scalar();
  Tensor expected = matmul(y, tlm.label_embeddings);  // [T, n_e]
  std::vector<Tensor> parts;
  for (int s = 0; s + m < steps; ++s) {
    Tensor hidden = lstm_sequence(slice_rows(expected, s, s + m), tlm.cell, false);
    Tensor logp = log_softmax(head_logits(hidden, tlm.output), 1);
    parts.push_back(sum(slice_rows(y, s + 1, s + m + 1) * logp));
  }
  return -sum_scalars(parts);
}

Tensor self_attention_energy(const Tensor& y, const SelfAttentionEnergy& sa) {
  const int labels = sa.query.dim(0);
  require_labels(y, labels, "self_attention_energy");
  const int steps = y.dim(0);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(labels));
  auto attend = [&](const Tensor& window) {
    Tensor q = matmul(window, sa.query);
    Tensor k = matmul(window, sa.key);
    Tensor v = matmul(window, sa.value);
    Tensor weights = softmax(scale(matmul_nt(q, k), inv_scale), 1);
    return sum(matmul(weights, v));
  };
  if (sa.whole_sequence) return attend(y);
  const int m = sa.order;
  if (steps < m + 1) return zero_scalar();
  std::vector<Tensor> parts;
  for (int s = 0; s + m < steps; ++s) parts.push_back(attend(slice_rows(y, s, s + m + 1)));
  return sum_scalars(parts);
}

Tensor fully_connected_energy(const Tensor& y, const FullyConnectedEnergy& fc) {
  require_labels(y, fc.s.dim(0), "fully_connected_energy");
  const int steps = y.dim(0);
  const int reach = std::min(fc.window(), steps - 1);
  if (reach < 1) return zero_scalar();
  const int rank = fc.s.dim(1);
  Tensor left = matmul(y, fc.s);  // y_t^T S
  std::vector<Tensor> ds(fc.d.begin(), fc.d.begin() + reach);
  Tensor right = matmul(y, concat(ds, 1));  // [T, reach * d]; block i-1 is y_t^T D_i
  std::vector<Tensor> parts;
  for (int i = 1; i <= reach; ++i) {
    parts.push_back(sum(slice_rows(left, 0, steps - i) *
                        slice_cols(slice_rows(right, i, steps), (i - 1) * rank, i * rank)));
  }
  return sum_scalars(parts);
}

// --- Dispatch -------------------------------------------------------------------

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

ParamList vkp_params(const VkpEnergy& v) {
  ParamList out{{"label_embeddings", v.label_embeddings}, {"v", v.v}};
  append_params(out, "mlp.", v.mlp.params());
  out.push_back({"norm_gain", v.norm_gain});
  out.push_back({"norm_bias", v.norm_bias});
  return out;
}

VkpEnergy make_vkp(int order, int num_labels, int label_dim, Rng& rng) {
  if (order < 1) throw ConfigError("vkp order must be >= 1");
  VkpEnergy v;
  v.order = order;
  const int width = (order + 1) * label_dim;
  v.label_embeddings = uniform_param({num_labels, label_dim}, 0.5, rng);
  v.v = uniform_param({width}, 1.0 / std::sqrt(static_cast<double>(width)), rng);
  v.mlp = Mlp::create({width, width, width}, Activation::kTanh, Activation::kIdentity, rng);
  v.norm_gain = constant_param({width}, 1.0);
  v.norm_bias = zero_param({width});
  return v;
}

}  // namespace

Tensor structured_energy(const Tensor& y, const StructuredTerm& term) {
  return std::visit(
      Overloaded{
          [&](const LinearChainEnergy& t) { return linear_chain_energy(y, t); },
          [&](const SkipChainEnergy& t) { return skip_chain_energy(y, t); },
          [&](const VkpEnergy& t) { return vkp_energy(y, t); },
          [&](const VkpSumEnergy& t) {
            std::vector<Tensor> parts;
            for (const VkpEnergy& v : t.terms) parts.push_back(vkp_energy(y, v));
            return sum_scalars(parts);
          },
          [&](const CnnEnergy& t) { return cnn_energy(y, t); },
          [&](const TlmEnergy& t) { return tlm_energy(y, t); },
          [&](const SelfAttentionEnergy& t) { return self_attention_energy(y, t); },
          [&](const FullyConnectedEnergy& t) { return fully_connected_energy(y, t); },
      },
      term);
}

ParamList structured_params(const StructuredTerm& term) {
  return std::visit(
      Overloaded{
          [](const LinearChainEnergy& t) { return ParamList{{"w", t.w}}; },
          [](const SkipChainEnergy& t) {
            ParamList out;
            for (size_t i = 0; i < t.w.size(); ++i) out.push_back({"w" + std::to_string(i + 1), t.w[i]});
            return out;
          },
          [](const VkpEnergy& t) { return vkp_params(t); },
          [](const VkpSumEnergy& t) {
            ParamList out;
            for (const VkpEnergy& v : t.terms) {
              append_params(out, "order" + std::to_string(v.order) + ".", vkp_params(v));
            }
            return out;
          },
          [](const CnnEnergy& t) { return ParamList{{"filters", t.filters}, {"bias", t.bias}}; },
          [](const TlmEnergy& t) {
            ParamList out{{"label_embeddings", t.label_embeddings}, {"start", t.start}};
            append_params(out, "cell.", t.cell.params());
            append_params(out, "output.", t.output.params());
            return out;
          },
          [](const SelfAttentionEnergy& t) {
            return ParamList{{"query", t.query}, {"key", t.key}, {"value", t.value}};
          },
          [](const FullyConnectedEnergy& t) {
            ParamList out{{"s", t.s}};
            for (size_t i = 0; i < t.d.size(); ++i) out.push_back({"d" + std::to_string(i + 1), t.d[i]});
            return out;
          },
      },
      term);
}

std::string structured_kind(const StructuredTerm& term) {
  return std::visit(Overloaded{
                        [](const LinearChainEnergy&) { return std::string("linear-chain"); },
                        [](const SkipChainEnergy&) { return std::string("skip-chain"); },
                        [](const VkpEnergy&) { return std::string("vkp"); },
                        [](const VkpSumEnergy&) { return std::string("vkp"); },
                        [](const CnnEnergy&) { return std::string("cnn"); },
                        [](const TlmEnergy&) { return std::string("tlm"); },
                        [](const SelfAttentionEnergy&) { return std::string("self-attention"); },
                        [](const FullyConnectedEnergy&) { return std::string("fully-connected"); },
                    },
                    term);
}

StructuredTerm make_structured(const StructuredConfig& cfg, int num_labels, Rng& rng) {
  const int order = cfg.order;
  const int labels = num_labels;
  if (labels < 1) throw ConfigError("energy needs at least one label");
  if (cfg.kind == "linear-chain") {
    return LinearChainEnergy{uniform_param({labels, labels}, cfg.init_range, rng)};
  }
  if (cfg.kind == "skip-chain") {
    if (order < 1) throw ConfigError("skip-chain 'M' must be >= 1");
    SkipChainEnergy sc;
    for (int i = 0; i < order; ++i) sc.w.push_back(uniform_param({labels, labels}, cfg.init_range, rng));
    return sc;
  }
  if (cfg.kind == "vkp") {
    if (cfg.vkp_orders.size() > 1) {
      VkpSumEnergy sum_term;
      for (int m : cfg.vkp_orders) sum_term.terms.push_back(make_vkp(m, labels, cfg.label_dim, rng));
      return sum_term;
    }
    const int m = cfg.vkp_orders.empty() ? order : cfg.vkp_orders.front();
    return make_vkp(m, labels, cfg.label_dim, rng);
  }
  if (cfg.kind == "cnn") {
    if (order < 1) throw ConfigError("cnn 'M' must be >= 1");
    if (cfg.filters < 1) throw ConfigError("cnn 'filters' must be >= 1");
    const int width = labels * (order + 1);
    CnnEnergy cnn;
    cnn.order = order;
    cnn.filters = uniform_param({cfg.filters, width}, 1.0 / std::sqrt(static_cast<double>(width)), rng);
    cnn.bias = zero_param({cfg.filters});
    return cnn;
  }
  if (cfg.kind == "tlm") {
    if (!cfg.whole_sequence && order < 1) throw ConfigError("tlm 'M' must be >= 1");
    TlmEnergy tlm;
    tlm.order = order;
    tlm.whole_sequence = cfg.whole_sequence;
    tlm.label_embeddings = uniform_param({labels, cfg.label_dim}, 0.5, rng);
    tlm.start = uniform_param({1, cfg.label_dim}, 0.5, rng);
    tlm.cell = LstmCell::create(cfg.label_dim, cfg.tlm_hidden, rng);
    tlm.output = ClassifierHead::create(labels, cfg.tlm_hidden, rng);
    return tlm;
  }
  if (cfg.kind == "self-attention") {
    if (!cfg.whole_sequence && order < 1) throw ConfigError("self-attention 'M' must be >= 1");
    const double r = 1.0 / std::sqrt(static_cast<double>(labels));
    SelfAttentionEnergy sa;
    sa.order = order;
    sa.whole_sequence = cfg.whole_sequence;
    sa.query = uniform_param({labels, labels}, r, rng);
    sa.key = uniform_param({labels, labels}, r, rng);
    sa.value = uniform_param({labels, labels}, r, rng);
    return sa;
  }
  if (cfg.kind == "fully-connected") {
    if (order < 1) throw ConfigError("fully-connected 'M' must be >= 1");
    if (cfg.rank < 1) throw ConfigError("fully-connected 'rank' must be >= 1");
    const double r = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
    FullyConnectedEnergy fc;
    fc.s = uniform_param({labels, cfg.rank}, r, rng);
    for (int i = 0; i < order; ++i) fc.d.push_back(uniform_param({labels, cfg.rank}, cfg.init_range * r, rng));
    return fc;
  }
  throw ConfigError("unknown energy kind '" + cfg.kind + "'");
}

// --- EnergyModel ------------------------------------------------------------------

EnergyModel::EnergyModel(const EnergyModelShape& shape, const StructuredConfig& cfg, Rng& rng)
    : EnergyModel(shape, cfg, EmbeddingTable::random(shape.vocab_size, shape.embed_dim, rng),
                  rng) {}

EnergyModel::EnergyModel(const EnergyModelShape& shape, const StructuredConfig& cfg,
                         EmbeddingTable emb, Rng& rng)
    : shape_(shape), config_(cfg), embeddings_(std::move(emb)) {
  shape_.embed_dim = embeddings_.dim();
  encoder_ = BiLstmEncoder::create(shape_.embed_dim, shape_.hidden_dim, shape_.num_layers, rng);
  const int d = encoder_.output_dim();
  unary_.u = uniform_param({shape_.num_labels, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  structured_ = make_structured(cfg, shape_.num_labels, rng);
}

Tensor EnergyModel::features(std::span<const int> tokens) const {
  return bilstm_encode(tokens, embeddings_, encoder_);
}

Tensor EnergyModel::unary_scores(std::span<const int> tokens) const {
  return matmul_nt(features(tokens), unary_.u);
}

Tensor EnergyModel::energy_from_scores(const Tensor& scores, const Tensor& y) const {
  if (scores.shape() != y.shape()) {
    throw ContractError("energy: labels " + shape_string(y.shape()) + " vs unary scores " +
                        shape_string(scores.shape()));
  }
  return -(sum(y * scores) + structured_energy(y, structured_));
}

ParamList EnergyModel::params() const {
  ParamList out;
  append_params(out, "emb.", embeddings_.params());
  append_params(out, "enc.", encoder_.params());
  out.push_back({"unary.u", unary_.u});
  append_params(out, "structured.", structured_params(structured_));
  return out;
}

ParamList EnergyModel::state() const {
  ParamList out;
  append_params(out, "emb.", embeddings_.state());
  append_params(out, "enc.", encoder_.params());
  out.push_back({"unary.u", unary_.u});
  append_params(out, "structured.", structured_params(structured_));
  return out;
}

Tensor total_energy(std::span<const int> tokens, const Tensor& y, const EnergyModel& model) {
  if (y.rank() != 2 || y.dim(0) != static_cast<int>(tokens.size())) {
    throw ContractError("total_energy: " + std::to_string(tokens.size()) + " tokens but labels " +
                        shape_string(y.shape()));
  }
  return model.energy_from_scores(model.unary_scores(tokens), y);
}

}  // namespace seqinf
