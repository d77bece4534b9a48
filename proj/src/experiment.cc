#include "seqinf/experiment.h"

#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "seqinf/errors.h"

namespace seqinf {

// --- Strict JSON reading -----------------------------------------------------------

namespace {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config " + where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, key, out);
  }

  Reader child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const Json kEmpty = Json::object();
    return Reader(it == j_.end() ? kEmpty : *it, name(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name(it.key()) + "'");
    }
  }

 private:
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "root" : "'" + path_ + "'"; }
  [[noreturn]] void bad(const char* key, const char* want) const {
    throw ConfigError("config key '" + name(key) + "' must be " + want);
  }

  void read(const Json& v, const char* key, int& out) const {
    if (!v.is_number_integer()) bad(key, "an integer");
    out = v.get<int>();
  }
  void read(const Json& v, const char* key, uint64_t& out) const {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      bad(key, "a non-negative integer");
    }
    out = v.get<uint64_t>();
  }
  void read(const Json& v, const char* key, double& out) const {
    if (!v.is_number()) bad(key, "a number");
    out = v.get<double>();
  }
  void read(const Json& v, const char* key, bool& out) const {
    if (!v.is_boolean()) bad(key, "a boolean");
    out = v.get<bool>();
  }
  void read(const Json& v, const char* key, std::string& out) const {
    if (!v.is_string()) bad(key, "a string");
    out = v.get<std::string>();
  }
  void read(const Json& v, const char* key, std::vector<int>& out) const {
    if (!v.is_array()) bad(key, "an array of integers");
    out.clear();
    for (const Json& e : v) {
      if (!e.is_number_integer()) bad(key, "an array of integers");
      out.push_back(e.get<int>());
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json optimizer_json(const OptimizerSpec& o) {
  Json j;
  j["kind"] = optimizer_kind_name(o.kind);
  j["lr"] = o.lr;
  j["momentum"] = o.momentum;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["eps"] = o.eps;
  return j;
}

void read_optimizer(Reader r, OptimizerSpec& o) {
  std::string kind = optimizer_kind_name(o.kind);
  r.get("kind", kind);
  o.kind = parse_optimizer_kind(kind);
  r.get("lr", o.lr);
  r.get("momentum", o.momentum);
  r.get("beta1", o.beta1);
  r.get("beta2", o.beta2);
  r.get("eps", o.eps);
  r.finish();
}

}  // namespace

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["task"] = c.task;
  j["synth"] = {{"order", c.synth.order},
                {"num_labels", c.synth.num_labels},
                {"vocabulary_size", c.synth.vocabulary_size},
                {"emission_noise", c.synth.emission_noise},
                {"transition_peak", c.synth.transition_peak},
                {"min_length", c.synth.min_length},
                {"max_length", c.synth.max_length},
                {"train_sentences", c.synth.train_sentences},
                {"dev_sentences", c.synth.dev_sentences},
                {"test_sentences", c.synth.test_sentences},
                {"seed", c.synth.seed}};
  j["data"] = {{"train", c.data.train}, {"dev", c.data.dev}, {"test", c.data.test}};
  j["model"] = c.model;
  j["energy"] = {{"kind", c.energy.kind},
                 {"order", c.energy.order},
                 {"whole_sequence", c.energy.whole_sequence},
                 {"vkp_orders", c.energy.vkp_orders},
                 {"label_dim", c.energy.label_dim},
                 {"filters", c.energy.filters},
                 {"tlm_hidden", c.energy.tlm_hidden},
                 {"rank", c.energy.rank},
                 {"init_range", c.energy.init_range}};
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["num_layers"] = c.num_layers;
  j["infnet_layers"] = c.infnet_layers;
  j["embeddings"] = c.embeddings;
  j["min_count"] = c.min_count;
  j["max_labels"] = c.max_labels;
  j["unk_train_alpha"] = c.unk_train_alpha;
  j["unk_seed"] = c.unk_seed;
  const TrainConfig& t = c.train;
  j["train"] = {{"lambda", t.lambda},
                {"tau", t.tau},
                {"batch_size", t.batch_size},
                {"energy_optimizer", optimizer_json(t.energy_optimizer)},
                {"infnet_optimizer", optimizer_json(t.infnet_optimizer)},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"seed", t.seed},
                {"dev_metric", t.dev_metric},
                {"warm_start", t.warm_start},
                {"warm_start_epochs", t.warm_start_epochs}};
  j["precision"] = c.precision;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.get("task", c.task);
  {
    Reader s = r.child("synth");
    s.get("order", c.synth.order);
    s.get("num_labels", c.synth.num_labels);
    s.get("vocabulary_size", c.synth.vocabulary_size);
    s.get("emission_noise", c.synth.emission_noise);
    s.get("transition_peak", c.synth.transition_peak);
    s.get("min_length", c.synth.min_length);
    s.get("max_length", c.synth.max_length);
    s.get("train_sentences", c.synth.train_sentences);
    s.get("dev_sentences", c.synth.dev_sentences);
    s.get("test_sentences", c.synth.test_sentences);
    s.get("seed", c.synth.seed);
    s.finish();
  }
  {
    Reader d = r.child("data");
    d.get("train", c.data.train);
    d.get("dev", c.data.dev);
    d.get("test", c.data.test);
    d.finish();
  }
  r.get("model", c.model);
  {
    Reader e = r.child("energy");
    e.get("kind", c.energy.kind);
    e.get("order", c.energy.order);
    e.get("whole_sequence", c.energy.whole_sequence);
    e.get("vkp_orders", c.energy.vkp_orders);
    e.get("label_dim", c.energy.label_dim);
    e.get("filters", c.energy.filters);
    e.get("tlm_hidden", c.energy.tlm_hidden);
    e.get("rank", c.energy.rank);
    e.get("init_range", c.energy.init_range);
    e.finish();
  }
  r.get("embed_dim", c.embed_dim);
  r.get("hidden_dim", c.hidden_dim);
  r.get("num_layers", c.num_layers);
  r.get("infnet_layers", c.infnet_layers);
  r.get("embeddings", c.embeddings);
  r.get("min_count", c.min_count);
  r.get("max_labels", c.max_labels);
  r.get("unk_train_alpha", c.unk_train_alpha);
  r.get("unk_seed", c.unk_seed);
  {
    Reader t = r.child("train");
    t.get("lambda", c.train.lambda);
    t.get("tau", c.train.tau);
    t.get("batch_size", c.train.batch_size);
    read_optimizer(t.child("energy_optimizer"), c.train.energy_optimizer);
    read_optimizer(t.child("infnet_optimizer"), c.train.infnet_optimizer);
    t.get("max_epochs", c.train.max_epochs);
    t.get("patience", c.train.patience);
    t.get("seed", c.train.seed);
    t.get("dev_metric", c.train.dev_metric);
    t.get("warm_start", c.train.warm_start);
    t.get("warm_start_epochs", c.train.warm_start_epochs);
    t.finish();
  }
  r.get("precision", c.precision);
  r.get("output_dir", c.output_dir);
  r.finish();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (task != "synth" && task != "conll") throw ConfigError("task must be synth or conll, got '" + task + "'");
  if (task == "conll" && (data.train.empty() || data.dev.empty())) {
    throw ConfigError("conll task needs data.train and data.dev");
  }
  if (model != "infnet" && model != "crf" && model != "local") {
    throw ConfigError("model must be infnet, crf or local, got '" + model + "'");
  }
  if (model == "crf" && energy.kind != "linear-chain") {
    throw ConfigError("crf model needs energy.kind linear-chain");
  }
  if (embed_dim < 1 || hidden_dim < 1 || num_layers < 1 || infnet_layers < 1) {
    throw ConfigError("network sizes must be positive");
  }
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  if (max_labels < 0) throw ConfigError("max_labels must be non-negative");
  if (!(unk_train_alpha >= 0.0 && unk_train_alpha <= 1.0)) {
    throw ConfigError("unk_train_alpha must lie in [0, 1]");
  }
  if (precision != "single" && precision != "double") {
    throw ConfigError("precision must be single or double, got '" + precision + "'");
  }
  train.validate();
  Rng probe(1);
  make_structured(energy, 2, probe);
}

void apply_override(Json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

// --- Data -------------------------------------------------------------------------

namespace {

TaggedCorpus read_conll_file(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path);
  return parse_conll(in, split);
}

}  // namespace

Datasets load_datasets(const ExperimentConfig& cfg) {
  Datasets d;
  if (cfg.task == "synth") {
    SynthCorpora s = synth_generate(cfg.synth);
    d.train = std::move(s.train);
    d.dev = std::move(s.dev);
    d.test = std::move(s.test);
  } else {
    TaggedCorpus train = read_conll_file(cfg.data.train, Split::kTrain);
    TaggedCorpus dev = read_conll_file(cfg.data.dev, Split::kDev);
    TaggedCorpus test = cfg.data.test.empty() ? TaggedCorpus{} : read_conll_file(cfg.data.test, Split::kTest);
    test.split = Split::kTest;
    LabelSet labels = train.labels;
    for (const TaggedCorpus* c : {&dev, &test})
      for (const std::string& n : c->labels.names()) labels.add(n);
    const Vocabulary vocab = build_vocab(train, cfg.min_count);
    d.train = reindex(train, vocab, labels);
    d.dev = reindex(dev, vocab, labels);
    d.test = reindex(test, vocab, labels);
    if (cfg.max_labels > 0 && labels.size() > cfg.max_labels) {
      d.train = truncate_labels(d.train, cfg.max_labels);
      d.dev = reindex(d.dev, vocab, d.train.labels);
      d.test = reindex(d.test, vocab, d.train.labels);
    }
  }
  if (cfg.unk_train_alpha > 0.0) {
    d.train = corrupt_unk(d.train, CorruptionConfig{cfg.unk_train_alpha, cfg.unk_seed});
  }
  if (d.train.sentences.empty()) throw DataError("training split is empty");
  return d;
}

// --- Systems -----------------------------------------------------------------------

namespace {

using EmbeddingSource = std::function<EmbeddingTable(const std::string& prefix, Rng& rng)>;

TrainedSystem build_with(const ExperimentConfig& cfg, const Vocabulary& vocab,
                         const LabelSet& labels, const EmbeddingSource& embeddings) {
  TrainedSystem sys;
  sys.config = cfg;
  sys.vocab = vocab;
  sys.labels = labels;
  Rng rng(cfg.train.seed);
  const int v = vocab.size(), l = labels.size();
  const InferenceNetworkShape net_shape{v, l, cfg.embed_dim, cfg.hidden_dim, cfg.infnet_layers};
  if (cfg.model == "infnet" || cfg.model == "crf") {
    const EnergyModelShape shape{v, l, cfg.embed_dim, cfg.hidden_dim, cfg.num_layers};
    sys.energy = EnergyModel(shape, cfg.energy, embeddings("energy.", rng), rng);
  }
  if (cfg.model == "infnet") {
    sys.nets.cost_augmented = InferenceNetwork(net_shape, embeddings("F.", rng), rng);
    sys.nets.test_time = InferenceNetwork(net_shape, embeddings("A.", rng), rng);
  }
  if (cfg.model == "local") {
    sys.local = InferenceNetwork(net_shape, embeddings("local.", rng), rng);
  }
  return sys;
}

EmbeddingSource fresh_embeddings(const ExperimentConfig& cfg, const Vocabulary& vocab) {
  if (cfg.embeddings.empty()) {
    return [v = vocab.size(), dim = cfg.embed_dim](const std::string&, Rng& rng) {
      return EmbeddingTable::random(v, dim, rng);
    };
  }
  return [&cfg, &vocab](const std::string&, Rng& rng) {
    std::ifstream in(cfg.embeddings);
    if (!in) throw DataError("cannot open embeddings file " + cfg.embeddings);
    return EmbeddingTable::load_text(in, vocab.words(), rng);
  };
}

}  // namespace

TrainedSystem build_system(const ExperimentConfig& cfg, const Vocabulary& vocab,
                           const LabelSet& labels) {
  cfg.validate();
  return build_with(cfg, vocab, labels, fresh_embeddings(cfg, vocab));
}

std::vector<int> TrainedSystem::decode(std::span<const int> tokens) const {
  if (config.model == "infnet") return nets.test_time.predict(tokens);
  if (config.model == "crf") return crf_decode(energy, tokens);
  return local.predict(tokens);
}

ParamList TrainedSystem::state() const {
  ParamList out;
  if (config.model == "infnet" || config.model == "crf") append_params(out, "energy.", energy.state());
  if (config.model == "infnet") append_params(out, "", nets.state());
  if (config.model == "local") append_params(out, "local.", local.state());
  return out;
}

ParamList TrainedSystem::params() const {
  ParamList out;
  if (config.model == "infnet" || config.model == "crf") append_params(out, "energy.", energy.params());
  if (config.model == "infnet") append_params(out, "", nets.params());
  if (config.model == "local") append_params(out, "local.", local.params());
  return out;
}

// --- Training ------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> snapshot(const ParamList& params) {
  std::vector<std::vector<double>> out;
  for (const NamedParam& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const ParamList& params, const std::vector<std::vector<double>>& values) {
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    std::copy(values[k].begin(), values[k].end(), t.mutable_data().begin());
  }
}

}  // namespace

TrainOutcome train_system(const ExperimentConfig& cfg, const Datasets& data,
                          const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  PrecisionScope precision(cfg.precision == "double" ? Precision::kDouble : Precision::kSingle);
  TrainOutcome out;
  TrainedSystem sys = build_system(cfg, data.train.vocab, data.train.labels);
  const TrainConfig& tc = cfg.train;
  Rng order_rng(tc.seed * 0x9E3779B97F4A7C15ULL + 17);

  if (cfg.model == "infnet" && tc.warm_start && tc.max_epochs > 0) {
    Rng warm_rng(tc.seed + 7);
    InferenceNetwork warm(sys.nets.test_time.shape(), sys.nets.test_time.embeddings().clone(), warm_rng);
    OptimizerState st = OptimizerState::for_params(warm.params());
    for (int e = 0; e < tc.warm_start_epochs; ++e) {
      local_train_epoch(data.train, warm, tc, tc.infnet_optimizer, st, order_rng);
    }
    copy_values(warm.params(), sys.nets.cost_augmented.params());
    copy_values(warm.params(), sys.nets.test_time.params());
  }

  const ParamList state = sys.state();
  auto decode = [&sys](std::span<const int> tokens) { return sys.decode(tokens); };
  const TaggedCorpus& dev = data.dev.sentences.empty() ? data.train : data.dev;

  AlternatingStates alt;
  OptimizerState single;
  if (cfg.model == "infnet") alt = AlternatingStates::create(sys.energy, sys.nets);
  if (cfg.model == "crf") single = OptimizerState::for_params(sys.energy.params());
  if (cfg.model == "local") single = OptimizerState::for_params(sys.local.params());

  std::vector<double> history;
  std::vector<std::vector<double>> best_values = snapshot(state);
  int best_epoch = 0;
  double best_metric = tc.max_epochs == 0 ? dev_metric(dev, tc.dev_metric, decode) : 0.0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochMetrics m;
    if (cfg.model == "infnet") {
      m = alternating_train_epoch(data.train, sys.energy, sys.nets, tc, alt, order_rng);
    } else if (cfg.model == "crf") {
      m.theta_loss = crf_train_epoch(data.train, sys.energy, tc, single, order_rng);
    } else {
      m.theta_loss = local_train_epoch(data.train, sys.local, tc, tc.infnet_optimizer, single, order_rng);
    }
    m.epoch = epoch;
    m.dev_metric = dev_metric(dev, tc.dev_metric, decode);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.log.push_back(m);
    if (on_epoch) on_epoch(m);
    history.push_back(m.dev_metric);
    const EarlyStopDecision d = early_stop(history, tc.patience);
    if (d.best_epoch == epoch) {
      best_values = snapshot(state);
      best_epoch = epoch;
      best_metric = m.dev_metric;
    }
    if (d.stop) break;
  }
  restore(state, best_values);
  sys.epoch = best_epoch;
  sys.dev_metric = best_metric;
  out.best = std::move(sys);
  return out;
}

// --- Checkpoints -------------------------------------------------------------------

namespace {

constexpr const char* kManifestFile = "checkpoint.json";
constexpr const char* kBlobFile = "checkpoint.bin";

uint32_t to_little(uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
  }
  return v;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const Json& field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("checkpoint manifest lacks '") + key + "'");
  return *it;
}

}  // namespace

std::string checkpoint_manifest(const TrainedSystem& sys) {
  Json j;
  j["format_version"] = kCheckpointFormat;
  j["model_kind"] = sys.config.model;
  j["config"] = config_to_json(sys.config);
  // Where the run was written is not part of the trained system.
  j["config"].erase("output_dir");
  j["vocab"] = sys.vocab.words();
  j["labels"] = sys.labels.names();
  Json params = Json::array();
  for (const NamedParam& p : sys.state()) params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  j["parameters"] = params;
  j["seed"] = sys.config.train.seed;
  j["epoch"] = sys.epoch;
  j["dev_metric"] = sys.dev_metric;
  return j.dump(2) + "\n";
}

std::string checkpoint_blob(const TrainedSystem& sys) {
  std::string out;
  for (const NamedParam& p : sys.state()) {
    for (double v : p.tensor.data()) {
      const uint32_t bits = to_little(std::bit_cast<uint32_t>(static_cast<float>(v)));
      char bytes[4];
      std::memcpy(bytes, &bits, 4);
      out.append(bytes, 4);
    }
  }
  return out;
}

void save_checkpoint(const TrainedSystem& sys, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string manifest = checkpoint_manifest(sys);
  const std::string blob = checkpoint_blob(sys);
  std::ofstream m(dir / kManifestFile, std::ios::binary);
  std::ofstream b(dir / kBlobFile, std::ios::binary);
  if (!m || !b) throw DataError("cannot write checkpoint into " + dir.string());
  m << manifest;
  b << blob;
  if (!m || !b) throw DataError("failed writing checkpoint into " + dir.string());
}

TrainedSystem load_checkpoint(const std::filesystem::path& dir) {
  const Json j = Json::parse(read_file(dir / kManifestFile), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("checkpoint manifest is not valid JSON");
  if (field(j, "format_version") != kCheckpointFormat) {
    throw DataError("unsupported checkpoint format " + field(j, "format_version").dump());
  }
  ExperimentConfig cfg;
  try {
    cfg = config_from_json(field(j, "config"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  const Vocabulary vocab(field(j, "vocab").get<std::vector<std::string>>());
  const LabelSet labels(field(j, "labels").get<std::vector<std::string>>());

  const std::string blob = read_file(dir / kBlobFile);
  std::map<std::string, std::pair<Shape, std::vector<double>>> stored;
  std::vector<std::string> order;
  size_t offset = 0;
  for (const Json& p : field(j, "parameters")) {
    const std::string name = field(p, "name").get<std::string>();
    const Shape shape = field(p, "shape").get<Shape>();
    const size_t n = shape_size(shape);
    if (offset + 4 * n > blob.size()) throw DataError("checkpoint blob is shorter than its manifest");
    std::vector<double> values(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t bits;
      std::memcpy(&bits, blob.data() + offset + 4 * i, 4);
      values[i] = static_cast<double>(std::bit_cast<float>(to_little(bits)));
    }
    offset += 4 * n;
    order.push_back(name);
    stored[name] = {shape, std::move(values)};
  }
  if (offset != blob.size()) throw DataError("checkpoint blob is longer than its manifest");

  auto tensor_of = [&](const std::string& name) {
    auto it = stored.find(name);
    if (it == stored.end()) throw DataError("checkpoint lacks parameter " + name);
    return Tensor::from(it->second.first, it->second.second);
  };
  EmbeddingSource from_blob = [&](const std::string& prefix, Rng& rng) {
    if (cfg.embeddings.empty()) return EmbeddingTable::random(vocab.size(), cfg.embed_dim, rng);
    const Tensor map = tensor_of(prefix + "emb.row_map");
    std::vector<int> rows(map.data().begin(), map.data().end());
    return EmbeddingTable::restore(tensor_of(prefix + "emb.frozen"), tensor_of(prefix + "emb.unk"),
                                   std::move(rows));
  };
  TrainedSystem sys = build_with(cfg, vocab, labels, from_blob);
  const ParamList state = sys.state();
  if (state.size() != order.size()) {
    throw DataError("checkpoint holds " + std::to_string(order.size()) + " tensors, model needs " +
                    std::to_string(state.size()));
  }
  for (size_t k = 0; k < state.size(); ++k) {
    if (state[k].name != order[k]) {
      throw DataError("checkpoint parameter " + order[k] + " where " + state[k].name + " was expected");
    }
    const auto& [shape, values] = stored[order[k]];
    if (shape != state[k].tensor.shape()) {
      throw DataError("checkpoint parameter " + order[k] + " has shape " + shape_string(shape) +
                      ", model needs " + shape_string(state[k].tensor.shape()));
    }
    Tensor t = state[k].tensor;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
  sys.epoch = field(j, "epoch").get<int>();
  sys.dev_metric = field(j, "dev_metric").get<double>();
  return sys;
}

}  // namespace seqinf
