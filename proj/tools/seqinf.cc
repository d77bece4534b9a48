// seqinf: train, evaluate and inspect energy-based sequence labelers.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "seqinf/data.h"
#include "seqinf/errors.h"
#include "seqinf/evalviz.h"
#include "seqinf/experiment.h"
#include "seqinf/gradcheck.h"

namespace fs = std::filesystem;
using namespace seqinf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int report_error(const char* kind, const std::string& message, int code) {
  Json j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_code"] = code;
  std::cerr << j.dump() << std::endl;
  return code;
}

TaggedCorpus read_conll(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_conll(in);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_corpus(const fs::path& path, const TaggedCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_conll(out, corpus);
}

// --- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig cfg = load_config(a.config, a.overrides);
  if (!a.out.empty()) cfg.output_dir = a.out;
  const Datasets data = load_datasets(cfg);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw DataError("cannot write " + (dir / "train_log.jsonl").string());
  TrainOutcome outcome = train_system(cfg, data, [&](const EpochMetrics& m) {
    const std::string line = m.json_line();
    log << line << '\n' << std::flush;
    std::cout << line << std::endl;
  });
  save_checkpoint(outcome.best, dir);
  Json summary;
  summary["checkpoint"] = dir.string();
  summary["best_epoch"] = outcome.best.epoch;
  summary["dev_metric"] = outcome.best.dev_metric;
  summary["epochs_run"] = outcome.log.size();
  std::cout << summary.dump() << std::endl;
  return kExitOk;
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string metric = "acc";
  bool gold_as_prediction = false;
};

int cmd_eval(const EvalArgs& a) {
  const TrainedSystem sys = load_checkpoint(a.checkpoint);
  const TaggedCorpus raw = read_conll(a.data);
  if (raw.sentences.empty()) throw DataError("evaluation data " + a.data + " is empty");
  for (const std::string& name : raw.labels.names()) {
    if (sys.labels.id(name) < 0 && sys.labels.id(LabelSet::kTruncated) < 0) {
      throw DataError("label-set mismatch: '" + name + "' is not a checkpoint label");
    }
  }
  const TaggedCorpus corpus = reindex(raw, sys.vocab, sys.labels);
  std::vector<std::vector<int>> pred, gold;
  {
    PrecisionScope precision(sys.config.precision == "double" ? Precision::kDouble : Precision::kSingle);
    for (const Sentence& s : corpus.sentences) {
      pred.push_back(a.gold_as_prediction ? s.labels : sys.decode(s.tokens));
      gold.push_back(s.labels);
    }
  }
  Json out;
  out["metric"] = a.metric;
  out["sentences"] = corpus.sentences.size();
  out["tokens"] = corpus.num_tokens();
  if (a.metric == "acc") {
    const int truncated = sys.labels.id(LabelSet::kTruncated);
    // Gold-as-prediction is a harness check, so truncated gold counts as right.
    out["value"] = token_accuracy(pred, gold, a.gold_as_prediction ? -1 : truncated);
  } else {
    std::vector<std::vector<std::string>> p, g;
    for (size_t i = 0; i < pred.size(); ++i) {
      p.push_back(corpus.label_names(pred[i]));
      g.push_back(corpus.label_names(gold[i]));
    }
    const SpanScores s = span_f1(p, g);
    out["value"] = s.f1;
    out["precision"] = s.precision;
    out["recall"] = s.recall;
  }
  std::cout << out.dump() << std::endl;
  return kExitOk;
}

// --- corrupt / synth --------------------------------------------------------------

struct CorruptArgs {
  std::string in;
  std::string out;
  double alpha = 0.0;
  uint64_t seed = 1;
};

int cmd_corrupt(const CorruptArgs& a) {
  if (!(a.alpha >= 0.0 && a.alpha <= 1.0)) throw ConfigError("--alpha must lie in [0, 1]");
  const TaggedCorpus corpus = read_conll(a.in);
  const TaggedCorpus noisy = corrupt_unk(corpus, CorruptionConfig{a.alpha, a.seed});
  write_corpus(a.out, noisy);
  size_t replaced = 0;
  for (const Sentence& s : noisy.sentences)
    for (int t : s.tokens) replaced += t == Vocabulary::kUnk;
  Json j;
  j["tokens"] = noisy.num_tokens();
  j["unk_tokens"] = replaced;
  j["out"] = a.out;
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

struct SynthArgs {
  std::string spec;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  std::ifstream in(a.spec);
  if (!in) throw ConfigError("cannot open synth spec " + a.spec);
  Json spec = Json::parse(in, nullptr, false);
  if (spec.is_discarded() || !spec.is_object()) throw ConfigError("synth spec is not a JSON object");
  // The spec file uses the synth block of an experiment config.
  Json wrapper;
  wrapper["synth"] = spec;
  const ExperimentConfig cfg = config_from_json(wrapper);
  const SynthCorpora corpora = synth_generate(cfg.synth);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_corpus(dir / "train.conll", corpora.train);
  write_corpus(dir / "dev.conll", corpora.dev);
  write_corpus(dir / "test.conll", corpora.test);
  Json j;
  j["out"] = dir.string();
  j["train"] = corpora.train.sentences.size();
  j["dev"] = corpora.dev.sentences.size();
  j["test"] = corpora.test.sentences.size();
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

// --- inspect --------------------------------------------------------------------

struct InspectArgs {
  std::string checkpoint;
  std::string what;
  std::string out;
  std::string label;
  int k = 10;
};

int cmd_inspect(const InspectArgs& a) {
  const TrainedSystem sys = load_checkpoint(a.checkpoint);
  if (sys.config.model == "local") throw ConfigError("local checkpoints have no energy terms");
  const StructuredTerm& term = sys.energy.structured();
  const std::vector<std::string>& names = sys.labels.names();
  const fs::path dir = a.out.empty() ? fs::path(a.checkpoint) / "inspect" : fs::path(a.out);
  fs::create_directories(dir);
  Json files = Json::array();
  try {
    if (a.what == "pairwise") {
      for (const auto& [name, csv] : dump_pairwise_matrices(term, names)) {
        write_text(dir / (name + ".csv"), csv);
        files.push_back((dir / (name + ".csv")).string());
      }
    } else if (a.what == "vkp-slice") {
      std::vector<int> firsts;
      if (a.label.empty()) {
        for (int j = 0; j < sys.labels.size(); ++j) firsts.push_back(j);
      } else {
        const int id = sys.labels.id(a.label);
        if (id < 0) throw ConfigError("--label '" + a.label + "' is not a checkpoint label");
        firsts.push_back(id);
      }
      for (int j : firsts) {
        const fs::path p = dir / ("vkp_" + names[j] + ".csv");
        write_text(p, dump_vkp_slice(term, j, names));
        files.push_back(p.string());
      }
    } else {
      const fs::path p = dir / "filters.csv";
      write_text(p, filters_csv(top_filter_trigrams(term, a.k), names));
      files.push_back(p.string());
    }
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  Json j;
  j["files"] = files;
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

// --- gradcheck ------------------------------------------------------------------

struct GradcheckArgs {
  std::string term = "linear-chain";
  int order = 1;
  uint64_t seed = 1;
  int instances = 100;
  int labels = 4;
  bool whole_sequence = false;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  TermCheckSpec spec;
  spec.term.kind = a.term;
  spec.term.order = a.order;
  spec.term.whole_sequence = a.whole_sequence;
  spec.term.label_dim = 4;
  spec.term.filters = 6;
  spec.term.tlm_hidden = 5;
  spec.term.rank = a.term == "fully-connected" ? 20 : 4;
  spec.term.init_range = 0.5;
  spec.num_labels = a.labels;
  spec.instances = a.instances;
  spec.seed = a.seed;
  spec.corrupt_gradient = a.corrupt;
  {
    Rng probe(1);
    make_structured(spec.term, spec.num_labels, probe);
  }
  const TermCheckResult r = check_term_gradients(spec);
  Json j;
  j["term"] = a.term;
  j["M"] = a.order;
  j["instances"] = r.instances;
  j["entries_checked"] = r.entries_checked;
  j["max_rel_err"] = r.max_rel_err;
  j["tol"] = spec.tol;
  j["pass"] = r.pass;
  j["seconds"] = r.seconds;
  std::cout << j.dump() << std::endl;
  return r.pass ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-based sequence labeling with inference networks"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train from a JSON config and write the best checkpoint");
  t->add_option("config", train.config, "Experiment config (JSON)")->required();
  t->add_option("--set", train.overrides, "Override a config key: dotted.key=value");
  t->add_option("--out", train.out, "Output directory (overrides output_dir)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Decode CoNLL data with a checkpoint and print a metric");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  e->add_option("--data", eval.data, "CoNLL file")->required();
  e->add_option("--metric", eval.metric, "acc or f1")->check(CLI::IsMember({"acc", "f1"}));
  e->add_flag("--gold-as-prediction", eval.gold_as_prediction, "Score gold labels against themselves");

  CorruptArgs corrupt;
  auto* c = app.add_subcommand("corrupt", "Replace tokens with UNK at rate alpha");
  c->add_option("--in", corrupt.in, "Input CoNLL file")->required();
  c->add_option("--out", corrupt.out, "Output CoNLL file")->required();
  c->add_option("--alpha", corrupt.alpha, "Replacement probability")->required();
  c->add_option("--seed", corrupt.seed, "Random seed");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic train/dev/test CoNLL files");
  s->add_option("spec", synth.spec, "Synthetic spec (JSON)")->required();
  s->add_option("out", synth.out, "Output directory")->required();

  InspectArgs inspect;
  auto* i = app.add_subcommand("inspect", "Dump learned energy terms as CSV");
  i->add_option("--checkpoint", inspect.checkpoint, "Checkpoint directory")->required();
  i->add_option("--what", inspect.what, "pairwise, vkp-slice or filters")
      ->required()
      ->check(CLI::IsMember({"pairwise", "vkp-slice", "filters"}));
  i->add_option("--out", inspect.out, "Output directory (default: <checkpoint>/inspect)");
  i->add_option("--label", inspect.label, "First label of the VKP slice (default: all)");
  i->add_option("--k", inspect.k, "Number of filters to report");

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of an energy term");
  g->add_option("--term", grad.term, "Energy kind")->required();
  g->add_option("--M", grad.order, "Order M");
  g->add_option("--seed", grad.seed, "Random seed");
  g->add_option("--instances", grad.instances, "Random instances");
  g->add_option("--labels", grad.labels, "Number of labels");
  g->add_flag("--whole-sequence", grad.whole_sequence, "Whole-sequence mode (tlm, self-attention)");
  g->add_flag("--corrupt-gradient", grad.corrupt, "Inject a wrong gradient (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return report_error("usage_error", ex.what(), kExitConfig);
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*c) return cmd_corrupt(corrupt);
    if (*s) return cmd_synth(synth);
    if (*i) return cmd_inspect(inspect);
    if (*g) return cmd_gradcheck(grad);
  } catch (const ConfigError& ex) {
    return report_error(ex.kind(), ex.what(), kExitConfig);
  } catch (const DataError& ex) {
    return report_error(ex.kind(), ex.what(), kExitData);
  } catch (const NumericError& ex) {
    return report_error(ex.kind(), ex.what(), kExitNumeric);
  } catch (const Error& ex) {
    return report_error(ex.kind(), ex.what(), kExitConfig);
  } catch (const std::exception& ex) {
    return report_error("internal_error", ex.what(), 1);
  }
  return kExitOk;
}
