#pragma once

// Experiment records: a strict JSON config, dataset assembly, the trained
// system (energy model plus inference networks, or a baseline) and its
// checkpoint on disk.
//
// A checkpoint directory holds checkpoint.json (manifest) and checkpoint.bin
// (parameters as little-endian float32, concatenated in manifest order).

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqinf/data.h"
#include "seqinf/encoders.h"
#include "seqinf/energies.h"
#include "seqinf/training.h"

namespace seqinf {

using Json = nlohmann::ordered_json;

struct DataPaths {
  std::string train;
  std::string dev;
  std::string test;
};

struct ExperimentConfig {
  std::string task = "synth";  // synth | conll
  SynthSpec synth;
  DataPaths data;
  std::string model = "infnet";  // infnet | crf | local
  StructuredConfig energy;
  int embed_dim = 100;
  int hidden_dim = 100;
  int num_layers = 1;     // energy encoder
  int infnet_layers = 1;  // inference networks and local classifier
  std::string embeddings;  // optional pretrained vectors; frozen except UNK
  int min_count = 1;
  int max_labels = 0;  // 0 keeps every label
  double unk_train_alpha = 0.0;
  uint64_t unk_seed = 1;
  TrainConfig train;
  std::string precision = "single";  // single | double
  std::string output_dir = "run";

  // Throws ConfigError naming the field.
  void validate() const;
};

Json config_to_json(const ExperimentConfig& cfg);
// Every key must be known; missing keys keep their defaults. Throws
// ConfigError naming the first unknown or ill-typed key.
ExperimentConfig config_from_json(const Json& j);
// Applies "dotted.key=value"; the value is parsed as JSON when possible and
// taken as a string otherwise.
void apply_override(Json& j, const std::string& assignment);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

struct Datasets {
  TaggedCorpus train;
  TaggedCorpus dev;
  TaggedCorpus test;
};

// Synthesizes or reads the splits. CoNLL vocabularies come from the training
// split with min_count; labels are numbered by first appearance across train,
// dev and test in that order, then truncated to max_labels. UnkTrain
// corruption is applied to the training split only.
Datasets load_datasets(const ExperimentConfig& cfg);

// Everything a checkpoint restores.
struct TrainedSystem {
  ExperimentConfig config;
  Vocabulary vocab;
  LabelSet labels;
  EnergyModel energy;         // infnet and crf
  InferenceNetworkPair nets;  // infnet
  InferenceNetwork local;     // local
  int epoch = 0;
  double dev_metric = 0.0;

  std::vector<int> decode(std::span<const int> tokens) const;
  // Named tensors saved in a checkpoint, frozen embeddings included.
  ParamList state() const;
  // Learnable tensors.
  ParamList params() const;
};

// Fresh initialization under config.train.seed.
TrainedSystem build_system(const ExperimentConfig& cfg, const Vocabulary& vocab,
                           const LabelSet& labels);

struct TrainOutcome {
  TrainedSystem best;
  std::vector<EpochMetrics> log;
};

// Trains up to max_epochs with early stopping on the dev metric and returns
// the system restored to its best epoch (the initial system when
// max_epochs = 0). `on_epoch` sees every log entry as it is produced.
TrainOutcome train_system(const ExperimentConfig& cfg, const Datasets& data,
                          const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Manifest JSON and parameter blob as written to disk.
std::string checkpoint_manifest(const TrainedSystem& sys);
std::string checkpoint_blob(const TrainedSystem& sys);
void save_checkpoint(const TrainedSystem& sys, const std::filesystem::path& dir);
// Throws DataError on a missing, malformed or inconsistent checkpoint.
TrainedSystem load_checkpoint(const std::filesystem::path& dir);

inline constexpr int kCheckpointFormat = 1;

}  // namespace seqinf
