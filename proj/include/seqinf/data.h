#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqinf {

// Token vocabulary. Id 0 is always the unknown word "UNK".
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr const char* kUnkWord = "UNK";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);  // words[0] must be UNK

  int id(const std::string& word) const;  // kUnk when absent
  int add(const std::string& word);
  const std::string& word(int id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  int size() const { return static_cast<int>(words_.size()); }
  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

class LabelSet {
 public:
  static constexpr const char* kTruncated = "*";

  LabelSet() = default;
  explicit LabelSet(const std::vector<std::string>& names);

  int id(const std::string& name) const;  // -1 when absent
  int add(const std::string& name);
  const std::string& name(int id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }
  bool operator==(const LabelSet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct Sentence {
  std::vector<int> tokens;
  std::vector<int> labels;
  bool operator==(const Sentence&) const = default;
};

enum class Split { kTrain, kDev, kTest };

struct TaggedCorpus {
  std::vector<Sentence> sentences;
  Vocabulary vocab;
  LabelSet labels;
  Split split = Split::kTrain;

  size_t num_tokens() const;
  std::vector<std::string> label_names(std::span<const int> ids) const;
};

// Reads `token<TAB>label` lines; a blank line ends a sentence and the last
// sentence is flushed at end of input. The vocabulary is built with
// min_count 1 and labels are numbered by first appearance. Throws DataError
// naming the line on any line without exactly two tab-separated fields.
TaggedCorpus parse_conll(std::istream& in, Split split = Split::kTrain);
void write_conll(std::ostream& out, const TaggedCorpus& corpus);

// Ids are dense with UNK = 0, then words by descending count and ascending
// byte order. Words seen fewer than `min_count` times are left out (they
// read as UNK). The literal word UNK is never a separate entry.
Vocabulary build_vocab(const TaggedCorpus& corpus, int min_count);

// Re-expresses `corpus` over another vocabulary and label set. Unknown words
// become UNK; unknown labels become the truncation label "*" when `labels`
// has one, otherwise DataError.
TaggedCorpus reindex(const TaggedCorpus& corpus, const Vocabulary& vocab, const LabelSet& labels);

// Keeps the `max_labels` most frequent labels (ties by first appearance),
// replacing the rest with "*". Returns the corpus unchanged if it already
// has at most that many labels.
TaggedCorpus truncate_labels(const TaggedCorpus& corpus, int max_labels);

struct BioesViolation {
  int index;  // position of the offending label; labels.size() for an unclosed span
  std::string message;
};

// Checks I-X follows B-X or I-X, E-X closes an open X, S-X and O appear
// outside spans, and every span is closed.
std::vector<BioesViolation> validate_bioes(std::span<const std::string> labels);

struct CorruptionConfig {
  double alpha = 0.0;
  uint64_t seed = 1;
};

// Replaces each token independently with UNK with probability alpha. Labels
// are untouched. Throws ContractError unless 0 <= alpha <= 1.
TaggedCorpus corrupt_unk(const TaggedCorpus& corpus, const CorruptionConfig& cfg);

// Synthetic tagging task: labels from an order-1 or order-2 Markov chain,
// tokens from per-label emission distributions.
//
// Each label owns a block of vocabulary_size / L tokens. A token is drawn
// uniformly from the block of its label with probability 1 - emission_noise
// and uniformly from the whole vocabulary otherwise.
//
// Order 1: label a moves to a preferred successor with probability
// transition_peak, to every other label uniformly otherwise.
// Order 2: P(c | a, b) = R_b[(c - a) mod L], where R_b puts transition_peak
// on a per-b shift. Starting from a uniform pair, every pair of consecutive
// labels is uniform, so P(c | b) is uniform and only the label two back is
// informative.
struct SynthSpec {
  int order = 1;
  int num_labels = 5;
  int vocabulary_size = 250;
  double emission_noise = 0.2;
  double transition_peak = 0.8;
  int min_length = 5;
  int max_length = 15;
  int train_sentences = 2000;
  int dev_sentences = 500;
  int test_sentences = 500;
  uint64_t seed = 1;
};

// Generative parameters behind a SynthSpec, for exact Bayes computations.
struct SynthModel {
  int order = 1;
  int num_labels = 0;
  int vocabulary_size = 0;
  std::vector<int> successor;  // order 1
  std::vector<int> shift;      // order 2, indexed by the previous label
  double peak = 0.0;
  double noise = 0.0;

  // P(next | prev2, prev1); prev2 is ignored for order 1.
  double transition(int prev2, int prev1, int next) const;
  // P(token | label); token is a 0-based synthetic word index.
  double emission(int label, int token) const;
};

SynthModel synth_model(const SynthSpec& spec);

struct SynthCorpora {
  TaggedCorpus train, dev, test;
  SynthModel model;
};

// Deterministic under spec.seed. Throws ContractError on an invalid spec and
// if the order-2 construction fails its uniform-marginal check.
SynthCorpora synth_generate(const SynthSpec& spec);

}  // namespace seqinf
