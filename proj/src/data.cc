#include "seqinf/data.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "seqinf/errors.h"
#include "seqinf/rng.h"

namespace seqinf {

// --- Vocabulary / LabelSet ------------------------------------------------------

Vocabulary::Vocabulary() {
  words_.push_back(kUnkWord);
  index_.emplace(kUnkWord, kUnk);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  if (words.empty() || words.front() != kUnkWord) {
    throw DataError("vocabulary must start with UNK");
  }
  for (const std::string& w : words) {
    if (!index_.emplace(w, static_cast<int>(words_.size())).second) {
      throw DataError("duplicate vocabulary word '" + w + "'");
    }
    words_.push_back(w);
  }
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

int Vocabulary::add(const std::string& word) {
  auto [it, inserted] = index_.emplace(word, static_cast<int>(words_.size()));
  if (inserted) words_.push_back(word);
  return it->second;
}

LabelSet::LabelSet(const std::vector<std::string>& names) {
  for (const std::string& n : names) {
    if (!index_.emplace(n, static_cast<int>(names_.size())).second) {
      throw DataError("duplicate label '" + n + "'");
    }
    names_.push_back(n);
  }
}

int LabelSet::id(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int LabelSet::add(const std::string& name) {
  auto [it, inserted] = index_.emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

size_t TaggedCorpus::num_tokens() const {
  size_t n = 0;
  for (const Sentence& s : sentences) n += s.tokens.size();
  return n;
}

std::vector<std::string> TaggedCorpus::label_names(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(labels.name(id));
  return out;
}

// --- CoNLL ------------------------------------------------------------------------

namespace {

struct RawSentence {
  std::vector<std::string> words;
  std::vector<std::string> tags;
};

Vocabulary vocab_from_counts(const std::map<std::string, size_t>& counts, int min_count) {
  std::vector<std::pair<std::string, size_t>> entries;
  for (const auto& [w, c] : counts) {
    if (w == Vocabulary::kUnkWord) continue;
    if (min_count > 0 && c < static_cast<size_t>(min_count)) continue;
    entries.emplace_back(w, c);
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& e : entries) vocab.add(e.first);
  return vocab;
}

}  // namespace

TaggedCorpus parse_conll(std::istream& in, Split split) {
  std::vector<RawSentence> raw;
  RawSentence current;
  std::string line;
  int line_no = 0;
  auto flush = [&]() {
    if (!current.words.empty()) raw.push_back(std::move(current));
    current = RawSentence{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size() ||
        line.find('\t', tab + 1) != std::string::npos) {
      throw DataError("conll line " + std::to_string(line_no) +
                      ": expected 'token<TAB>label', got '" + line + "'");
    }
    current.words.push_back(line.substr(0, tab));
    current.tags.push_back(line.substr(tab + 1));
  }
  flush();

  std::map<std::string, size_t> counts;
  for (const RawSentence& s : raw)
    for (const std::string& w : s.words) ++counts[w];

  TaggedCorpus corpus;
  corpus.split = split;
  corpus.vocab = vocab_from_counts(counts, 1);
  for (const RawSentence& s : raw) {
    Sentence out;
    for (size_t i = 0; i < s.words.size(); ++i) {
      out.tokens.push_back(corpus.vocab.id(s.words[i]));
      out.labels.push_back(corpus.labels.add(s.tags[i]));
    }
    corpus.sentences.push_back(std::move(out));
  }
  return corpus;
}

void write_conll(std::ostream& out, const TaggedCorpus& corpus) {
  for (const Sentence& s : corpus.sentences) {
    for (size_t i = 0; i < s.tokens.size(); ++i) {
      out << corpus.vocab.word(s.tokens[i]) << '\t' << corpus.labels.name(s.labels[i]) << '\n';
    }
    out << '\n';
  }
}

Vocabulary build_vocab(const TaggedCorpus& corpus, int min_count) {
  std::map<std::string, size_t> counts;
  for (const Sentence& s : corpus.sentences)
    for (int t : s.tokens) ++counts[corpus.vocab.word(t)];
  return vocab_from_counts(counts, min_count);
}

TaggedCorpus reindex(const TaggedCorpus& corpus, const Vocabulary& vocab, const LabelSet& labels) {
  const int truncated = labels.id(LabelSet::kTruncated);
  TaggedCorpus out;
  out.split = corpus.split;
  out.vocab = vocab;
  out.labels = labels;
  out.sentences.reserve(corpus.sentences.size());
  for (const Sentence& s : corpus.sentences) {
    Sentence r;
    r.tokens.reserve(s.tokens.size());
    for (int t : s.tokens) r.tokens.push_back(vocab.id(corpus.vocab.word(t)));
    for (int l : s.labels) {
      int id = labels.id(corpus.labels.name(l));
      if (id < 0) {
        if (truncated < 0) {
          throw DataError("label '" + corpus.labels.name(l) + "' is not in the model label set");
        }
        id = truncated;
      }
      r.labels.push_back(id);
    }
    out.sentences.push_back(std::move(r));
  }
  return out;
}

TaggedCorpus truncate_labels(const TaggedCorpus& corpus, int max_labels) {
  if (max_labels < 1) throw ContractError("max_labels must be positive");
  if (corpus.labels.size() <= max_labels) return corpus;
  std::vector<size_t> counts(corpus.labels.size(), 0);
  for (const Sentence& s : corpus.sentences)
    for (int l : s.labels) ++counts[l];
  std::vector<int> order(corpus.labels.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return counts[a] > counts[b]; });
  std::vector<bool> keep(counts.size(), false);
  for (int i = 0; i < max_labels; ++i) keep[order[i]] = true;
  std::vector<std::string> names;
  for (int id = 0; id < corpus.labels.size(); ++id) {
    if (keep[id]) names.push_back(corpus.labels.name(id));
  }
  if (LabelSet(names).id(LabelSet::kTruncated) < 0) names.push_back(LabelSet::kTruncated);
  return reindex(corpus, corpus.vocab, LabelSet(names));
}

// --- BIOES ------------------------------------------------------------------------

std::vector<BioesViolation> validate_bioes(std::span<const std::string> labels) {
  std::vector<BioesViolation> out;
  std::string open;  // type of the open span, empty if none
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i < n; ++i) {
    const std::string& tag = labels[i];
    if (tag == "O") {
      if (!open.empty()) out.push_back({i, "O inside open " + open + " span"});
      open.clear();
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || std::string("BIES").find(tag[0]) == std::string::npos) {
      out.push_back({i, "malformed tag '" + tag + "'"});
      open.clear();
      continue;
    }
    const char prefix = tag[0];
    const std::string type = tag.substr(2);
    switch (prefix) {
      case 'B':
        if (!open.empty()) out.push_back({i, "B-" + type + " while " + open + " span is open"});
        open = type;
        break;
      case 'I':
        if (open.empty()) {
          out.push_back({i, "I-" + type + " without an open span"});
        } else if (open != type) {
          out.push_back({i, "I-" + type + " inside " + open + " span (type mismatch)"});
        }
        open = type;
        break;
      case 'E':
        if (open.empty()) {
          out.push_back({i, "E-" + type + " without an open span"});
        } else if (open != type) {
          out.push_back({i, "E-" + type + " closes " + open + " span (type mismatch)"});
        }
        open.clear();
        break;
      case 'S':
        if (!open.empty()) out.push_back({i, "S-" + type + " while " + open + " span is open"});
        open.clear();
        break;
    }
  }
  if (!open.empty()) out.push_back({n, open + " span is never closed"});
  return out;
}

// --- Corruption -------------------------------------------------------------------

TaggedCorpus corrupt_unk(const TaggedCorpus& corpus, const CorruptionConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw ContractError("corruption alpha must lie in [0, 1]");
  }
  Rng rng(cfg.seed);
  TaggedCorpus out = corpus;
  for (Sentence& s : out.sentences)
    for (int& t : s.tokens) {
      if (rng.uniform() < cfg.alpha) t = Vocabulary::kUnk;
    }
  return out;
}

// --- Synthetic corpora -----------------------------------------------------------

double SynthModel::transition(int prev2, int prev1, int next) const {
  const double off = num_labels > 1 ? (1.0 - peak) / (num_labels - 1) : 0.0;
  if (order == 1) return next == successor[prev1] ? peak : off;
  const int diff = ((next - prev2) % num_labels + num_labels) % num_labels;
  return diff == shift[prev1] ? peak : off;
}

double SynthModel::emission(int label, int token) const {
  const int block = vocabulary_size / num_labels;
  const bool own = token >= label * block && token < (label + 1) * block;
  return (own ? (1.0 - noise) / block : 0.0) + noise / vocabulary_size;
}

SynthModel synth_model(const SynthSpec& spec) {
  if (spec.order != 1 && spec.order != 2) throw ContractError("synth order must be 1 or 2");
  if (spec.num_labels < 2) throw ContractError("synth needs at least two labels");
  if (spec.vocabulary_size < spec.num_labels) {
    throw ContractError("synth vocabulary must give every label at least one token");
  }
  if (!(spec.emission_noise >= 0.0 && spec.emission_noise <= 1.0) ||
      !(spec.transition_peak >= 0.0 && spec.transition_peak <= 1.0)) {
    throw ContractError("synth probabilities must lie in [0, 1]");
  }
  if (spec.min_length < 1 || spec.max_length < spec.min_length) {
    throw ContractError("synth lengths must satisfy 1 <= min_length <= max_length");
  }
  Rng rng(spec.seed);
  SynthModel m;
  m.order = spec.order;
  m.num_labels = spec.num_labels;
  m.vocabulary_size = spec.vocabulary_size;
  m.peak = spec.transition_peak;
  m.noise = spec.emission_noise;
  const int labels = spec.num_labels;
  if (spec.order == 1) {
    m.successor.resize(labels);
    for (int i = 0; i < labels; ++i) m.successor[i] = i;
    rng.shuffle(m.successor);
  } else {
    m.shift.resize(labels);
    for (int& s : m.shift) s = static_cast<int>(rng.below(labels));
    // P(c | b) under uniform pairs must be uniform for every b, c.
    for (int b = 0; b < labels; ++b)
      for (int c = 0; c < labels; ++c) {
        double p = 0.0;
        for (int a = 0; a < labels; ++a) p += m.transition(a, b, c) / labels;
        if (std::abs(p - 1.0 / labels) > 1e-12) {
          throw ContractError("order-2 construction produced a non-uniform first-order marginal");
        }
      }
  }
  return m;
}

namespace {

TaggedCorpus sample_split(const SynthModel& m, const SynthSpec& spec, int count, Split split,
                          const Vocabulary& vocab, const LabelSet& labels, Rng& rng) {
  TaggedCorpus corpus;
  corpus.split = split;
  corpus.vocab = vocab;
  corpus.labels = labels;
  const int block = m.vocabulary_size / m.num_labels;
  std::vector<double> weights(m.num_labels);
  for (int n = 0; n < count; ++n) {
    const int steps = rng.range(spec.min_length, spec.max_length);
    Sentence s;
    for (int t = 0; t < steps; ++t) {
      int label;
      if (t < m.order) {
        label = static_cast<int>(rng.below(m.num_labels));
      } else {
        const int prev1 = s.labels[t - 1];
        const int prev2 = m.order == 2 ? s.labels[t - 2] : 0;
        for (int c = 0; c < m.num_labels; ++c) weights[c] = m.transition(prev2, prev1, c);
        label = rng.categorical(weights);
      }
      int token;
      if (rng.uniform() < m.noise) {
        token = static_cast<int>(rng.below(m.vocabulary_size));
      } else {
        token = label * block + static_cast<int>(rng.below(block));
      }
      s.labels.push_back(label);
      s.tokens.push_back(token + 1);  // id 0 is UNK
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace

SynthCorpora synth_generate(const SynthSpec& spec) {
  SynthCorpora out;
  out.model = synth_model(spec);
  Vocabulary vocab;
  for (int i = 0; i < spec.vocabulary_size; ++i) vocab.add("w" + std::to_string(i));
  LabelSet labels;
  for (int j = 0; j < spec.num_labels; ++j) labels.add("L" + std::to_string(j));
  // Separate streams per split so split sizes do not perturb each other.
  Rng train_rng(spec.seed * 3 + 101), dev_rng(spec.seed * 3 + 102), test_rng(spec.seed * 3 + 103);
  out.train = sample_split(out.model, spec, spec.train_sentences, Split::kTrain, vocab, labels, train_rng);
  out.dev = sample_split(out.model, spec, spec.dev_sentences, Split::kDev, vocab, labels, dev_rng);
  out.test = sample_split(out.model, spec, spec.test_sentences, Split::kTest, vocab, labels, test_rng);
  return out;
}

}  // namespace seqinf
