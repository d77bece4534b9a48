#include "seqinf/evalviz.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "seqinf/errors.h"
#include "seqinf/exact_inference.h"

namespace seqinf {

// --- Accuracy -----------------------------------------------------------------------

namespace {

struct Counts {
  long hits = 0;
  long total = 0;
};

void count_matches(std::span<const int> pred, std::span<const int> gold, int never_correct,
                   Counts& c) {
  if (pred.size() != gold.size()) {
    throw ContractError("token_accuracy: " + std::to_string(pred.size()) + " predictions for " +
                        std::to_string(gold.size()) + " gold labels");
  }
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] != never_correct && pred[i] == gold[i]) ++c.hits;
  }
  c.total += static_cast<long>(gold.size());
}

double ratio(const Counts& c) {
  if (c.total == 0) throw ContractError("token_accuracy: no positions");
  return static_cast<double>(c.hits) / static_cast<double>(c.total);
}

}  // namespace

double token_accuracy(std::span<const int> pred, std::span<const int> gold, int never_correct) {
  Counts c;
  count_matches(pred, gold, never_correct, c);
  return ratio(c);
}

double token_accuracy(const std::vector<std::vector<int>>& pred,
                      const std::vector<std::vector<int>>& gold, int never_correct) {
  if (pred.size() != gold.size()) {
    throw ContractError("token_accuracy: sentence counts differ");
  }
  Counts c;
  for (size_t i = 0; i < gold.size(); ++i) count_matches(pred[i], gold[i], never_correct, c);
  return ratio(c);
}

// --- Spans --------------------------------------------------------------------------

namespace {

struct Tag {
  char prefix = 'O';
  std::string type;
};

Tag split_tag(const std::string& label) {
  if (label.size() >= 3 && label[1] == '-' && std::string("BIES").find(label[0]) != std::string::npos) {
    return {label[0], label.substr(2)};
  }
  return {};
}

bool chunk_ends(const Tag& prev, const Tag& cur) {
  if (prev.prefix == 'E' || prev.prefix == 'S') return true;
  if ((prev.prefix == 'B' || prev.prefix == 'I') &&
      (cur.prefix == 'B' || cur.prefix == 'S' || cur.prefix == 'O')) {
    return true;
  }
  return prev.prefix != 'O' && prev.type != cur.type;
}

bool chunk_starts(const Tag& prev, const Tag& cur) {
  if (cur.prefix == 'B' || cur.prefix == 'S') return true;
  if ((prev.prefix == 'E' || prev.prefix == 'S' || prev.prefix == 'O') &&
      (cur.prefix == 'E' || cur.prefix == 'I')) {
    return true;
  }
  return cur.prefix != 'O' && prev.type != cur.type;
}

}  // namespace

std::vector<LabelSpan> extract_spans(std::span<const std::string> labels) {
  std::vector<LabelSpan> spans;
  Tag prev;
  int open = -1;
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i <= n; ++i) {
    const Tag cur = i < n ? split_tag(labels[i]) : Tag{};
    if (open >= 0 && chunk_ends(prev, cur)) {
      spans.push_back({open, i, prev.type});
      open = -1;
    }
    if (i < n && chunk_starts(prev, cur)) open = i;
    prev = cur;
  }
  return spans;
}

SpanScores span_f1(const std::vector<std::vector<std::string>>& pred,
                   const std::vector<std::vector<std::string>>& gold) {
  if (pred.size() != gold.size()) throw ContractError("span_f1: sentence counts differ");
  SpanScores s;
  for (size_t k = 0; k < gold.size(); ++k) {
    if (pred[k].size() != gold[k].size()) {
      throw ContractError("span_f1: sentence " + std::to_string(k) + " lengths differ");
    }
    const auto p = extract_spans(pred[k]);
    const auto g = extract_spans(gold[k]);
    s.predicted += static_cast<long>(p.size());
    s.gold += static_cast<long>(g.size());
    for (const LabelSpan& span : p) {
      if (std::find(g.begin(), g.end(), span) != g.end()) ++s.correct;
    }
  }
  if (s.predicted > 0) {
    s.precision = static_cast<double>(s.correct) / static_cast<double>(s.predicted);
  } else {
    s.precision = s.gold > 0 ? 0.0 : 1.0;
  }
  s.recall = s.gold > 0 ? static_cast<double>(s.correct) / static_cast<double>(s.gold) : 1.0;
  const double denom = s.precision + s.recall;
  s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

SpanScores span_f1(std::span<const std::string> pred, std::span<const std::string> gold) {
  return span_f1(std::vector<std::vector<std::string>>{{pred.begin(), pred.end()}},
                 std::vector<std::vector<std::string>>{{gold.begin(), gold.end()}});
}

// --- CSV dumps --------------------------------------------------------------------

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Quotes a CSV field when needed.
std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string matrix_csv(const std::vector<std::string>& row_names,
                       const std::vector<std::string>& col_names, std::span<const double> values) {
  if (values.size() != row_names.size() * col_names.size()) {
    throw ContractError("matrix_csv: " + std::to_string(values.size()) + " values for a " +
                        std::to_string(row_names.size()) + "x" + std::to_string(col_names.size()) +
                        " matrix");
  }
  std::ostringstream out;
  out << "label";
  for (const std::string& c : col_names) out << ',' << field(c);
  out << '\n';
  for (size_t r = 0; r < row_names.size(); ++r) {
    out << field(row_names[r]);
    for (size_t c = 0; c < col_names.size(); ++c) {
      out << ',' << format_value(values[r * col_names.size() + c]);
    }
    out << '\n';
  }
  return out.str();
}

namespace {

void require_label_names(const std::vector<std::string>& names, int labels, const char* who) {
  if (static_cast<int>(names.size()) != labels) {
    throw ContractError(std::string(who) + ": " + std::to_string(names.size()) +
                        " label names for " + std::to_string(labels) + " labels");
  }
}

std::vector<double> values_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::vector<std::pair<std::string, std::string>> dump_pairwise_matrices(
    const StructuredTerm& term, const std::vector<std::string>& label_names) {
  std::vector<std::vector<double>> mats;
  int labels = 0;
  if (const auto* lc = std::get_if<LinearChainEnergy>(&term)) {
    labels = lc->w.dim(0);
    mats.push_back(values_of(lc->w));
  } else if (const auto* sc = std::get_if<SkipChainEnergy>(&term)) {
    labels = sc->w.front().dim(0);
    for (const Tensor& w : sc->w) mats.push_back(values_of(w));
  } else if (const auto* fc = std::get_if<FullyConnectedEnergy>(&term)) {
    labels = fc->s.dim(0);
    NoGradScope no_grad;
    for (const Tensor& d : fc->d) mats.push_back(values_of(matmul_nt(fc->s, d)));
  } else {
    throw ContractError("dump_pairwise_matrices: " + structured_kind(term) +
                        " has no pairwise matrices");
  }
  require_label_names(label_names, labels, "dump_pairwise_matrices");
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t i = 0; i < mats.size(); ++i) {
    out.emplace_back("W_" + std::to_string(i + 1), matrix_csv(label_names, label_names, mats[i]));
  }
  return out;
}

std::vector<double> vkp_slice(const StructuredTerm& term, int first_label) {
  const auto* vkp = std::get_if<VkpEnergy>(&term);
  if (vkp == nullptr) throw ContractError("vkp_slice: " + structured_kind(term) + " is not a VKP term");
  if (vkp->order != 2) {
    throw ContractError("vkp_slice: needs a second-order VKP term, got order " +
                        std::to_string(vkp->order));
  }
  const int labels = vkp->num_labels();
  if (first_label < 0 || first_label >= labels) {
    throw ContractError("vkp_slice: first label " + std::to_string(first_label) + " out of range");
  }
  std::vector<double> out(static_cast<size_t>(labels) * labels);
  for (int a = 0; a < labels; ++a)
    for (int b = 0; b < labels; ++b) {
      const int idx[3] = {first_label, a, b};
      out[static_cast<size_t>(a) * labels + b] = vkp_entry(idx, *vkp);
    }
  return out;
}

std::string dump_vkp_slice(const StructuredTerm& term, int first_label,
                           const std::vector<std::string>& label_names) {
  std::vector<double> slice = vkp_slice(term, first_label);
  require_label_names(label_names, std::get<VkpEnergy>(term).num_labels(), "dump_vkp_slice");
  return matrix_csv(label_names, label_names, slice);
}

std::vector<FilterMatch> top_filter_trigrams(const StructuredTerm& term, int k) {
  const auto* cnn = std::get_if<CnnEnergy>(&term);
  if (cnn == nullptr) {
    throw ContractError("top_filter_trigrams: " + structured_kind(term) + " is not a CNN term");
  }
  const int width = cnn->order + 1;
  const int labels = cnn->filters.dim(1) / width;
  const int count = cnn->filters.dim(0);
  std::vector<FilterMatch> best(count);
  for (int n = 0; n < count; ++n) {
    best[n].filter = n;
    best[n].score = -std::numeric_limits<double>::infinity();
  }
  const auto w = cnn->filters.data();
  const size_t stride = static_cast<size_t>(labels) * width;
  enumerate_sequences(width, labels, [&](std::span<const int> window) {
    for (int n = 0; n < count; ++n) {
      double s = 0.0;
      for (int p = 0; p < width; ++p) s += w[n * stride + static_cast<size_t>(p) * labels + window[p]];
      if (s > best[n].score) {
        best[n].score = s;
        best[n].window.assign(window.begin(), window.end());
      }
    }
  });
  std::stable_sort(best.begin(), best.end(),
                   [](const FilterMatch& a, const FilterMatch& b) { return a.score > b.score; });
  if (k >= 0 && k < count) best.resize(k);
  return best;
}

std::string filters_csv(const std::vector<FilterMatch>& matches,
                        const std::vector<std::string>& label_names) {
  std::ostringstream out;
  out << "rank,filter,window,score\n";
  for (size_t r = 0; r < matches.size(); ++r) {
    std::string window;
    for (size_t p = 0; p < matches[r].window.size(); ++p) {
      if (p > 0) window += ' ';
      window += label_names.at(matches[r].window[p]);
    }
    out << r + 1 << ',' << matches[r].filter << ',' << field(window) << ','
        << format_value(matches[r].score) << '\n';
  }
  return out.str();
}

}  // namespace seqinf
