#pragma once

// Tagging metrics and CSV dumps of learned energy terms.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqinf/energies.h"

namespace seqinf {

// Fraction of positions where pred == gold. Positions whose gold label is
// `never_correct` (the truncation label, or -1 for none) always count as
// wrong. Throws ContractError on a length mismatch or no positions at all.
double token_accuracy(std::span<const int> pred, std::span<const int> gold,
                      int never_correct = -1);
double token_accuracy(const std::vector<std::vector<int>>& pred,
                      const std::vector<std::vector<int>>& gold, int never_correct = -1);

struct LabelSpan {
  int begin = 0;  // first position
  int end = 0;    // one past the last position
  std::string type;
  bool operator==(const LabelSpan&) const = default;
};

// Spans under conlleval chunking rules for BIOES: a span opens at B or S, or
// at an I or E that cannot continue the previous label, and closes after E or
// S, or before any label that cannot continue it. Tags without a type prefix
// are read as O.
std::vector<LabelSpan> extract_spans(std::span<const std::string> labels);

struct SpanScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long correct = 0;
  long predicted = 0;
  long gold = 0;
};

// Micro-averaged exact-match span scores. With no predicted spans, precision
// is 0 if any gold span exists and 1 otherwise; recall is 1 without gold
// spans. Throws ContractError when sentence counts or lengths differ.
SpanScores span_f1(const std::vector<std::vector<std::string>>& pred,
                   const std::vector<std::vector<std::string>>& gold);
SpanScores span_f1(std::span<const std::string> pred, std::span<const std::string> gold);

// Comma-separated matrix: header row of column labels, one row per entry of
// `row_names` led by that name, values printed with %.6g.
std::string matrix_csv(const std::vector<std::string>& row_names,
                       const std::vector<std::string>& col_names, std::span<const double> values);

// Pairwise matrices of a linear-chain (W_1), skip-chain (W_1..W_M) or
// fully-connected (W_i = S D_i^T) term as (name, CSV) pairs; rows are the
// earlier label. Throws ContractError for other terms.
std::vector<std::pair<std::string, std::string>> dump_pairwise_matrices(
    const StructuredTerm& term, const std::vector<std::string>& label_names);

// L x L matrix of vkp_entry({first_label, a, b}); rows a, columns b. Throws
// ContractError unless the term is a VKP term of order 2.
std::vector<double> vkp_slice(const StructuredTerm& term, int first_label);
std::string dump_vkp_slice(const StructuredTerm& term, int first_label,
                           const std::vector<std::string>& label_names);

struct FilterMatch {
  int filter = 0;
  std::vector<int> window;  // M + 1 labels, earliest first
  double score = 0.0;       // filter weights . one-hot(window), bias excluded
};

// For every CNN filter, the label window with the largest inner product
// (first in lexicographic order on ties); the top k filters by that maximum,
// ties to the lower filter id. Throws ContractError for non-CNN terms and
// when L^(M+1) exceeds kMaxEnumeration.
std::vector<FilterMatch> top_filter_trigrams(const StructuredTerm& term, int k);
std::string filters_csv(const std::vector<FilterMatch>& matches,
                        const std::vector<std::string>& label_names);

}  // namespace seqinf
