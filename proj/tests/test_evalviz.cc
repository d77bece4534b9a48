#include <gtest/gtest.h>

#include <sstream>

#include "seqinf/data.h"
#include "seqinf/errors.h"
#include "seqinf/evalviz.h"
#include "seqinf/exact_inference.h"
#include "test_helpers.h"

using namespace seqinf;
using seqinf::testing::random_labels;
using seqinf::testing::values;

namespace {

using Tags = std::vector<std::string>;

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

StructuredTerm build(const std::string& kind, int order, int labels, uint64_t seed) {
  StructuredConfig cfg;
  cfg.kind = kind;
  cfg.order = order;
  cfg.label_dim = 3;
  cfg.filters = 7;
  cfg.rank = 2;
  cfg.init_range = 0.5;
  Rng rng(seed);
  return make_structured(cfg, labels, rng);
}

}  // namespace

TEST(Accuracy, Examples) {
  const std::vector<int> g{0, 1, 2, 3};
  EXPECT_EQ(token_accuracy(g, g), 1.0);
  EXPECT_EQ(token_accuracy(std::vector<int>{1, 2, 3, 0}, g), 0.0);
  EXPECT_EQ(token_accuracy(std::vector<int>{0, 1, 2, 0}, g), 0.75);
  EXPECT_EQ(token_accuracy(g, g, 3), 0.75);
  EXPECT_THROW(token_accuracy(std::vector<int>{0}, g), ContractError);
  EXPECT_THROW(token_accuracy(std::vector<int>{}, std::vector<int>{}), ContractError);
  EXPECT_EQ(token_accuracy(std::vector<std::vector<int>>{{0, 1}, {2}}, {{0, 0}, {2}}), 2.0 / 3.0);
}

TEST(Accuracy, InvariantUnderRelabeling) {
  Rng rng(1);
  for (int n = 0; n < 50; ++n) {
    const std::vector<int> p = random_labels(20, 5, rng), g = random_labels(20, 5, rng);
    std::vector<int> perm{0, 1, 2, 3, 4};
    rng.shuffle(perm);
    std::vector<int> pp, gg;
    for (int v : p) pp.push_back(perm[v]);
    for (int v : g) gg.push_back(perm[v]);
    EXPECT_EQ(token_accuracy(pp, gg), token_accuracy(p, g));
  }
}

TEST(Spans, ConllevalChunking) {
  EXPECT_EQ(extract_spans(Tags{"B-PER", "I-PER", "E-PER", "O", "S-LOC"}),
            (std::vector<LabelSpan>{{0, 3, "PER"}, {4, 5, "LOC"}}));
  // A stray I opens a span; a type change closes it.
  EXPECT_EQ(extract_spans(Tags{"I-PER", "E-PER"}), (std::vector<LabelSpan>{{0, 2, "PER"}}));
  EXPECT_EQ(extract_spans(Tags{"B-LOC", "E-ORG"}),
            (std::vector<LabelSpan>{{0, 1, "LOC"}, {1, 2, "ORG"}}));
  EXPECT_EQ(extract_spans(Tags{"B-LOC", "I-LOC"}), (std::vector<LabelSpan>{{0, 2, "LOC"}}));
  EXPECT_EQ(extract_spans(Tags{"O", "*", "O"}), std::vector<LabelSpan>{});
}

TEST(Spans, F1Examples) {
  const Tags gold{"S-PER", "O", "B-LOC", "E-LOC"};
  SpanScores perfect = span_f1(gold, gold);
  EXPECT_EQ(perfect.f1, 1.0);
  SpanScores none = span_f1(Tags{"O", "O", "O", "O"}, gold);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  SpanScores half = span_f1(Tags{"S-PER", "S-ORG", "O", "O"}, gold);
  EXPECT_EQ(half.precision, 0.5);
  EXPECT_EQ(half.recall, 0.5);
  EXPECT_EQ(half.f1, 0.5);
  SpanScores empty = span_f1(Tags{"O"}, Tags{"O"});
  EXPECT_EQ(empty.precision, 1.0);
  EXPECT_EQ(empty.recall, 1.0);
  EXPECT_THROW(span_f1(Tags{"O"}, gold), ContractError);
}

TEST(Spans, MicroAveragedAcrossSentences) {
  const std::vector<Tags> gold{{"S-A", "S-B"}, {"B-C", "E-C"}};
  const std::vector<Tags> pred{{"S-A", "O"}, {"B-C", "E-C"}};
  SpanScores s = span_f1(pred, gold);
  EXPECT_EQ(s.correct, 2);
  EXPECT_EQ(s.predicted, 2);
  EXPECT_EQ(s.gold, 3);
  EXPECT_NEAR(s.f1, 2 * 1.0 * (2.0 / 3) / (1.0 + 2.0 / 3), 1e-12);
}

TEST(Spans, GoldAgainstGoldIsPerfect) {
  Rng rng(2);
  const std::vector<std::string> types{"PER", "LOC"};
  std::vector<Tags> corpus;
  for (int n = 0; n < 100; ++n) {
    Tags s;
    while (s.size() < 12) {
      const std::string ty = types[rng.below(2)];
      switch (rng.below(3)) {
        case 0: s.push_back("O"); break;
        case 1: s.push_back("S-" + ty); break;
        default:
          s.push_back("B-" + ty);
          for (int k = rng.range(0, 2); k > 0; --k) s.push_back("I-" + ty);
          s.push_back("E-" + ty);
      }
    }
    EXPECT_TRUE(validate_bioes(s).empty());
    corpus.push_back(s);
  }
  EXPECT_EQ(span_f1(corpus, corpus).f1, 1.0);
}

TEST(Csv, MatrixFormat) {
  const std::vector<double> v{1.0, 0.1234567, -2.5, 1e-7};
  EXPECT_EQ(matrix_csv({"a", "b"}, {"x", "y,z"}, v), "label,x,\"y,z\"\na,1,0.123457\nb,-2.5,1e-07\n");
}

TEST(Inspect, PairwiseDumps) {
  const std::vector<std::string> names{"A", "B", "C"};
  StructuredTerm lc = build("linear-chain", 1, 3, 1);
  auto one = dump_pairwise_matrices(lc, names);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].first, "W_1");
  EXPECT_EQ(one[0].second, matrix_csv(names, names, values(std::get<LinearChainEnergy>(lc).w)));
  auto rows = lines(one[0].second);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "label,A,B,C");
  auto three = dump_pairwise_matrices(build("skip-chain", 3, 3, 2), names);
  ASSERT_EQ(three.size(), 3u);
  EXPECT_EQ(three[2].first, "W_3");
  StructuredTerm fc = build("fully-connected", 2, 3, 3);
  auto fcd = dump_pairwise_matrices(fc, names);
  ASSERT_EQ(fcd.size(), 2u);
  const auto& f = std::get<FullyConnectedEnergy>(fc);
  EXPECT_EQ(fcd[1].second, matrix_csv(names, names, values(matmul_nt(f.s, f.d[1]))));
  EXPECT_THROW(dump_pairwise_matrices(build("cnn", 2, 3, 4), names), ContractError);
}

TEST(Inspect, VkpSlice) {
  StructuredTerm term = build("vkp", 2, 3, 5);
  VkpEnergy& vkp = std::get<VkpEnergy>(term);
  const std::vector<double> s0 = vkp_slice(term, 0), s2 = vkp_slice(term, 2);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      EXPECT_EQ(s0[a * 3 + b], vkp_entry(std::vector<int>{0, a, b}, vkp));
      EXPECT_EQ(s2[a * 3 + b], vkp_entry(std::vector<int>{2, a, b}, vkp));
    }
  EXPECT_NE(s0, s2);
  EXPECT_EQ(lines(dump_vkp_slice(term, 1, {"A", "B", "C"})).size(), 4u);
  for (double& x : Tensor(vkp.v).mutable_data()) x = 0.0;
  for (double x : vkp_slice(term, 1)) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(vkp_slice(build("vkp", 1, 3, 6), 0), ContractError);
  EXPECT_THROW(vkp_slice(build("linear-chain", 1, 3, 6), 0), ContractError);
}

TEST(Inspect, FiltersZeroWeightsTieBreak) {
  StructuredTerm term = build("cnn", 2, 3, 7);
  for (double& x : Tensor(std::get<CnnEnergy>(term).filters).mutable_data()) x = 0.0;
  auto top = top_filter_trigrams(term, 4);
  ASSERT_EQ(top.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(top[i].filter, i);
    EXPECT_EQ(top[i].window, (std::vector<int>{0, 0, 0}));
    EXPECT_EQ(top[i].score, 0.0);
  }
}

TEST(Inspect, FiltersFindConstructedWindow) {
  StructuredTerm term = build("cnn", 2, 4, 8);
  CnnEnergy& cnn = std::get<CnnEnergy>(term);
  auto w = Tensor(cnn.filters).mutable_data();
  for (double& x : w) x = 0.0;
  const int target[] = {1, 3, 2};
  for (int p = 0; p < 3; ++p) w[5 * 12 + p * 4 + target[p]] = 2.0;
  auto top = top_filter_trigrams(term, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].filter, 5);
  EXPECT_EQ(top[0].window, (std::vector<int>{1, 3, 2}));
  EXPECT_EQ(top[0].score, 6.0);
  auto csv = lines(filters_csv(top, {"O", "B-LOC", "E-LOC", "I-LOC"}));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0], "rank,filter,window,score");
  EXPECT_NE(csv[1].find("B-LOC I-LOC E-LOC"), std::string::npos) << csv[1];
}

TEST(Inspect, FiltersMatchEnumeration) {
  StructuredTerm term = build("cnn", 2, 5, 9);
  const CnnEnergy& cnn = std::get<CnnEnergy>(term);
  const int filters = cnn.filters.dim(0);
  std::vector<double> best(filters, -1e300);
  std::vector<std::vector<int>> arg(filters);
  for (int n = 0; n < filters; ++n)
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b)
        for (int c = 0; c < 5; ++c) {
          const double s = cnn.filters.at(n, a) + cnn.filters.at(n, 5 + b) + cnn.filters.at(n, 10 + c);
          if (s > best[n]) {
            best[n] = s;
            arg[n] = {a, b, c};
          }
        }
  auto top = top_filter_trigrams(term, filters);
  ASSERT_EQ(static_cast<int>(top.size()), filters);
  for (size_t i = 0; i < top.size(); ++i) {
    EXPECT_NEAR(top[i].score, best[top[i].filter], 1e-12);
    EXPECT_EQ(top[i].window, arg[top[i].filter]);
    if (i > 0) EXPECT_GE(top[i - 1].score, top[i].score);
  }
  EXPECT_THROW(top_filter_trigrams(build("linear-chain", 1, 5, 9), 3), ContractError);
  EXPECT_THROW(top_filter_trigrams(build("cnn", 9, 5, 9), 3), ContractError);
}
