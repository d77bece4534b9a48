#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqinf/energies.h"
#include "seqinf/errors.h"
#include "seqinf/exact_inference.h"
#include "test_helpers.h"

using namespace seqinf;
using seqinf::testing::random_labels;
using seqinf::testing::random_tensor;
using seqinf::testing::values;

namespace {

ChainPotentials random_chain(int steps, int labels, Rng& rng, double range = 2.0) {
  return ChainPotentials::from_tensors(random_tensor({steps, labels}, rng, -range, range, false),
                                       random_tensor({labels, labels}, rng, -range, range, false));
}

ChainPotentials zero_chain(int steps, int labels) {
  return ChainPotentials::from_tensors(Tensor::zeros({steps, labels}), Tensor::zeros({labels, labels}));
}

struct Best {
  double score = -std::numeric_limits<double>::infinity();
  std::vector<int> labels;
  int count = 0;
};

Best brute_max(const ChainPotentials& p) {
  Best best;
  enumerate_sequences(p.length, p.num_labels, [&](std::span<const int> seq) {
    const double s = p.score(seq);
    if (s > best.score) {
      best = {s, {seq.begin(), seq.end()}, 1};
    } else if (s == best.score) {
      ++best.count;
    }
  });
  return best;
}

double brute_log_z(const ChainPotentials& p) {
  double total = 0;
  enumerate_sequences(p.length, p.num_labels, [&](std::span<const int> seq) { total += std::exp(p.score(seq)); });
  return std::log(total);
}

void zero_all(const ParamList& params) {
  for (const NamedParam& p : params)
    for (double& x : Tensor(p.tensor).mutable_data()) x = 0.0;
}

}  // namespace

TEST(Viterbi, ZeroScoresPickLabelZero) {
  const Decoded d = viterbi_decode(zero_chain(5, 3));
  EXPECT_EQ(d.labels, std::vector<int>(5, 0));
  EXPECT_EQ(d.score, 0.0);
}

TEST(Viterbi, SinglePositionIsRowArgmax) {
  ChainPotentials p = ChainPotentials::from_tensors(Tensor::from({1, 4}, {0.1, 2.0, -1.0, 2.0}),
                                                    Tensor::zeros({4, 4}));
  const Decoded d = viterbi_decode(p);
  EXPECT_EQ(d.labels, std::vector<int>{1});
  EXPECT_EQ(d.score, 2.0);
}

TEST(Viterbi, MatchesBruteForce) {
  Rng rng(1);
  for (int n = 0; n < 200; ++n) {
    ChainPotentials p = random_chain(rng.range(1, 6), rng.range(2, 4), rng);
    const Decoded d = viterbi_decode(p);
    const Best b = brute_max(p);
    EXPECT_NEAR(d.score, b.score, 1e-12);
    EXPECT_NEAR(p.score(d.labels), d.score, 1e-12);
    if (b.count == 1) EXPECT_EQ(d.labels, b.labels);
  }
}

// Lowest final label, then lowest label at every backpointer: the optimal
// sequence that is smallest when compared from the last position backwards.
std::vector<int> reverse_first_optimum(const ChainPotentials& p) {
  const double best = brute_max(p).score;
  std::vector<int> out;
  enumerate_sequences(p.length, p.num_labels, [&](std::span<const int> seq) {
    if (p.score(seq) != best) return;
    std::vector<int> cand(seq.begin(), seq.end());
    if (out.empty() || std::lexicographical_compare(cand.rbegin(), cand.rend(), out.rbegin(), out.rend())) {
      out = cand;
    }
  });
  return out;
}

TEST(Viterbi, TiesPreferLowestLabelAtEachBackpointer) {
  Rng rng(2);
  for (int n = 0; n < 100; ++n) {
    // Integer scores produce frequent ties.
    const int steps = rng.range(1, 5), labels = rng.range(2, 3);
    std::vector<double> u(steps * labels), w(labels * labels);
    for (double& x : u) x = static_cast<double>(rng.below(2));
    for (double& x : w) x = static_cast<double>(rng.below(2));
    ChainPotentials p = ChainPotentials::from_tensors(Tensor::from({steps, labels}, u),
                                                      Tensor::from({labels, labels}, w));
    EXPECT_EQ(viterbi_decode(p).labels, reverse_first_optimum(p));
  }
}

TEST(Viterbi, BeatsSampledSequences) {
  Rng rng(3);
  for (int n = 0; n < 20; ++n) {
    ChainPotentials p = random_chain(rng.range(3, 10), rng.range(2, 5), rng);
    const double best = viterbi_decode(p).score;
    for (int s = 0; s < 1000; ++s) EXPECT_GE(best + 1e-12, p.score(random_labels(p.length, p.num_labels, rng)));
  }
}

TEST(LogPartition, Examples) {
  EXPECT_NEAR(crf_log_partition(zero_chain(4, 3)), 4 * std::log(3.0), 1e-12);
  ChainPotentials one = ChainPotentials::from_tensors(Tensor::from({1, 3}, {0.5, -1, 2}), Tensor::zeros({3, 3}));
  EXPECT_NEAR(crf_log_partition(one), std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0)), 1e-12);
  Rng rng(4);
  for (int n = 0; n < 20; ++n) {
    ChainPotentials p = random_chain(4, 3, rng);
    EXPECT_NEAR(crf_log_partition(p), brute_log_z(p), 1e-8);
  }
}

TEST(LogPartition, ShiftInvariance) {
  Rng rng(5);
  for (int n = 0; n < 20; ++n) {
    ChainPotentials p = random_chain(rng.range(1, 8), 4, rng);
    ChainPotentials q = p;
    const double c = rng.uniform(-50, 50);
    for (double& u : q.unary) u += c;
    EXPECT_NEAR(crf_log_partition(q), crf_log_partition(p) + p.length * c, 1e-8);
  }
}

TEST(LogPartition, MarginalsSumToOneAndMatchEnumeration) {
  Rng rng(6);
  ChainPotentials p = random_chain(4, 3, rng);
  const std::vector<double> m = crf_marginals(p);
  const double log_z = brute_log_z(p);
  std::vector<double> expected(12, 0.0);
  enumerate_sequences(4, 3, [&](std::span<const int> seq) {
    const double prob = std::exp(p.score(seq) - log_z);
    for (int t = 0; t < 4; ++t) expected[t * 3 + seq[t]] += prob;
  });
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(m[i], expected[i], 1e-10);
}

TEST(CrfNll, Examples) {
  EXPECT_NEAR(crf_nll(zero_chain(5, 4), std::vector<int>{0, 1, 2, 3, 0}), 5 * std::log(4.0), 1e-12);
  Rng rng(7);
  ChainPotentials p = random_chain(4, 3, rng);
  const std::vector<int> gold{2, 0, 1, 1};
  for (int t = 0; t < 4; ++t) p.unary[t * 3 + gold[t]] += 1000.0;
  EXPECT_NEAR(crf_nll(p, gold), 0.0, 1e-9);
  EXPECT_THROW(crf_nll(p, std::vector<int>{0, 1, 3, 0}), ContractError);
  EXPECT_THROW(crf_nll(p, std::vector<int>{0, 1}), ContractError);
}

TEST(CrfNll, NonNegative) {
  Rng rng(8);
  for (int n = 0; n < 200; ++n) {
    ChainPotentials p = random_chain(rng.range(1, 8), rng.range(2, 5), rng, 5.0);
    EXPECT_GE(crf_nll(p, random_labels(p.length, p.num_labels, rng)), -1e-9);
  }
}

TEST(CrfNll, GradientMatchesFiniteDifferences) {
  PrecisionScope precision(Precision::kDouble);
  Rng rng(9);
  for (int n = 0; n < 20; ++n) {
    const int steps = rng.range(1, 6), labels = rng.range(2, 4);
    Tensor u = random_tensor({steps, labels}, rng, -2, 2), w = random_tensor({labels, labels}, rng, -2, 2);
    const std::vector<int> gold = random_labels(steps, labels, rng);
    EXPECT_GRAD_OK([&] { return crf_nll_loss(u, w, gold); }, (std::vector<Tensor>{u, w}));
    EXPECT_NEAR(crf_nll_loss(u, w, gold).item(),
                crf_nll(ChainPotentials::from_tensors(u, w), gold), 1e-12);
  }
}

TEST(CrfNll, UnaryGradientIsMarginalsMinusGold) {
  Rng rng(10);
  Tensor u = random_tensor({4, 3}, rng), w = random_tensor({3, 3}, rng);
  const std::vector<int> gold{1, 1, 0, 2};
  Tape tape;
  tape.backward(crf_nll_loss(u, w, gold));
  const std::vector<double> m = crf_marginals(ChainPotentials::from_tensors(u, w));
  for (int t = 0; t < 4; ++t)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(u.grad()[t * 3 + j], m[t * 3 + j] - (gold[t] == j), 1e-12);
}

TEST(BruteForce, ZeroModelReturnsFirstSequence) {
  Rng rng(11);
  EnergyModel model({6, 3, 3, 2, 1}, StructuredConfig{}, rng);
  zero_all({{"u", model.unary().u}});
  zero_all(structured_params(model.structured()));
  const ArgminResult r = brute_force_argmin(model, std::vector<int>{1, 2, 3});
  EXPECT_EQ(r.energy, 0.0);
  EXPECT_EQ(r.labels, (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(values(r.y), values(one_hot(r.labels, 3)));
}

TEST(BruteForce, AgreesWithViterbiOnLinearChain) {
  PrecisionScope precision(Precision::kDouble);
  Rng rng(12);
  StructuredConfig cfg;
  cfg.init_range = 1.0;
  for (int n = 0; n < 30; ++n) {
    EnergyModel model({10, 3, 4, 3, 1}, cfg, rng);
    std::vector<int> tokens = random_labels(rng.range(1, 5), 10, rng);
    const ArgminResult r = brute_force_argmin(model, tokens);
    NoGradScope no_grad;
    const Decoded d = viterbi_decode(ChainPotentials::from_tensors(
        model.unary_scores(tokens), std::get<LinearChainEnergy>(model.structured()).w));
    EXPECT_NEAR(r.energy, -d.score, 1e-9);
    EXPECT_EQ(r.labels, d.labels);
  }
}

TEST(BruteForce, SkipChainBeatsSamples) {
  Rng rng(13);
  StructuredConfig cfg;
  cfg.kind = "skip-chain";
  cfg.order = 2;
  cfg.init_range = 1.0;
  EnergyModel model({10, 3, 4, 3, 1}, cfg, rng);
  const std::vector<int> tokens{1, 5, 2, 8, 3};
  const ArgminResult r = brute_force_argmin(model, tokens);
  NoGradScope no_grad;
  for (int s = 0; s < 1000; ++s) {
    EXPECT_LE(r.energy, total_energy(tokens, one_hot(random_labels(5, 3, rng), 3), model).item() + 1e-12);
  }
}

TEST(BruteForce, MinimumNotAboveGold) {
  Rng rng(14);
  for (const char* kind : {"linear-chain", "vkp", "tlm"}) {
    StructuredConfig cfg;
    cfg.kind = kind;
    cfg.order = 2;
    cfg.label_dim = 3;
    cfg.tlm_hidden = 3;
    EnergyModel model({10, 3, 4, 3, 1}, cfg, rng);
    const std::vector<int> tokens{4, 2, 9};
    const std::vector<int> gold = random_labels(3, 3, rng);
    NoGradScope no_grad;
    EXPECT_LE(brute_force_argmin(model, tokens).energy,
              total_energy(tokens, one_hot(gold, 3), model).item() + 1e-12);
  }
}

TEST(BruteForce, GuardRejectsLargeInstances) {
  EXPECT_THROW(enumerate_sequences(21, 2, [](std::span<const int>) {}), ContractError);
  int count = 0;
  enumerate_sequences(3, 4, [&](std::span<const int>) { ++count; });
  EXPECT_EQ(count, 64);
  Rng rng(15);
  EnergyModel model({5, 10, 3, 2, 1}, StructuredConfig{}, rng);
  EXPECT_THROW(brute_force_argmin(model, std::vector<int>(7, 1)), ContractError);
}
