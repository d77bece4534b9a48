#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "seqinf/energies.h"
#include "seqinf/errors.h"
#include "seqinf/exact_inference.h"
#include "seqinf/gradcheck.h"
#include "test_helpers.h"

using namespace seqinf;
using seqinf::testing::random_simplex;
using seqinf::testing::random_tensor;
using seqinf::testing::values;

namespace {

using Vec = std::vector<double>;

void fill(const Tensor& t, double v) {
  for (double& x : Tensor(t).mutable_data()) x = v;
}

void zero_all(const ParamList& params) {
  for (const NamedParam& p : params) fill(p.tensor, 0.0);
}

StructuredTerm build(const std::string& kind, int order, int labels, uint64_t seed,
                     bool whole = false) {
  StructuredConfig cfg;
  cfg.kind = kind;
  cfg.order = order;
  cfg.whole_sequence = whole;
  cfg.label_dim = 3;
  cfg.filters = 4;
  cfg.tlm_hidden = 3;
  cfg.rank = 3;
  cfg.init_range = 0.5;
  Rng rng(seed);
  return make_structured(cfg, labels, rng);
}

double energy(const Tensor& y, const StructuredTerm& term) { return structured_energy(y, term).item(); }

// Plain loops over row-major buffers.
Vec row(const Tensor& m, int r) {
  Vec out(m.dim(1));
  for (int c = 0; c < m.dim(1); ++c) out[c] = m.at(r, c);
  return out;
}

Vec vec_mat(const Vec& x, const Tensor& m) {
  Vec out(m.dim(1), 0.0);
  for (int c = 0; c < m.dim(1); ++c)
    for (size_t r = 0; r < x.size(); ++r) out[c] += x[r] * m.at(static_cast<int>(r), c);
  return out;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double bilinear(const Tensor& y, int a, const Tensor& w, int b) {
  return dot(vec_mat(row(y, a), w), row(y, b));
}

// Scalar replay of v . LayerNorm(z + MLP(z)).
double vkp_entry_oracle(const std::vector<int>& idx, const VkpEnergy& vkp) {
  Vec z;
  for (int j : idx) {
    Vec e = row(vkp.label_embeddings, j);
    z.insert(z.end(), e.begin(), e.end());
  }
  Vec h = z;
  const Mlp& mlp = vkp.mlp;
  for (size_t l = 0; l < mlp.sizes().size() - 1; ++l) {
    Tensor w = const_cast<Mlp&>(mlp).weights()[l];
    Vec b = values(const_cast<Mlp&>(mlp).biases()[l]);
    Vec next(w.dim(1), 0.0);
    for (int c = 0; c < w.dim(1); ++c) {
      double s = b[c];
      for (int r = 0; r < w.dim(0); ++r) s += h[r] * w.at(r, c);
      next[c] = l + 2 < mlp.sizes().size() ? std::tanh(s) : s;
    }
    h = next;
  }
  Vec u(z.size());
  for (size_t i = 0; i < z.size(); ++i) u[i] = z[i] + h[i];
  double mean = 0, var = 0;
  for (double x : u) mean += x / u.size();
  for (double x : u) var += (x - mean) * (x - mean) / u.size();
  const Vec g = values(vkp.norm_gain), bias = values(vkp.norm_bias), v = values(vkp.v);
  double out = 0;
  for (size_t i = 0; i < u.size(); ++i) out += v[i] * (g[i] * (u[i] - mean) / std::sqrt(var + 1e-5) + bias[i]);
  return out;
}

// Scalar replay of one LSTM step.
void lstm_oracle(const Vec& x, Vec& h, Vec& c, const LstmCell& cell) {
  const int n = cell.hidden_dim;
  Vec pre = values(cell.bias);
  for (int k = 0; k < 4 * n; ++k) {
    for (size_t i = 0; i < x.size(); ++i) pre[k] += x[i] * cell.w_input.at(static_cast<int>(i), k);
    for (int i = 0; i < n; ++i) pre[k] += h[i] * cell.w_recurrent.at(i, k);
  }
  for (int i = 0; i < n; ++i) {
    const double in = sigm(pre[i]), f = sigm(pre[n + i]), g = std::tanh(pre[2 * n + i]),
                 o = sigm(pre[3 * n + i]);
    c[i] = f * c[i] + in * g;
    h[i] = o * std::tanh(c[i]);
  }
}

Vec log_softmax_head(const Vec& h, const ClassifierHead& head) {
  const int labels = head.num_labels();
  Vec logits(labels);
  for (int j = 0; j < labels; ++j) logits[j] = head.bias.data()[j] + dot(row(head.weight, j), h);
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  for (double& l : logits) l = l - mx - std::log(z);
  return logits;
}

double tlm_whole_oracle(const Tensor& y, const TlmEnergy& tlm) {
  const int n = tlm.cell.hidden_dim;
  Vec h(n, 0.0), c(n, 0.0);
  double e = 0;
  for (int t = 0; t < y.dim(0); ++t) {
    Vec x = t == 0 ? row(tlm.start, 0) : vec_mat(row(y, t - 1), tlm.label_embeddings);
    lstm_oracle(x, h, c, tlm.cell);
    e -= dot(row(y, t), log_softmax_head(h, tlm.output));
  }
  return e;
}

double tlm_window_oracle(const Tensor& y, const TlmEnergy& tlm) {
  const int n = tlm.cell.hidden_dim, m = tlm.order;
  double e = 0;
  for (int s = 0; s + m < y.dim(0); ++s) {
    Vec h(n, 0.0), c(n, 0.0);
    for (int k = 0; k < m; ++k) {
      lstm_oracle(vec_mat(row(y, s + k), tlm.label_embeddings), h, c, tlm.cell);
      e -= dot(row(y, s + k + 1), log_softmax_head(h, tlm.output));
    }
  }
  return e;
}

double attention_oracle(const Tensor& y, int begin, int end, const SelfAttentionEnergy& sa) {
  const int labels = sa.query.dim(0);
  std::vector<Vec> q, k, v;
  for (int t = begin; t < end; ++t) {
    q.push_back(vec_mat(row(y, t), sa.query));
    k.push_back(vec_mat(row(y, t), sa.key));
    v.push_back(vec_mat(row(y, t), sa.value));
  }
  double total = 0;
  for (size_t a = 0; a < q.size(); ++a) {
    Vec s(k.size());
    double mx = -1e300, z = 0;
    for (size_t b = 0; b < k.size(); ++b) mx = std::max(mx, s[b] = dot(q[a], k[b]) / std::sqrt(labels));
    for (double& x : s) z += x = std::exp(x - mx);
    for (size_t b = 0; b < k.size(); ++b)
      for (double x : v[b]) total += s[b] / z * x;
  }
  return total;
}

double cnn_oracle(const Tensor& y, const CnnEnergy& cnn) {
  const int labels = y.dim(1), m = cnn.order;
  double e = 0;
  for (int s = 0; s + m < y.dim(0); ++s) {
    for (int n = 0; n < cnn.filters.dim(0); ++n) {
      double a = cnn.bias.data()[n];
      for (int p = 0; p <= m; ++p)
        for (int j = 0; j < labels; ++j) a += cnn.filters.at(n, p * labels + j) * y.at(s + p, j);
      e += std::max(0.0, a);
    }
  }
  return e;
}

// Sum over all discrete sequences of prod_t y[t, seq_t] * f(seq).
double expectation(const Tensor& y, const std::function<double(std::span<const int>)>& f) {
  double total = 0;
  enumerate_sequences(y.dim(0), y.dim(1), [&](std::span<const int> seq) {
    double p = 1;
    for (int t = 0; t < y.dim(0); ++t) p *= y.at(t, seq[t]);
    total += p * f(seq);
  });
  return total;
}

class Energies : public ::testing::Test {
 protected:
  PrecisionScope precision{Precision::kDouble};
};

}  // namespace

TEST_F(Energies, RelaxedLabelChecks) {
  EXPECT_TRUE(RelaxedLabelSequence::one_hot(std::vector<int>{0, 2}, 3).discrete);
  EXPECT_FALSE(RelaxedLabelSequence::uniform(2, 3).discrete);
  EXPECT_THROW(RelaxedLabelSequence::checked(Tensor::from({1, 2}, {0.5, 0.6})), ContractError);
  EXPECT_THROW(RelaxedLabelSequence::checked(Tensor::from({1, 2}, {1.5, -0.5})), ContractError);
  EXPECT_TRUE(RelaxedLabelSequence::checked(Tensor::from({1, 2}, {0, 1})).discrete);
}

TEST_F(Energies, UnaryExamples) {
  Rng rng(1);
  Tensor b = random_tensor({3, 4}, rng, -1, 1, false);
  UnaryEnergy u{random_tensor({2, 4}, rng, -1, 1, false)};
  EXPECT_EQ(unary_energy(b, one_hot(std::vector<int>{0, 1, 0}, 2), UnaryEnergy{Tensor::zeros({2, 4})}).item(), 0.0);
  const std::vector<int> labels{1, 0, 1};
  double sel = 0, uni = 0;
  for (int t = 0; t < 3; ++t) {
    sel += dot(row(u.u, labels[t]), row(b, t));
    for (int j = 0; j < 2; ++j) uni += 0.5 * dot(row(u.u, j), row(b, t));
  }
  EXPECT_NEAR(unary_energy(b, one_hot(labels, 2), u).item(), sel, 1e-12);
  EXPECT_NEAR(unary_energy(b, RelaxedLabelSequence::uniform(3, 2).y, u).item(), uni, 1e-12);
  EXPECT_ANY_THROW(unary_energy(b, one_hot(std::vector<int>{0}, 2), u));
}

TEST_F(Energies, LinearChainExamples) {
  Rng rng(2);
  LinearChainEnergy lc{random_tensor({3, 3}, rng)};
  const double a_b_a = energy(one_hot(std::vector<int>{0, 1, 0}, 3), lc);
  EXPECT_NEAR(a_b_a, lc.w.at(0, 1) + lc.w.at(1, 0), 1e-12);
  EXPECT_EQ(linear_chain_energy(RelaxedLabelSequence::uniform(4, 3).y, {Tensor::zeros({3, 3})}).item(), 0.0);
  double all = 0;
  for (double v : values(lc.w)) all += v;
  EXPECT_NEAR(linear_chain_energy(RelaxedLabelSequence::uniform(2, 3).y, lc).item(), all / 9, 1e-12);
  EXPECT_EQ(linear_chain_energy(one_hot(std::vector<int>{2}, 3), lc).item(), 0.0);
}

TEST_F(Energies, SkipChainExamples) {
  Rng rng(3);
  SkipChainEnergy sc{{random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}};
  const double e = energy(one_hot(std::vector<int>{0, 2, 1}, 3), sc);
  EXPECT_NEAR(e, sc.w[0].at(0, 2) + sc.w[0].at(2, 1) + sc.w[1].at(0, 1), 1e-12);
  for (int n = 0; n < 20; ++n) {
    Tensor w = random_tensor({4, 4}, rng);
    Tensor y = random_simplex(rng.range(1, 6), 4, rng, false);
    EXPECT_EQ(skip_chain_energy(y, {{w}}).item(), linear_chain_energy(y, {w}).item());
  }
  SkipChainEnergy zero{{Tensor::zeros({3, 3}), Tensor::zeros({3, 3})}};
  EXPECT_EQ(skip_chain_energy(random_simplex(5, 3, rng, false), zero).item(), 0.0);
}

TEST_F(Energies, PairwiseTermsMatchEnumeratedExpectation) {
  Rng rng(4);
  for (int n = 0; n < 30; ++n) {
    const int steps = rng.range(1, 4), labels = rng.range(2, 3);
    const int window = rng.range(1, 3);
    SkipChainEnergy sc;
    for (int i = 0; i < window; ++i) sc.w.push_back(random_tensor({labels, labels}, rng));
    Tensor y = random_simplex(steps, labels, rng, false);
    const double expected = expectation(y, [&](std::span<const int> seq) {
      double s = 0;
      for (int t = 0; t < steps; ++t)
        for (int i = 1; i <= window && t - i >= 0; ++i) s += sc.w[i - 1].at(seq[t - i], seq[t]);
      return s;
    });
    EXPECT_NEAR(energy(y, sc), expected, 1e-10);
    EXPECT_NEAR(energy(y, LinearChainEnergy{sc.w[0]}),
                expectation(y, [&](std::span<const int> seq) {
                  double s = 0;
                  for (int t = 1; t < steps; ++t) s += sc.w[0].at(seq[t - 1], seq[t]);
                  return s;
                }),
                1e-10);
  }
}

TEST_F(Energies, PairwiseTermsAreAffinePerRow) {
  Rng rng(5);
  for (const char* kind : {"linear-chain", "skip-chain", "fully-connected"}) {
    for (int n = 0; n < 10; ++n) {
      StructuredTerm term = build(kind, 3, 4, 100 + n);
      Tensor a = random_simplex(5, 4, rng, false), b = random_simplex(5, 4, rng, false);
      const int t = rng.range(0, 4);
      auto mix = [&](double alpha) {
        Tensor y = a.clone(false);
        for (int j = 0; j < 4; ++j) y.mutable_data()[t * 4 + j] = alpha * a.at(t, j) + (1 - alpha) * b.at(t, j);
        return energy(y, term);
      };
      const double e0 = mix(0), e1 = mix(1);
      for (double alpha : {0.25, 0.5, 0.8}) EXPECT_NEAR(mix(alpha), alpha * e1 + (1 - alpha) * e0, 1e-10) << kind;
    }
  }
}

TEST_F(Energies, KronProduct) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Vec ei(3, 0.0), ej(3, 0.0);
      ei[i] = ej[j] = 1.0;
      const Vec k = values(kron_product({Tensor::from({3}, ei), Tensor::from({3}, ej)}));
      for (int f = 0; f < 9; ++f) EXPECT_EQ(k[f], f == i * 3 + j ? 1.0 : 0.0);
    }
  }
  Tensor v = Tensor::from({3}, {1, -2, 4});
  EXPECT_EQ(values(kron_product({v})), values(v));
  Rng rng(6);
  Tensor a = random_tensor({2}, rng), b = random_tensor({2}, rng), c = random_tensor({2}, rng);
  const Vec k = values(kron_product({a, b, c}));
  ASSERT_EQ(k.size(), 8u);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l)
        EXPECT_NEAR(k[(i * 2 + j) * 2 + l], a.data()[i] * b.data()[j] * c.data()[l], 1e-15);
  EXPECT_THROW(kron_product({}), ContractError);
}

TEST_F(Energies, VkpEntryMatchesScalarOracle) {
  for (int m = 1; m <= 3; ++m) {
    const VkpEnergy vkp = std::get<VkpEnergy>(build("vkp", m, 3, 10 + m));
    std::vector<int> idx(m + 1, 0);
    enumerate_sequences(m + 1, 3, [&](std::span<const int> tuple) {
      std::vector<int> t(tuple.begin(), tuple.end());
      EXPECT_NEAR(vkp_entry(tuple, vkp), vkp_entry_oracle(t, vkp), 1e-10);
    });
    EXPECT_THROW(vkp_entry(std::vector<int>(m + 1, 3), vkp), ContractError);
  }
}

TEST_F(Energies, VkpReductions) {
  VkpEnergy vkp = std::get<VkpEnergy>(build("vkp", 2, 3, 20));
  const std::vector<int> tuple{2, 0, 1};
  EXPECT_NEAR(energy(one_hot(tuple, 3), vkp), vkp_entry(tuple, vkp), 1e-12);
  // Zero MLP: entry = v . LayerNorm(z).
  zero_all(vkp.mlp.params());
  Vec z;
  for (int j : tuple) {
    Vec e = row(vkp.label_embeddings, j);
    z.insert(z.end(), e.begin(), e.end());
  }
  Tensor ln = layer_norm(Tensor::from({static_cast<int>(z.size())}, z), vkp.norm_gain, vkp.norm_bias);
  EXPECT_NEAR(vkp_entry(tuple, vkp), dot(values(ln), values(vkp.v)), 1e-12);
  fill(vkp.v, 0.0);
  Rng rng(21);
  EXPECT_EQ(energy(random_simplex(5, 3, rng, false), vkp), 0.0);
  EXPECT_EQ(energy(random_simplex(2, 3, rng, false), std::get<VkpEnergy>(build("vkp", 2, 3, 22))), 0.0);
}

TEST_F(Energies, VkpEnergyMatchesTupleEnumeration) {
  Rng rng(23);
  for (int n = 0; n < 5; ++n) {
    const VkpEnergy vkp = std::get<VkpEnergy>(build("vkp", 2, 3, 30 + n));
    Tensor y = random_simplex(4, 3, rng, false);
    double expected = 0;
    for (int s = 0; s + 2 < 4; ++s) {
      enumerate_sequences(3, 3, [&](std::span<const int> tuple) {
        double p = 1;
        for (int k = 0; k < 3; ++k) p *= y.at(s + k, tuple[k]);
        expected += p * vkp_entry(tuple, vkp);
      });
    }
    EXPECT_NEAR(energy(y, vkp), expected, 1e-10);
  }
}

TEST_F(Energies, VkpSumAddsOrders) {
  StructuredConfig cfg;
  cfg.kind = "vkp";
  cfg.vkp_orders = {1, 2};
  cfg.label_dim = 3;
  Rng rng(24);
  StructuredTerm term = make_structured(cfg, 3, rng);
  const auto& parts = std::get<VkpSumEnergy>(term).terms;
  Tensor y = random_simplex(5, 3, rng, false);
  EXPECT_NEAR(energy(y, term), energy(y, parts[0]) + energy(y, parts[1]), 1e-12);
}

TEST_F(Energies, CnnExamples) {
  CnnEnergy cnn = std::get<CnnEnergy>(build("cnn", 2, 3, 40));
  Rng rng(41);
  Tensor y = random_simplex(4, 3, rng, false);
  EXPECT_NEAR(energy(y, cnn), cnn_oracle(y, cnn), 1e-12);
  CnnEnergy one{2, Tensor::zeros({1, 9}), Tensor::filled({1}, 1.0)};
  EXPECT_DOUBLE_EQ(energy(y, one), 2.0);
  one.bias = Tensor::filled({1}, -5.0);
  EXPECT_EQ(energy(y, one), 0.0);
  EXPECT_EQ(energy(random_simplex(2, 3, rng, false), cnn), 0.0);
  for (int n = 0; n < 20; ++n) {
    CnnEnergy c = std::get<CnnEnergy>(build("cnn", rng.range(1, 4), 3, 50 + n));
    Tensor yy = random_simplex(rng.range(1, 7), 3, rng, false);
    EXPECT_NEAR(energy(yy, c), cnn_oracle(yy, c), 1e-12);
  }
}

TEST_F(Energies, TlmExamples) {
  Rng rng(60);
  TlmEnergy tlm = std::get<TlmEnergy>(build("tlm", 2, 4, 61, true));
  for (int n = 0; n < 10; ++n) {
    Tensor y = random_simplex(rng.range(1, 6), 4, rng, false);
    EXPECT_NEAR(energy(y, tlm), tlm_whole_oracle(y, tlm), 1e-10);
  }
  const std::vector<int> tags{3, 0, 0, 2};
  double nll = 0;
  {
    const int n = tlm.cell.hidden_dim;
    Vec h(n, 0.0), c(n, 0.0);
    for (size_t t = 0; t < tags.size(); ++t) {
      Vec x = t == 0 ? row(tlm.start, 0) : row(tlm.label_embeddings, tags[t - 1]);
      lstm_oracle(x, h, c, tlm.cell);
      nll -= log_softmax_head(h, tlm.output)[tags[t]];
    }
  }
  EXPECT_NEAR(energy(one_hot(tags, 4), tlm), nll, 1e-10);
  EXPECT_GT(nll, 0.0);
  zero_all(tlm.output.params());
  EXPECT_NEAR(energy(random_simplex(5, 4, rng, false), tlm), 5 * std::log(4.0), 1e-12);

  for (int m = 1; m <= 3; ++m) {
    TlmEnergy w = std::get<TlmEnergy>(build("tlm", m, 3, 70 + m));
    for (int n = 0; n < 5; ++n) {
      Tensor y = random_simplex(rng.range(1, 6), 3, rng, false);
      EXPECT_NEAR(energy(y, w), tlm_window_oracle(y, w), 1e-10);
    }
  }
}

TEST_F(Energies, SelfAttentionExamples) {
  Rng rng(80);
  SelfAttentionEnergy sa = std::get<SelfAttentionEnergy>(build("self-attention", 1, 2, 81));
  for (int n = 0; n < 10; ++n) {
    Tensor y = random_simplex(rng.range(1, 6), 2, rng, false);
    double expected = 0;
    for (int s = 0; s + 1 < y.dim(0); ++s) expected += attention_oracle(y, s, s + 2, sa);
    EXPECT_NEAR(energy(y, sa), expected, 1e-12);
  }
  SelfAttentionEnergy whole = std::get<SelfAttentionEnergy>(build("self-attention", 1, 3, 82, true));
  Tensor y = random_simplex(4, 3, rng, false);
  EXPECT_NEAR(energy(y, whole), attention_oracle(y, 0, 4, whole), 1e-12);

  SelfAttentionEnergy uni = std::get<SelfAttentionEnergy>(build("self-attention", 2, 3, 83));
  fill(uni.query, 0.0);
  Tensor y5 = random_simplex(5, 3, rng, false);
  double expected = 0;
  for (int s = 0; s + 2 < 5; ++s)
    for (int t = s; t <= s + 2; ++t)
      for (double v : vec_mat(row(y5, t), uni.value)) expected += v;
  EXPECT_NEAR(energy(y5, uni), expected, 1e-12);
  fill(uni.value, 0.0);
  EXPECT_EQ(energy(y5, uni), 0.0);
}

TEST_F(Energies, FullyConnectedMatchesMaterialized) {
  Rng rng(90);
  for (int n = 0; n < 20; ++n) {
    const int labels = rng.range(2, 5);
    FullyConnectedEnergy fc = std::get<FullyConnectedEnergy>(build("fully-connected", rng.range(1, 5), labels, 91 + n));
    SkipChainEnergy sc;
    for (const Tensor& d : fc.d) sc.w.push_back(matmul_nt(fc.s, d));
    Tensor y = random_simplex(rng.range(1, 8), labels, rng, false);
    EXPECT_NEAR(energy(y, fc), energy(y, sc), 1e-6);
  }
  FullyConnectedEnergy fc = std::get<FullyConnectedEnergy>(build("fully-connected", 2, 3, 120));
  Tensor y = random_simplex(5, 3, rng, false);
  FullyConnectedEnergy zero_s = fc;
  zero_s.s = Tensor::zeros({3, 3});
  EXPECT_EQ(energy(y, zero_s), 0.0);
  FullyConnectedEnergy ident = fc;
  ident.s = Tensor::identity(3);
  SkipChainEnergy transposed{{transpose(fc.d[0]), transpose(fc.d[1])}};
  EXPECT_NEAR(energy(y, ident), energy(y, transposed), 1e-12);
}

TEST_F(Energies, ShortSequencesContributeNothing) {
  Rng rng(130);
  for (const char* kind : {"vkp", "cnn", "self-attention", "tlm"}) {
    StructuredTerm term = build(kind, 3, 3, 131);
    EXPECT_EQ(energy(random_simplex(3, 3, rng, false), term), 0.0) << kind;
  }
}

TEST_F(Energies, TotalEnergySign) {
  Rng rng(140);
  EnergyModel model({8, 3, 4, 3, 1}, StructuredConfig{}, rng);
  const std::vector<int> tokens{1, 4, 7};
  Tensor y = one_hot(std::vector<int>{2, 0, 1}, 3);
  Tensor scores = model.unary_scores(tokens);
  const double base = model.energy_from_scores(scores, y).item();
  EXPECT_NEAR(total_energy(tokens, y, model).item(), base, 1e-12);
  EXPECT_NEAR(base, -(sum(y * scores).item() + energy(y, model.structured())), 1e-12);
  Tensor bumped = scores.clone(false);
  bumped.mutable_data()[0 * 3 + 2] += 0.5;
  EXPECT_LT(model.energy_from_scores(bumped, y).item(), base);
  EXPECT_THROW(total_energy(std::vector<int>{1, 2}, y, model), ContractError);

  zero_all({{"u", model.unary().u}});
  zero_all(structured_params(model.structured()));
  EXPECT_EQ(total_energy(tokens, y, model).item(), 0.0);
}

TEST(EnergyGradients, EveryTermPassesRandomizedCheck) {
  struct Case {
    const char* kind;
    int order;
    bool whole;
  };
  const Case cases[] = {{"linear-chain", 1, false}, {"skip-chain", 3, false}, {"vkp", 2, false},
                        {"cnn", 2, false},          {"tlm", 2, false},        {"tlm", 0, true},
                        {"self-attention", 2, false}, {"self-attention", 0, true},
                        {"fully-connected", 3, false}};
  for (const Case& c : cases) {
    TermCheckSpec spec;
    spec.term.kind = c.kind;
    spec.term.order = c.order;
    spec.term.whole_sequence = c.whole;
    spec.term.label_dim = 4;
    spec.term.filters = 6;
    spec.term.tlm_hidden = 5;
    spec.term.rank = 4;
    spec.term.init_range = 0.5;
    spec.instances = 10;
    const TermCheckResult r = check_term_gradients(spec);
    EXPECT_TRUE(r.pass) << c.kind << " max rel err " << r.max_rel_err;
    EXPECT_GT(r.entries_checked, 0u);
  }
}

TEST(EnergyGradients, CorruptedGradientIsCaught) {
  TermCheckSpec spec;
  spec.term.kind = "linear-chain";
  spec.instances = 3;
  spec.corrupt_gradient = true;
  EXPECT_FALSE(check_term_gradients(spec).pass);
}

TEST(EnergyConfig, UnknownKindRejected) {
  StructuredConfig cfg;
  cfg.kind = "quadratic";
  Rng rng(1);
  EXPECT_THROW(make_structured(cfg, 3, rng), ConfigError);
  cfg.kind = "skip-chain";
  cfg.order = 0;
  EXPECT_THROW(make_structured(cfg, 3, rng), ConfigError);
}
