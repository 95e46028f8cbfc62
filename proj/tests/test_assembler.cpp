#include <gtest/gtest.h>

#include <cmath>

#include "nmtree/nmtree.hpp"
#include "test_util.hpp"

using namespace nmtree;

TEST(Gumbel, InverseEGivesZero) { EXPECT_NEAR(gumbel_from_uniform(std::exp(-1.0)), 0.0, 1e-15); }

TEST(Gumbel, ClampedAtBothEnds) {
  const double lo = gumbel_from_uniform(0.0);
  const double hi = gumbel_from_uniform(1.0);
  EXPECT_TRUE(std::isfinite(lo));
  EXPECT_TRUE(std::isfinite(hi));
  EXPECT_LT(lo, -3.0);
  EXPECT_GT(hi, 20.0);
  EXPECT_EQ(lo, gumbel_from_uniform(1e-300));
}

TEST(Gumbel, SampleMeanIsEulerMascheroni) {
  Rng rng(2024);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_gumbel(rng);
  EXPECT_NEAR(sum / n, 0.5772156649, 0.01);
}

TEST(GumbelDecision, ArgmaxWithoutNoise) {
  auto d = gumbel_decision({2.0, 1.0}, {0.0, 0.0}, 1.0, Mode::Train);
  EXPECT_EQ(d.z, (std::array<double, 2>{1.0, 0.0}));
}

TEST(GumbelDecision, EvenLogProbabilitiesGiveEvenRelaxation) {
  auto d = gumbel_decision({std::log(0.5), std::log(0.5)}, {0.0, 0.0}, 1.0, Mode::Train);
  EXPECT_NEAR(d.z_soft[0], 0.5, 1e-15);
  EXPECT_NEAR(d.z_soft[1], 0.5, 1e-15);
}

TEST(GumbelDecision, SelectionFrequencyFollowsProbabilities) {
  Rng rng(77);
  int zero = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto d = gumbel_decision({std::log(0.7), std::log(0.3)}, {sample_gumbel(rng), sample_gumbel(rng)}, 1.0,
                             Mode::Train);
    zero += d.z[0] == 1.0;
  }
  EXPECT_NEAR(static_cast<double>(zero) / n, 0.7, 0.02);
}

TEST(GumbelDecision, InferenceIgnoresNoise) {
  auto d = gumbel_decision({0.1, 0.3}, {50.0, -50.0}, 1.0, Mode::Infer);
  EXPECT_EQ(d.z, (std::array<double, 2>{0.0, 1.0}));
  EXPECT_EQ(d.z_soft, d.z);
}

TEST(GumbelDecision, TiesGoToSum) {
  auto d = gumbel_decision({0.4, 0.4}, {0.0, 0.0}, 1.0, Mode::Infer);
  EXPECT_EQ(d.z[kSumIndex], 1.0);
}

TEST(GumbelDecision, RejectsNonPositiveTemperature) {
  EXPECT_THROW(gumbel_decision({0, 0}, {0, 0}, 0.0, Mode::Train), std::invalid_argument);
  EXPECT_THROW(gumbel_decision({0, 0}, {0, 0}, -1.0, Mode::Train), std::invalid_argument);
}

TEST(GumbelDecision, OneHotAndNormalizedOnRandomInputs) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 2> l{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    std::array<double, 2> gn{sample_gumbel(rng), sample_gumbel(rng)};
    const double tau = rng.uniform(0.1, 3.0);
    auto d = gumbel_decision(l, gn, tau, Mode::Train);
    EXPECT_EQ(d.z[0] + d.z[1], 1.0);
    EXPECT_TRUE(d.z[0] == 0.0 || d.z[0] == 1.0);
    EXPECT_NEAR(d.z_soft[0] + d.z_soft[1], 1.0, 1e-9);
    // Shifting both logits changes nothing.
    const double c = rng.uniform(-100, 100);
    auto s = gumbel_decision({l[0] + c, l[1] + c}, gn, tau, Mode::Train);
    EXPECT_EQ(s.z, d.z);
    EXPECT_NEAR(s.z_soft[0], d.z_soft[0], 1e-9);
  }
}

TEST(AssemblerLogits, ZeroWeightsAndDeterminism) {
  Graph<double> g;
  Var w = g.constant({2, 5}, std::vector<double>(10, 0.0));
  Var b = g.constant({2}, {0, 0});
  Var e = g.constant({2}, {0.3, -1});
  Var h = g.constant({3}, {1, 2, 3});
  auto out = g.value(assembler_logits(g, w, b, e, h));
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);

  Rng rng(6);
  Var w2 = g.constant({2, 5}, testutil::random_vec(rng, 10));
  auto a = g.value(assembler_logits(g, w2, b, e, h));
  auto a2 = g.value(assembler_logits(g, w2, b, e, h));
  EXPECT_EQ(std::vector<double>(a.begin(), a.end()), std::vector<double>(a2.begin(), a2.end()));
  EXPECT_THROW(assembler_logits(g, w2, b, e, g.constant({2}, {1, 2})), ShapeError);
}

TEST(AssemblerLogits, ContextPerturbationMovesLogitsThroughItsWeightBlock) {
  Rng rng(8);
  auto wv = testutil::random_vec(rng, 10);
  auto logits = [&](const std::vector<double>& w, double h0) {
    Graph<double> g;
    auto v = g.value(assembler_logits(g, g.constant({2, 5}, w), g.constant({2}, {0, 0}),
                                      g.constant({2}, {0.3, -1}), g.constant({3}, {h0, 2, 3})));
    return std::array<double, 2>{v[0], v[1]};
  };
  const double eps = 1e-6;
  auto p = logits(wv, 1 + eps), m = logits(wv, 1 - eps);
  // d logit_k / d h_0 equals the weight in column 2 (after the two e entries).
  EXPECT_NEAR((p[0] - m[0]) / (2 * eps), wv[2], 1e-8);
  EXPECT_NEAR((p[1] - m[1]) / (2 * eps), wv[7], 1e-8);
  auto zeroed = wv;
  for (std::size_t c = 2; c < 5; ++c) zeroed[c] = zeroed[5 + c] = 0.0;
  EXPECT_EQ(logits(zeroed, 1 + eps), logits(zeroed, 1 - eps));
}

TEST(StraightThrough, HardForwardPicksBranch) {
  Graph<double> g;
  Var soft = g.softmax(g.input({2}, {0.3, -0.2}));
  Var b0 = g.input({3}, {1, 2, 3});
  Var b1 = g.input({3}, {-4, 5, 6});
  const std::vector<double> hard{1.0, 0.0};
  auto out = g.value(g.straight_through_mix(hard, soft, {b0, b1}));
  EXPECT_EQ(std::vector<double>(out.begin(), out.end()), (std::vector<double>{1, 2, 3}));
}

TEST(StraightThrough, DegenerateSoftEqualsHardMatchesWeightedMix) {
  auto run = [](bool straight) {
    Graph<double> g;
    Var w = g.input({2}, {1.0, 0.0});
    Var b0 = g.input({2}, {1, 2});
    Var b1 = g.input({2}, {3, -1});
    const std::vector<double> hard{1.0, 0.0};
    Var mix = straight ? g.straight_through_mix(hard, w, {b0, b1}) : g.weighted_mix(w, {b0, b1});
    g.backward(g.sum(g.mul(mix, g.constant({2}, {0.5, -2}))));
    std::vector<double> out;
    for (Var v : {mix, w, b0, b1}) {
      auto s = v.id == mix.id ? g.value(v) : g.grad(v);
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  };
  EXPECT_EQ(run(true), run(false));
}

TEST(StraightThrough, LogitGradientMatchesSoftLossFiniteDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> logits = testutil::random_vec(rng, 2, 2.0);
    const std::vector<double> noise{sample_gumbel(rng), sample_gumbel(rng)};
    const double tau = rng.uniform(0.3, 2.0);
    const auto b0 = testutil::random_vec(rng, 4), b1 = testutil::random_vec(rng, 4);
    const auto w = testutil::random_vec(rng, 4);
    auto relaxed = [&](Graph<double>& g, Var l) {
      return g.softmax(g.scale(g.add(g.log_softmax(l), g.constant({2}, noise)), 1.0 / tau));
    };
    // Analytic gradient through the straight-through estimator.
    Graph<double> g;
    Var l = g.input({2}, logits);
    Var zs = relaxed(g, l);
    auto d = gumbel_decision({logits[0], logits[1]}, {noise[0], noise[1]}, tau, Mode::Train);
    const std::vector<double> hard{d.z[0], d.z[1]};
    Var mix = g.straight_through_mix(hard, zs, {g.constant({4}, b0), g.constant({4}, b1)});
    g.backward(g.sum(g.mul(mix, g.constant({4}, w))));
    // Numeric gradient of the same loss with the relaxed weights in the forward pass.
    auto soft_loss = [&](std::vector<double> lv) {
      Graph<double> h(false);
      Var m = h.weighted_mix(relaxed(h, h.constant({2}, lv)), {h.constant({4}, b0), h.constant({4}, b1)});
      return h.scalar(h.sum(h.mul(m, h.constant({4}, w))));
    };
    for (std::size_t k = 0; k < 2; ++k) {
      auto p = logits, m = logits;
      p[k] += 1e-5;
      m[k] -= 1e-5;
      const double numeric = (soft_loss(p) - soft_loss(m)) / 2e-5;
      EXPECT_LT(relative_error(g.grad(l)[k], numeric), 1e-3) << "logit " << k;
    }
  }
}

namespace {

struct AssignFixture {
  Vocabulary vocab;
  ModelDims dims = testutil::tiny_dims();
  ParameterStore<double> store;
  explicit AssignFixture(const std::vector<ParseTree>& trees) : vocab(testutil::vocab_for(trees)) {
    create_parameters(store, vocab, dims, 3);
  }
  ModuleAssignment assign(const ParseTree& tree, Rng* rng, Mode mode) {
    Graph<double> g;
    auto vars = bind_parameters(g, store, dims);
    auto enc = encode(g, vars, tree, encode_tree(vocab, tree));
    return assign_modules(g, vars, tree, enc, 1.0, rng, mode);
  }
};

}  // namespace

TEST(AssignModules, SingleNodeTree) {
  auto tree = build_tree({{1, "dog", "NOUN", 0, "root"}});
  AssignFixture fx({tree});
  Rng rng(1);
  auto a = fx.assign(tree, &rng, Mode::Train);
  EXPECT_EQ(a.kind, std::vector<ModuleKind>{ModuleKind::Single});
  EXPECT_EQ(a.sampled(), 0u);
}

TEST(AssignModules, ChainSamplesOnlyTheMiddle) {
  auto tree = build_tree({{1, "a", "NOUN", 2, "x"}, {2, "b", "ADP", 3, "prep"}, {3, "c", "NOUN", 0, "root"}});
  AssignFixture fx({tree});
  Rng rng(1);
  auto a = fx.assign(tree, &rng, Mode::Train);
  EXPECT_EQ(a.kind[2], ModuleKind::Single);
  EXPECT_EQ(a.kind[0], ModuleKind::Single);
  EXPECT_NE(a.kind[1], ModuleKind::Single);
  EXPECT_EQ(a.sampled(), 1u);
  ASSERT_TRUE(a.decision[1]);
  EXPECT_EQ(a.decision[1]->z[0] + a.decision[1]->z[1], 1.0);
  EXPECT_NEAR(a.decision[1]->z_soft[0] + a.decision[1]->z_soft[1], 1.0, 1e-9);
}

TEST(AssignModules, StarDrawsNoSamples) {
  auto tree = build_tree({{1, "a", "ADJ", 3, "amod"}, {2, "b", "ADJ", 3, "amod"}, {3, "c", "NOUN", 0, "root"}});
  AssignFixture fx({tree});
  Rng rng(5);
  const auto before = Rng(5).next();
  auto a = fx.assign(tree, &rng, Mode::Train);
  EXPECT_EQ(a.sampled(), 0u);
  EXPECT_EQ(rng.next(), before);
  for (auto k : a.kind) EXPECT_EQ(k, ModuleKind::Single);
}

TEST(AssignModules, InferenceIsPureAndNeedsNoRng) {
  Rng trng(4);
  std::vector<ParseTree> trees;
  for (int i = 0; i < 10; ++i) trees.push_back(testutil::random_tree(trng, 3 + trng.below(6)));
  AssignFixture fx(trees);
  for (const auto& t : trees) {
    auto a = fx.assign(t, nullptr, Mode::Infer);
    auto b = fx.assign(t, nullptr, Mode::Infer);
    EXPECT_EQ(a.kind, b.kind);
    for (std::size_t n = 0; n < t.size(); ++n) {
      if (!a.decision[n]) continue;
      const auto& d = *a.decision[n];
      const ModuleKind want = d.logits[1] > d.logits[0] ? ModuleKind::Comp : ModuleKind::Sum;
      EXPECT_EQ(a.kind[n], want);
    }
  }
  auto chain = build_tree({{1, "a", "NOUN", 2, "x"}, {2, "b", "ADP", 3, "prep"}, {3, "c", "NOUN", 0, "root"}});
  AssignFixture cfx({chain});
  EXPECT_THROW(cfx.assign(chain, nullptr, Mode::Train), std::invalid_argument);
}
