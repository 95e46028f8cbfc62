#include <gtest/gtest.h>

#include "nmtree/nmtree.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace nmtree;

namespace {

std::vector<double> vals(const Graph<double>& g, Var v) {
  auto s = g.value(v);
  return {s.begin(), s.end()};
}

struct Fixture {
  Vocabulary vocab;
  ModelDims dims = testutil::tiny_dims();
  ParameterStore<double> store;

  explicit Fixture(const std::vector<ParseTree>& trees, std::uint64_t seed = 1)
      : vocab(testutil::vocab_for(trees)) {
    create_parameters(store, vocab, dims, seed);
    // Biases start at zero; give them values so they are exercised.
    Rng rng(seed + 100);
    for (auto& [name, e] : store.entries())
      if (e.tensor.shape.size() == 1) init_uniform(e.tensor, rng, 0.3);
  }
};

// Same tree with every child list in a random order.
ParseTree permute_children(ParseTree t, Rng& rng) {
  for (auto& kids : t.children) rng.shuffle(kids);
  return t;
}

}  // namespace

TEST(EmbedNode, ZeroTablesGiveZeroVectorOfConfiguredWidth) {
  ParameterStore<double> store;
  store.add("w", {3, 300});
  store.add("p", {3, 50});
  store.add("d", {3, 50});
  Graph<double> g;
  EmbeddingVars tables{g.param(store.get("w")), g.param(store.get("p")), g.param(store.get("d"))};
  Var e = embed_node(g, tables, {1, 2, 0});
  EXPECT_EQ(g.numel(e), 400u);
  for (double v : g.value(e)) EXPECT_EQ(v, 0.0);
}

TEST(EmbedNode, EqualIndicesGiveEqualEmbeddingsAndConcatOrder) {
  ParameterStore<double> store;
  auto& w = store.add("w", {2, 2});
  auto& p = store.add("p", {2, 1});
  auto& d = store.add("d", {2, 1});
  w.values = {1, 2, 3, 4};
  p.values = {5, 6};
  d.values = {7, 8};
  Graph<double> g;
  EmbeddingVars tables{g.param(w), g.param(p), g.param(d)};
  EXPECT_EQ(vals(g, embed_node(g, tables, {1, 0, 1})), (std::vector<double>{3, 4, 5, 8}));
  EXPECT_EQ(vals(g, embed_node(g, tables, {1, 0, 1})), vals(g, embed_node(g, tables, {1, 0, 1})));
  EXPECT_THROW(embed_node(g, tables, {2, 0, 0}), std::out_of_range);
}

TEST(ChildSum, ZeroParametersZeroInputNoChildren) {
  ParameterStore<double> store;
  const std::size_t H = 3, E = 4;
  store.add("W", {4 * H, E});
  store.add("U_iou", {3 * H, H});
  store.add("U_f", {H, H});
  store.add("b", {4 * H});
  Graph<double> g;
  TreeLstmVars p{g.param(store.get("W")), g.param(store.get("U_iou")), g.param(store.get("U_f")),
                 g.param(store.get("b")), H};
  auto s = childsum_step(g, p, g.constant({E}, std::vector<double>(E, 0.0)), {});
  for (double v : g.value(s.c)) EXPECT_EQ(v, 0.0);
  for (double v : g.value(s.h)) EXPECT_EQ(v, 0.0);
}

TEST(ChildSum, OneChildMatchesSequentialLstmCell) {
  Rng rng(4);
  const std::size_t H = 5, E = 7;
  ParameterStore<double> store;
  for (auto [name, shape] : std::vector<std::pair<std::string, Shape>>{
           {"W", {4 * H, E}}, {"U_iou", {3 * H, H}}, {"U_f", {H, H}}, {"b", {4 * H}}})
    init_uniform(store.add(name, shape), rng, 0.8);

  // Same numbers, regrouped into the per-gate layout of an ordinary LSTM.
  oracle::PlainLstm cell;
  cell.H = H;
  auto rows = [&](const Tensor<double>& t, std::size_t first) {
    std::vector<std::vector<double>> out;
    for (std::size_t r = first; r < first + H; ++r)
      out.emplace_back(t.values.begin() + static_cast<long>(r * t.cols()),
                       t.values.begin() + static_cast<long>((r + 1) * t.cols()));
    return out;
  };
  auto slice = [&](const Tensor<double>& t, std::size_t first) {
    return std::vector<double>(t.values.begin() + static_cast<long>(first),
                               t.values.begin() + static_cast<long>(first + H));
  };
  const auto& W = store.get("W");
  const auto& U = store.get("U_iou");
  const auto& b = store.get("b");
  cell.Wi = rows(W, 0), cell.Wo = rows(W, H), cell.Wu = rows(W, 2 * H), cell.Wf = rows(W, 3 * H);
  cell.Ui = rows(U, 0), cell.Uo = rows(U, H), cell.Uu = rows(U, 2 * H), cell.Uf = rows(store.get("U_f"), 0);
  cell.bi = slice(b, 0), cell.bo = slice(b, H), cell.bu = slice(b, 2 * H), cell.bf = slice(b, 3 * H);

  for (int trial = 0; trial < 20; ++trial) {
    const auto e = testutil::random_vec(rng, E);
    const oracle::Cell prev{testutil::random_vec(rng, H), testutil::random_vec(rng, H)};
    const auto expected = cell.step(e, prev);

    Graph<double> g;
    TreeLstmVars p{g.param(store.get("W")), g.param(store.get("U_iou")), g.param(store.get("U_f")),
                   g.param(store.get("b")), H};
    auto got = childsum_step(g, p, g.constant({E}, e), {{g.constant({H}, prev.c), g.constant({H}, prev.h)}});
    for (std::size_t r = 0; r < H; ++r) {
      EXPECT_NEAR(g.value(got.c)[r], expected.c[r], 1e-12);
      EXPECT_NEAR(g.value(got.h)[r], expected.h[r], 1e-12);
    }
  }
}

TEST(ChildSum, RejectsDimensionMismatch) {
  ParameterStore<double> store;
  store.add("W", {8, 3});
  store.add("U_iou", {6, 2});
  store.add("U_f", {2, 2});
  store.add("b", {8});
  Graph<double> g;
  TreeLstmVars p{g.param(store.get("W")), g.param(store.get("U_iou")), g.param(store.get("U_f")),
                 g.param(store.get("b")), 2};
  EXPECT_THROW(childsum_step(g, p, g.constant({4}, {0, 0, 0, 0}), {}), ShapeError);
  LstmState bad{g.constant({3}, {0, 0, 0}), g.constant({3}, {0, 0, 0})};
  EXPECT_THROW(childsum_step(g, p, g.constant({3}, {0, 0, 0}), {bad}), ShapeError);
}

TEST(EncodeTree, ChildPermutationLeavesStatesUnchanged) {
  Rng rng(21);
  std::vector<ParseTree> trees;
  for (int i = 0; i < 40; ++i) trees.push_back(testutil::random_tree(rng, 2 + rng.below(10)));
  Fixture fx(trees);
  for (const auto& tree : trees) {
    auto permuted = permute_children(tree, rng);
    auto idx = encode_tree(fx.vocab, tree);
    Graph<double> g1, g2;
    auto v1 = bind_parameters(g1, fx.store, fx.dims);
    auto v2 = bind_parameters(g2, fx.store, fx.dims);
    auto a = encode(g1, v1, tree, idx);
    auto b = encode(g2, v2, permuted, idx);
    for (std::size_t t = 0; t < tree.size(); ++t)
      for (std::size_t j = 0; j < fx.dims.d_h; ++j) {
        EXPECT_NEAR(g1.value(a.up[t].h)[j], g2.value(b.up[t].h)[j], 1e-12);
        EXPECT_NEAR(g1.value(a.up[t].c)[j], g2.value(b.up[t].c)[j], 1e-12);
      }
  }
}

TEST(EncodeTree, StarRootInvariantUnderLeafRelabeling) {
  // Four identical leaves; the root's index moves from first to last, which
  // renumbers every leaf.
  auto make = [](int root_index) {
    TokenSequence toks;
    int next = 1;
    for (int i = 0; i < 5; ++i) {
      const int idx = next++;
      if (idx == root_index)
        toks.push_back({idx, "man", "NOUN", 0, "root"});
      else
        toks.push_back({idx, "red", "ADJ", root_index, "amod"});
    }
    return build_tree(toks);
  };
  auto first = make(1);
  auto last = make(5);
  Fixture fx({first});
  Graph<double> g1, g2;
  auto a = encode(g1, bind_parameters(g1, fx.store, fx.dims), first, encode_tree(fx.vocab, first));
  auto b = encode(g2, bind_parameters(g2, fx.store, fx.dims), last, encode_tree(fx.vocab, last));
  for (std::size_t j = 0; j < fx.dims.d_h; ++j)
    EXPECT_EQ(g1.value(a.up[first.root].h)[j], g2.value(b.up[last.root].h)[j]);
}

TEST(EncodeTree, MatchesPlainLoopImplementation) {
  Rng rng(33);
  std::vector<ParseTree> trees;
  for (int i = 0; i < 25; ++i) trees.push_back(testutil::random_tree(rng, 1 + rng.below(9)));
  Fixture fx(trees, 5);
  for (const auto& tree : trees) {
    Graph<double> g;
    auto enc = encode(g, bind_parameters(g, fx.store, fx.dims), tree, encode_tree(fx.vocab, tree));
    auto ref = oracle::encode(fx.store, fx.vocab, tree);
    for (std::size_t t = 0; t < tree.size(); ++t) {
      ASSERT_EQ(g.numel(enc.context[t]), 2 * fx.dims.d_h);
      for (std::size_t j = 0; j < 2 * fx.dims.d_h; ++j) EXPECT_NEAR(g.value(enc.context[t])[j], ref.ctx[t][j], 1e-12);
      for (std::size_t j = 0; j < fx.dims.d_h; ++j) {
        EXPECT_NEAR(g.value(enc.up[t].c)[j], ref.up[t].c[j], 1e-12);
        EXPECT_NEAR(g.value(enc.down[t].c)[j], ref.down[t].c[j], 1e-12);
      }
    }
  }
}

TEST(EncodeTree, SingleNodeUsesNoChildStepInBothDirections) {
  auto tree = build_tree({{1, "dog", "NOUN", 0, "root"}});
  Fixture fx({tree});
  Graph<double> g;
  auto vars = bind_parameters(g, fx.store, fx.dims);
  auto enc = encode(g, vars, tree, encode_tree(fx.vocab, tree));
  auto up = childsum_step(g, vars.up, enc.embedding[0], {});
  auto down = childsum_step(g, vars.down, enc.embedding[0], {});
  EXPECT_EQ(vals(g, enc.up[0].h), vals(g, up.h));
  EXPECT_EQ(vals(g, enc.down[0].h), vals(g, down.h));
  // The two directions have separate parameters.
  EXPECT_NE(vals(g, enc.up[0].h), vals(g, enc.down[0].h));
}

TEST(EncodeTree, ChainFeedsLeafToRootAndRootToLeaf) {
  auto tree = build_tree({{1, "a", "NOUN", 2, "x"}, {2, "b", "NOUN", 3, "x"}, {3, "c", "NOUN", 0, "root"}});
  Fixture fx({tree});
  Graph<double> g;
  auto vars = bind_parameters(g, fx.store, fx.dims);
  auto enc = encode(g, vars, tree, encode_tree(fx.vocab, tree));
  // Bottom-up: a -> b -> c.
  auto a = childsum_step(g, vars.up, enc.embedding[0], {});
  auto b = childsum_step(g, vars.up, enc.embedding[1], {a});
  auto c = childsum_step(g, vars.up, enc.embedding[2], {b});
  EXPECT_EQ(vals(g, enc.up[2].h), vals(g, c.h));
  // Top-down: c -> b -> a, the root starting from nothing.
  auto dc = childsum_step(g, vars.down, enc.embedding[2], {});
  auto db = childsum_step(g, vars.down, enc.embedding[1], {dc});
  auto da = childsum_step(g, vars.down, enc.embedding[0], {db});
  EXPECT_EQ(vals(g, enc.down[0].h), vals(g, da.h));
}

TEST(NodeContext, ConcatenatesUpThenDown) {
  Graph<double> g;
  EXPECT_EQ(vals(g, node_context(g, g.constant({1}, {1}), g.constant({1}, {2}))), (std::vector<double>{1, 2}));
  EXPECT_EQ(vals(g, node_context(g, g.constant({2}, {0, 0}), g.constant({2}, {0, 0}))),
            (std::vector<double>{0, 0, 0, 0}));
}
