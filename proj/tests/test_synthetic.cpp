#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "nmtree/nmtree.hpp"
#include "test_util.hpp"

using namespace nmtree;
using namespace nmtree::synth;

namespace {

const Inventory inv;

Region reg(std::size_t cat, std::size_t col, std::size_t size, double x, double y) {
  return Region{cat, col, size, x, y};
}

// Token helpers: ids are 1-based CoNLL-U positions.
ParseTree phrase(const TokenSequence& toks) { return build_tree(toks); }

// Brute-force reference: enumerate every region and test the predicates
// directly, without shared code with the library oracle.
std::vector<std::size_t> brute(const ParseTree& t, std::size_t node, const std::vector<Region>& rs) {
  const auto& words = t.nodes;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    bool ok = inv.categories[rs[i].category] == words[node].word;
    for (auto c : t.children[node]) {
      const std::string& w = words[c].word;
      if (w == "small" || w == "large") ok = ok && (rs[i].size == (w == "large" ? 1u : 0u));
      else if (w == "left-of" || w == "right-of" || w == "above" || w == "below" || w == "nearest-to") continue;
      else ok = ok && inv.colors[rs[i].color] == w;
    }
    if (ok) out.push_back(i);
  }
  for (auto c : t.children[node]) {
    const std::string& w = words[c].word;
    if (w != "left-of" && w != "right-of" && w != "above" && w != "below" && w != "nearest-to") continue;
    auto obj = brute(t, t.children[c][0], rs);
    if (obj.size() != 1) return {};
    const Region& o = rs[obj[0]];
    std::vector<std::size_t> keep;
    for (auto i : out) {
      if (i == obj[0]) continue;
      const Region& r = rs[i];
      if ((w == "left-of" && r.x < o.x) || (w == "right-of" && r.x > o.x) || (w == "above" && r.y > o.y) ||
          (w == "below" && r.y < o.y) || w == "nearest-to")
        keep.push_back(i);
    }
    if (w == "nearest-to" && !keep.empty()) {
      std::size_t best = keep[0];
      for (auto i : keep) {
        const double d = std::hypot(rs[i].x - o.x, rs[i].y - o.y);
        const double db = std::hypot(rs[best].x - o.x, rs[best].y - o.y);
        if (d < db) best = i;
      }
      keep = {best};
    }
    out = keep;
  }
  return out;
}

}  // namespace

TEST(Scene, TwoRegionsRespectMinimumDistance) {
  Rng rng(1);
  auto rs = gen_scene(rng, 2, inv, 0.3);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_GE(distance(rs[0], rs[1]), 0.3);
  for (const auto& r : rs) {
    EXPECT_GE(r.x, 0.0);
    EXPECT_LT(r.x, 1.0);
    EXPECT_LT(r.category, inv.categories.size());
  }
  EXPECT_THROW(gen_scene(rng, 1, inv), std::invalid_argument);
  EXPECT_THROW(gen_scene(rng, 50, inv, 0.9), std::runtime_error);
}

TEST(Scene, AttributeMarginalsAreUniform) {
  Rng rng(2);
  std::map<std::size_t, int> cat, col, size;
  int n = 0;
  for (int s = 0; s < 1000; ++s)
    for (const auto& r : gen_scene(rng, 8, inv)) {
      ++cat[r.category];
      ++col[r.color];
      ++size[r.size];
      ++n;
    }
  for (auto& [k, c] : cat) EXPECT_NEAR(double(c) / n, 1.0 / 5, 0.05 / 5) << "category " << k;
  for (auto& [k, c] : col) EXPECT_NEAR(double(c) / n, 1.0 / 4, 0.05 / 4) << "color " << k;
  for (auto& [k, c] : size) EXPECT_NEAR(double(c) / n, 1.0 / 2, 0.05 / 2) << "size " << k;
}

TEST(Oracle, AttributeFilters) {
  std::vector<Region> rs{reg(0, 0, 0, 0.1, 0.1), reg(0, 1, 1, 0.5, 0.5), reg(1, 0, 0, 0.9, 0.9)};
  EXPECT_EQ(oracle_resolve(phrase({{1, "box", "NOUN", 0, "root"}}), rs, inv), 2u);
  EXPECT_EQ(oracle_resolve(phrase({{1, "ball", "NOUN", 0, "root"}}), rs, inv), kAmbiguous);
  EXPECT_EQ(oracle_resolve(phrase({{1, "blue", "ADJ", 2, "amod"}, {2, "ball", "NOUN", 0, "root"}}), rs, inv), 1u);
  EXPECT_EQ(oracle_resolve(phrase({{1, "small", "ADJ", 2, "amod"}, {2, "ball", "NOUN", 0, "root"}}), rs, inv), 0u);
  EXPECT_EQ(oracle_resolve(phrase({{1, "cup", "NOUN", 0, "root"}}), rs, inv), kAmbiguous);
  EXPECT_THROW(oracle_resolve(phrase({{1, "zebra", "NOUN", 0, "root"}}), rs, inv), OracleError);
}

TEST(Oracle, RelationsFilterAgainstAUniqueObject) {
  // Two balls; the box sits between them.
  std::vector<Region> rs{reg(0, 0, 0, 0.1, 0.2), reg(0, 1, 0, 0.9, 0.8), reg(1, 2, 1, 0.5, 0.5)};
  auto rel = [](const std::string& r) {
    return phrase({{1, "ball", "NOUN", 0, "root"}, {2, r, "ADP", 1, "prep"}, {3, "box", "NOUN", 2, "pobj"}});
  };
  EXPECT_EQ(oracle_resolve(rel("left-of"), rs, inv), 0u);
  EXPECT_EQ(oracle_resolve(rel("right-of"), rs, inv), 1u);
  EXPECT_EQ(oracle_resolve(rel("above"), rs, inv), 1u);
  EXPECT_EQ(oracle_resolve(rel("below"), rs, inv), 0u);
  // Both balls are 0.5 away in x; distances differ only through y.
  rs[1].y = 0.75;
  EXPECT_EQ(oracle_resolve(rel("nearest-to"), rs, inv), 1u);
  // An ambiguous object makes the whole expression ambiguous.
  auto inverse = phrase({{1, "box", "NOUN", 0, "root"}, {2, "left-of", "ADP", 1, "prep"}, {3, "ball", "NOUN", 2, "pobj"}});
  EXPECT_EQ(oracle_resolve(inverse, rs, inv), kAmbiguous);
  // The object never refers to itself.
  auto self = phrase({{1, "box", "NOUN", 0, "root"}, {2, "nearest-to", "ADP", 1, "prep"}, {3, "box", "NOUN", 2, "pobj"}});
  EXPECT_EQ(oracle_resolve(self, rs, inv), kAmbiguous);
}

TEST(Oracle, AgreesWithBruteForceOnGeneratedData) {
  SynthConfig cfg;
  cfg.max_depth = 3;
  std::size_t checked = 0;
  for (const auto& ex : generate_dataset(3, 300, cfg)) {
    auto tree = build_tree(ex.expression);
    auto b = brute(tree, tree.root, ex.regions);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b[0], ex.target);
    EXPECT_EQ(oracle_resolve(tree, ex.regions, inv), ex.target);
    // Random perturbed targets: the brute force and the oracle must agree
    // whether or not the expression stays unique.
    auto moved = ex.regions;
    moved[0].x = 1.0 - moved[0].x;
    auto bm = brute(tree, tree.root, moved);
    const auto om = oracle_resolve(tree, moved, inv);
    EXPECT_EQ(om, bm.size() == 1 ? bm[0] : kAmbiguous);
    ++checked;
  }
  EXPECT_EQ(checked, 300u);
}

TEST(Generator, IsDeterministicAndIndexAddressable) {
  SynthConfig cfg;
  auto a = generate_dataset(7, 20, cfg);
  auto b = generate_dataset(7, 20, cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(generate_example(7, 13, cfg), a[13]);
  EXPECT_NE(generate_dataset(8, 20, cfg), a);
}

TEST(Generator, DepthAndRelationCounts) {
  SynthConfig cfg;
  cfg.max_depth = 3;
  std::map<std::size_t, int> depths;
  for (const auto& ex : generate_dataset(9, 300, cfg)) {
    ++depths[ex.metadata.depth];
    EXPECT_EQ(ex.metadata.relations, ex.metadata.depth - 1);
    std::size_t rels = 0;
    for (const auto& t : ex.expression)
      if (t.pos == "ADP") ++rels;
    EXPECT_EQ(rels, ex.metadata.depth - 1);
    EXPECT_EQ(ex.regions.size(), cfg.num_regions);
  }
  for (std::size_t d = 1; d <= 3; ++d) EXPECT_GT(depths[d], 70) << d;

  cfg.max_depth = 1;
  Rng rng(10);
  auto rs = gen_scene(rng, 6, inv);
  auto ex = gen_expression(rng, rs, 1, inv);
  ASSERT_TRUE(ex);
  auto tree = build_tree(ex->expression);
  EXPECT_EQ(inv.categories[rs[ex->target].category], tree.nodes[tree.root].word);
  EXPECT_THROW(gen_expression(rng, rs, 4, inv), std::invalid_argument);
  cfg.max_depth = 0;
  EXPECT_THROW(generate_example(1, 0, cfg), std::invalid_argument);
}

TEST(Features, LayoutAndDecode) {
  Region r = reg(3, 2, 1, 0.25, 0.75);
  auto f = featurize_region(r, inv, 16, 0.0, nullptr);
  ASSERT_EQ(f.size(), 16u);
  std::vector<double> expect(16, 0.0);
  expect[3] = 1;
  expect[5 + 2] = 1;
  expect[9 + 1] = 1;
  expect[11] = 0.25;
  expect[12] = 0.75;
  EXPECT_EQ(f, expect);
  EXPECT_EQ(decode_region(f, inv), r);
  EXPECT_THROW(featurize_region(r, inv, 12, 0.0, nullptr), std::invalid_argument);
  EXPECT_EQ(inv.min_feature_dim(), 13u);

  // Small noise leaves the one-hot blocks decodable.
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    auto noisy = featurize_region(r, inv, 16, 0.01, &rng);
    auto d = decode_region(noisy, inv);
    EXPECT_EQ(d.category, r.category);
    EXPECT_EQ(d.color, r.color);
    EXPECT_EQ(d.size, r.size);
    EXPECT_NEAR(d.x, r.x, 0.06);
  }
}

TEST(Features, SceneIsReproducible) {
  SynthConfig cfg;
  auto ex = generate_example(12, 0, cfg);
  auto s1 = make_scene(ex, cfg), s2 = make_scene(ex, cfg);
  EXPECT_EQ(s1.features, s2.features);
  EXPECT_EQ(s1.num_regions, cfg.num_regions);
  EXPECT_EQ(s1.gt_index, ex.target);
  auto g = to_grounding_example(ex, cfg);
  EXPECT_EQ(g.tree.size(), build_tree(ex.expression).size());  // nothing prunable in generated text
}

TEST(Dataset, JsonLinesRoundTrip) {
  SynthConfig cfg;
  cfg.max_depth = 3;
  auto data = generate_dataset(13, 50, cfg);
  std::stringstream ss;
  write_dataset(ss, data, inv);
  auto text = ss.str();
  auto back = read_dataset(ss, inv);
  EXPECT_EQ(back, data);
  std::stringstream again;
  write_dataset(again, back, inv);
  EXPECT_EQ(again.str(), text);
  EXPECT_TRUE(validate_dataset(back, inv).empty());
}

TEST(Dataset, EmptyAndMalformedInput) {
  std::stringstream empty("\n  \n");
  EXPECT_TRUE(read_dataset(empty, inv).empty());

  SynthConfig cfg;
  std::stringstream ss;
  write_dataset(ss, generate_dataset(14, 2, cfg), inv);
  std::string text = ss.str() + "{\"scene\": [\n";
  std::stringstream bad(text);
  try {
    read_dataset(bad, inv);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Dataset, ValidationFlagsWrongTargets) {
  SynthConfig cfg;
  auto data = generate_dataset(15, 10, cfg);
  data[4].target = (data[4].target + 1) % data[4].regions.size();
  data[7].expression[0].word = "unicorn";
  EXPECT_EQ(validate_dataset(data, inv), (std::vector<std::size_t>{5, 8}));
}

TEST(Dataset, ConlluExportParsesBack) {
  SynthConfig cfg;
  cfg.max_depth = 3;
  auto data = generate_dataset(16, 20, cfg);
  auto sents = parse_conllu(export_conllu(data));
  ASSERT_EQ(sents.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(sents[i], data[i].expression);
}
