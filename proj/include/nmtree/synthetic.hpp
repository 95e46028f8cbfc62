#ifndef NMTREE_SYNTHETIC_HPP
#define NMTREE_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "nmtree/conllu.hpp"
#include "nmtree/model.hpp"
#include "nmtree/parse_tree.hpp"
#include "nmtree/rng.hpp"

namespace nmtree::synth {

enum class Relation { LeftOf, RightOf, Above, Below, NearestTo };

inline const std::vector<std::string>& relation_words() {
  static const std::vector<std::string> words{"left-of", "right-of", "above", "below", "nearest-to"};
  return words;
}

inline const std::vector<std::string>& size_words() {
  static const std::vector<std::string> words{"small", "large"};
  return words;
}

struct Inventory {
  std::vector<std::string> categories{"ball", "box", "cup", "car", "dog"};
  std::vector<std::string> colors{"red", "blue", "green", "yellow"};

  std::size_t min_feature_dim() const { return categories.size() + colors.size() + 2 + 2; }
};

struct Region {
  std::size_t category = 0;
  std::size_t color = 0;
  std::size_t size = 0;  // 0 small, 1 large
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Region&) const = default;
};

struct SynthConfig {
  Inventory inventory;
  std::size_t num_regions = 8;
  std::size_t max_depth = 2;
  std::size_t d_x = 16;
  double noise = 0.01;
  double min_distance = 0.05;
};

struct Metadata {
  std::size_t depth = 1;
  std::size_t relations = 0;
  std::uint64_t seed = 0;

  bool operator==(const Metadata&) const = default;
};

struct SynthExample {
  std::vector<Region> regions;
  std::size_t target = 0;
  TokenSequence expression;
  Metadata metadata;

  bool operator==(const SynthExample&) const = default;
};

// Rounds to 9 significant digits, the precision used on disk.
inline double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

// x grows rightwards, y grows upwards.
inline bool relation_holds(Relation r, const Region& cand, const Region& obj) {
  switch (r) {
    case Relation::LeftOf: return cand.x < obj.x;
    case Relation::RightOf: return cand.x > obj.x;
    case Relation::Above: return cand.y > obj.y;
    case Relation::Below: return cand.y < obj.y;
    case Relation::NearestTo: return true;  // resolved as an argmin over the candidate set
  }
  return false;
}

inline double distance(const Region& a, const Region& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// K regions with independent attributes; positions uniform in the unit square,
// rejected until every pair is at least `min_distance` apart.
inline std::vector<Region> gen_scene(Rng& rng, std::size_t k, const Inventory& inv,
                                     double min_distance = 0.05) {
  if (k < 2) throw std::invalid_argument("gen_scene: need at least 2 regions");
  std::vector<Region> regions;
  regions.reserve(k);
  while (regions.size() < k) {
    Region r;
    r.category = rng.below(inv.categories.size());
    r.color = rng.below(inv.colors.size());
    r.size = rng.below(2);
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      r.x = round9(rng.uniform());
      r.y = round9(rng.uniform());
      placed = std::all_of(regions.begin(), regions.end(),
                           [&](const Region& o) { return distance(o, r) >= min_distance; });
    }
    if (!placed) throw std::runtime_error("gen_scene: could not place region; lower K or min distance");
    regions.push_back(r);
  }
  return regions;
}

// ---- oracle -------------------------------------------------------------------

inline constexpr std::size_t kAmbiguous = static_cast<std::size_t>(-1);

class OracleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::optional<std::size_t> find_index(const std::vector<std::string>& v, const std::string& s) {
  auto it = std::find(v.begin(), v.end(), s);
  if (it == v.end()) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

// Set of regions denoted by the noun phrase headed at node t.
inline std::vector<std::size_t> denote(const ParseTree& tree, std::size_t t,
                                       const std::vector<Region>& regions, const Inventory& inv,
                                       bool& ambiguous) {
  const Token& head = tree.nodes[t];
  auto cat = find_index(inv.categories, head.word);
  if (!cat) throw OracleError("oracle: unknown noun '" + head.word + "'");
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < regions.size(); ++i)
    if (regions[i].category == *cat) cand.push_back(i);

  std::vector<std::size_t> relation_children;
  for (auto c : tree.children[t]) {
    const std::string& w = tree.nodes[c].word;
    if (auto col = find_index(inv.colors, w)) {
      std::erase_if(cand, [&](std::size_t i) { return regions[i].color != *col; });
    } else if (auto sz = find_index(size_words(), w)) {
      std::erase_if(cand, [&](std::size_t i) { return regions[i].size != *sz; });
    } else if (find_index(relation_words(), w)) {
      relation_children.push_back(c);
    } else {
      throw OracleError("oracle: unknown token '" + w + "'");
    }
  }
  for (auto c : relation_children) {
    const auto rel = static_cast<Relation>(*find_index(relation_words(), tree.nodes[c].word));
    if (tree.children[c].size() != 1)
      throw OracleError("oracle: relation '" + tree.nodes[c].word + "' needs exactly one object");
    auto obj = denote(tree, tree.children[c][0], regions, inv, ambiguous);
    if (obj.size() != 1) {
      ambiguous = true;
      return {};
    }
    const Region& o = regions[obj[0]];
    std::erase_if(cand, [&](std::size_t i) { return i == obj[0]; });
    if (rel == Relation::NearestTo) {
      if (cand.empty()) continue;
      auto best = *std::min_element(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
        return distance(regions[a], o) < distance(regions[b], o);
      });
      cand = {best};
    } else {
      std::erase_if(cand, [&](std::size_t i) { return !relation_holds(rel, regions[i], o); });
    }
  }
  return cand;
}

}  // namespace detail

// Set-semantics evaluation: attributes intersect, relations filter against the
// (necessarily unique) object denotation. Returns the unique referent or kAmbiguous.
inline std::size_t oracle_resolve(const ParseTree& tree, const std::vector<Region>& regions,
                                  const Inventory& inv) {
  bool ambiguous = false;
  auto cand = detail::denote(tree, tree.root, regions, inv, ambiguous);
  if (ambiguous || cand.size() != 1) return kAmbiguous;
  return cand[0];
}

// ---- expressions ----------------------------------------------------------------

namespace detail {

struct NounPhrase {
  std::size_t region = 0;
  bool color = false;
  bool size = false;
  std::optional<Relation> relation;
  std::size_t object = 0;  // index into the phrase list
};

// Emits [color] [size] CATEGORY [relation object...], heads in CoNLL-U form.
inline void emit(const std::vector<NounPhrase>& phrases, std::size_t p,
                 const std::vector<Region>& regions, const Inventory& inv, int head,
                 const std::string& dep, TokenSequence& out) {
  const NounPhrase& np = phrases[p];
  const Region& r = regions[np.region];
  const int base = static_cast<int>(out.size());
  const int noun = base + 1 + (np.color ? 1 : 0) + (np.size ? 1 : 0);
  if (np.color)
    out.push_back({static_cast<int>(out.size()) + 1, inv.colors[r.color], "ADJ", noun, "amod"});
  if (np.size)
    out.push_back({static_cast<int>(out.size()) + 1, size_words()[r.size], "ADJ", noun, "amod"});
  out.push_back({noun, inv.categories[r.category], "NOUN", head, dep});
  if (np.relation) {
    const int rel = static_cast<int>(out.size()) + 1;
    out.push_back({rel, relation_words()[static_cast<std::size_t>(*np.relation)], "ADP", noun, "prep"});
    emit(phrases, np.object, regions, inv, rel, "pobj", out);
  }
}

}  // namespace detail

// Samples a referring expression of exactly `depth` nesting levels (depth-1
// relations) whose oracle denotation is a unique region. Returns nullopt after
// `max_attempts` failures.
inline std::optional<SynthExample> gen_expression(Rng& rng, const std::vector<Region>& regions,
                                                  std::size_t depth, const Inventory& inv,
                                                  std::size_t max_attempts = 1000) {
  if (depth < 1 || depth > 3) throw std::invalid_argument("gen_expression: depth must be 1, 2, or 3");
  const std::size_t k = regions.size();
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<detail::NounPhrase> phrases;
    std::vector<std::size_t> used;
    std::size_t region = rng.below(k);
    for (std::size_t level = 0; level < depth; ++level) {
      detail::NounPhrase np;
      np.region = region;
      np.color = rng.coin();
      np.size = rng.coin();
      used.push_back(region);
      if (level + 1 < depth) {
        np.relation = static_cast<Relation>(rng.below(relation_words().size()));
        np.object = phrases.size() + 1;
        std::size_t next = rng.below(k);
        while (std::find(used.begin(), used.end(), next) != used.end() && used.size() < k)
          next = rng.below(k);
        region = next;
      }
      phrases.push_back(np);
    }
    SynthExample ex;
    detail::emit(phrases, 0, regions, inv, 0, "root", ex.expression);
    ParseTree tree = build_tree(ex.expression);
    if (oracle_resolve(tree, regions, inv) != phrases[0].region) continue;
    ex.regions = regions;
    ex.target = phrases[0].region;
    ex.metadata.depth = depth;
    ex.metadata.relations = depth - 1;
    return ex;
  }
  return std::nullopt;
}

// Example `index` of a dataset depends only on (seed, index, config).
inline SynthExample generate_example(std::uint64_t seed, std::uint64_t index, const SynthConfig& cfg) {
  if (cfg.max_depth < 1 || cfg.max_depth > 3)
    throw std::invalid_argument("generate_example: max_depth must be 1, 2, or 3");
  const std::uint64_t ex_seed = mix_seed(seed, index);
  Rng rng(ex_seed);
  const std::size_t depth = 1 + rng.below(cfg.max_depth);
  while (true) {
    auto regions = gen_scene(rng, cfg.num_regions, cfg.inventory, cfg.min_distance);
    if (auto ex = gen_expression(rng, regions, depth, cfg.inventory)) {
      ex->metadata.seed = ex_seed;
      return *ex;
    }
  }
}

inline std::vector<SynthExample> generate_dataset(std::uint64_t seed, std::size_t num,
                                                  const SynthConfig& cfg) {
  std::vector<SynthExample> out;
  out.reserve(num);
  for (std::size_t i = 0; i < num; ++i) out.push_back(generate_example(seed, i, cfg));
  return out;
}

// ---- features -------------------------------------------------------------------

// [one-hot category | one-hot color | one-hot size | x, y | zero pad] + N(0, σ²).
inline std::vector<double> featurize_region(const Region& r, const Inventory& inv, std::size_t d_x,
                                            double sigma, Rng* rng) {
  if (d_x < inv.min_feature_dim())
    throw std::invalid_argument("featurize_region: d_x=" + std::to_string(d_x) + " below minimum " +
                                std::to_string(inv.min_feature_dim()));
  std::vector<double> f(d_x, 0.0);
  const std::size_t nc = inv.categories.size(), nl = inv.colors.size();
  f[r.category] = 1.0;
  f[nc + r.color] = 1.0;
  f[nc + nl + r.size] = 1.0;
  f[nc + nl + 2] = r.x;
  f[nc + nl + 3] = r.y;
  if (sigma > 0.0 && rng)
    for (auto& v : f) v += sigma * rng->gaussian();
  return f;
}

// Argmax of each one-hot block plus the raw position.
inline Region decode_region(std::span<const double> f, const Inventory& inv) {
  const std::size_t nc = inv.categories.size(), nl = inv.colors.size();
  Region r;
  r.category = static_cast<std::size_t>(std::max_element(f.begin(), f.begin() + nc) - f.begin());
  r.color = static_cast<std::size_t>(std::max_element(f.begin() + nc, f.begin() + nc + nl) -
                                     (f.begin() + nc));
  r.size = f[nc + nl + 1] > f[nc + nl] ? 1 : 0;
  r.x = f[nc + nl + 2];
  r.y = f[nc + nl + 3];
  return r;
}

// Scene with features; the noise stream is derived from the example seed.
inline Scene make_scene(const SynthExample& ex, const SynthConfig& cfg) {
  Scene s;
  s.num_regions = ex.regions.size();
  s.d_x = cfg.d_x;
  s.gt_index = ex.target;
  Rng rng(mix_seed(ex.metadata.seed, 0x5ce7e));
  for (const auto& r : ex.regions) {
    auto f = featurize_region(r, cfg.inventory, cfg.d_x, cfg.noise, &rng);
    s.features.insert(s.features.end(), f.begin(), f.end());
  }
  return s;
}

inline GroundingExample to_grounding_example(const SynthExample& ex, const SynthConfig& cfg) {
  return {prune_tree(build_tree(ex.expression)), make_scene(ex, cfg)};
}

// ---- JSON lines -------------------------------------------------------------------

inline nlohmann::json to_json(const SynthExample& ex, const Inventory& inv) {
  using nlohmann::json;
  json scene = json::array();
  for (const auto& r : ex.regions) {
    scene.push_back({{"category", inv.categories.at(r.category)},
                     {"color", inv.colors.at(r.color)},
                     {"size", size_words().at(r.size)},
                     {"x", r.x},
                     {"y", r.y}});
  }
  json expr = json::array();
  for (const auto& t : ex.expression)
    expr.push_back({{"id", t.index}, {"word", t.word}, {"pos", t.pos}, {"head", t.head}, {"dep", t.dep}});
  return {{"scene", scene},
          {"expression", expr},
          {"target", ex.target},
          {"metadata",
           {{"depth", ex.metadata.depth},
            {"relations", ex.metadata.relations},
            {"seed", ex.metadata.seed}}}};
}

inline SynthExample from_json(const nlohmann::json& j, const Inventory& inv) {
  auto index_of = [](const std::vector<std::string>& v, const std::string& s, const char* what) {
    auto i = detail::find_index(v, s);
    if (!i) throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
    return *i;
  };
  SynthExample ex;
  for (const auto& r : j.at("scene")) {
    Region reg;
    reg.category = index_of(inv.categories, r.at("category").get<std::string>(), "category");
    reg.color = index_of(inv.colors, r.at("color").get<std::string>(), "color");
    reg.size = index_of(size_words(), r.at("size").get<std::string>(), "size");
    reg.x = r.at("x").get<double>();
    reg.y = r.at("y").get<double>();
    ex.regions.push_back(reg);
  }
  for (const auto& t : j.at("expression"))
    ex.expression.push_back({t.at("id").get<int>(), t.at("word").get<std::string>(),
                             t.at("pos").get<std::string>(), t.at("head").get<int>(),
                             t.at("dep").get<std::string>()});
  ex.target = j.at("target").get<std::size_t>();
  if (ex.target >= ex.regions.size()) throw std::invalid_argument("target out of range");
  const auto& m = j.at("metadata");
  ex.metadata.depth = m.at("depth").get<std::size_t>();
  ex.metadata.relations = m.at("relations").get<std::size_t>();
  ex.metadata.seed = m.at("seed").get<std::uint64_t>();
  return ex;
}

inline std::string format_line(const nlohmann::json& j) {
  // 9 significant digits for every floating-point value.
  std::string out;
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::function<void(const nlohmann::json&)> rec = [&](const nlohmann::json& v) {
    if (v.is_object()) {
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(it.key()).dump();
        out += ':';
        rec(it.value());
      }
      out += '}';
    } else if (v.is_array()) {
      out += '[';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        rec(v[i]);
      }
      out += ']';
    } else if (v.is_number_float()) {
      out += fmt(v.get<double>());
    } else {
      out += v.dump();
    }
  };
  rec(j);
  return out;
}

inline void write_dataset(std::ostream& os, const std::vector<SynthExample>& data, const Inventory& inv) {
  for (const auto& ex : data) os << format_line(to_json(ex, inv)) << '\n';
}

inline void write_dataset(const std::string& path, const std::vector<SynthExample>& data,
                          const Inventory& inv) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(os, data, inv);
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::vector<SynthExample> read_dataset(std::istream& is, const Inventory& inv) {
  std::vector<SynthExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line), inv));
    } catch (const std::exception& e) {
      throw ParseError(line_no, std::string("malformed example: ") + e.what());
    }
  }
  return out;
}

inline std::vector<SynthExample> read_dataset(const std::string& path, const Inventory& inv) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_dataset(is, inv);
}

// 1-based line numbers whose stored target disagrees with the oracle.
inline std::vector<std::size_t> validate_dataset(const std::vector<SynthExample>& data,
                                                 const Inventory& inv) {
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      if (oracle_resolve(build_tree(data[i].expression), data[i].regions, inv) != data[i].target)
        bad.push_back(i + 1);
    } catch (const std::exception&) {
      bad.push_back(i + 1);
    }
  }
  return bad;
}

inline std::string export_conllu(const std::vector<SynthExample>& data) {
  std::string out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += "# sent_id = " + std::to_string(i + 1) + "\n";
    out += serialize_tokens(data[i].expression);
    out += '\n';
  }
  return out;
}

}  // namespace nmtree::synth

#endif  // NMTREE_SYNTHETIC_HPP
