#ifndef NMTREE_EXPLAIN_HPP
#define NMTREE_EXPLAIN_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "nmtree/model.hpp"

namespace nmtree {

namespace detail {
template <class T>
std::vector<double> to_doubles(std::span<const T> v) {
  return {v.begin(), v.end()};
}
}  // namespace detail

// Per-node explainability record of an inference pass: topology, module kind,
// attention over N_t, Comp context weights and the node's score vector.
template <class T>
nlohmann::json explain_example(const NMTree<T>& model, const GroundingExample& ex) {
  Graph<T> g(false);
  Forward f = model.run(g, bind_parameters(g, model.params(), model.dims()), ex, Mode::Infer, nullptr);
  const ParseTree& tree = ex.tree;
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t t = 0; t < tree.size(); ++t) {
    const Token& tok = tree.nodes[t];
    const NodeTrace& tr = f.result.nodes[t];
    nlohmann::json node{{"node", t},
                        {"id", tok.index},
                        {"word", tok.word},
                        {"pos", tok.pos},
                        {"dep", tok.dep},
                        {"head", tok.head},
                        {"parent", tree.parent[t]},
                        {"children", tree.children[t]},
                        {"node_set", tree.node_set(t)},
                        {"module", to_string(tr.kind)},
                        {"scores", detail::to_doubles(g.value(tr.scores))}};
    if (const auto& d = f.assignment.decision[t]) {
      node["assembler_logits"] = d->logits;
      node["z"] = d->z;
    }
    if (tr.alpha_s) node["alpha_s"] = detail::to_doubles(g.value(*tr.alpha_s));
    if (tr.alpha_p) node["alpha_p"] = detail::to_doubles(g.value(*tr.alpha_p));
    if (tr.beta) node["beta"] = detail::to_doubles(g.value(*tr.beta));
    nodes.push_back(std::move(node));
  }
  auto root = detail::to_doubles(g.value(f.result.root_scores));
  nlohmann::json out{{"root", tree.root},
                     {"num_regions", ex.scene.num_regions},
                     {"nodes", nodes},
                     {"root_scores", root},
                     {"predicted", argmax_index(root.begin(), root.end())}};
  if (ex.scene.gt_index) out["target"] = *ex.scene.gt_index;
  return out;
}

// Counts of inferred module kinds per POS tag and per dependency label.
struct ModuleFrequency {
  std::map<std::string, std::map<std::string, std::size_t>> by_pos;
  std::map<std::string, std::map<std::string, std::size_t>> by_dep;

  // Share of relation-word nodes (ADP/VERB) that were assembled as Comp.
  double relation_comp_fraction() const {
    std::size_t comp = 0, total = 0;
    for (const auto* tag : {"ADP", "VERB"}) {
      auto it = by_pos.find(tag);
      if (it == by_pos.end()) continue;
      for (const auto& [kind, n] : it->second) {
        total += n;
        if (kind == "Comp") comp += n;
      }
    }
    return total ? static_cast<double>(comp) / static_cast<double>(total) : 0.0;
  }

  nlohmann::json to_json() const {
    return {{"by_pos", by_pos}, {"by_dep", by_dep}, {"relation_comp_fraction", relation_comp_fraction()}};
  }
};

template <class T>
ModuleFrequency module_frequency(const NMTree<T>& model, const std::vector<GroundingExample>& data) {
  ModuleFrequency freq;
  for (const auto& ex : data) {
    Graph<T> g(false);
    Forward f = model.run(g, bind_parameters(g, model.params(), model.dims()), ex, Mode::Infer, nullptr);
    for (std::size_t t = 0; t < ex.tree.size(); ++t) {
      const std::string kind = to_string(f.assignment.kind[t]);
      ++freq.by_pos[ex.tree.nodes[t].pos][kind];
      ++freq.by_dep[ex.tree.nodes[t].dep][kind];
    }
  }
  return freq;
}

}  // namespace nmtree

#endif  // NMTREE_EXPLAIN_HPP
