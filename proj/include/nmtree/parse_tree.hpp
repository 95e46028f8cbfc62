#ifndef NMTREE_PARSE_TREE_HPP
#define NMTREE_PARSE_TREE_HPP

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmtree/conllu.hpp"

namespace nmtree {

class TreeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Validated dependency tree. Nodes are addressed by position in `nodes`
// (sorted by token index); parent is -1 for the root.
struct ParseTree {
  std::vector<Token> nodes;
  std::size_t root = 0;
  std::vector<int> parent;
  std::vector<std::vector<std::size_t>> children;

  std::size_t size() const { return nodes.size(); }
  bool is_leaf(std::size_t t) const { return children[t].empty(); }
  bool is_root(std::size_t t) const { return t == root; }

  // N_t: t followed by all its descendants in pre-order.
  std::vector<std::size_t> node_set(std::size_t t) const {
    std::vector<std::size_t> out;
    std::vector<std::size_t> stack{t};
    while (!stack.empty()) {
      const auto n = stack.back();
      stack.pop_back();
      out.push_back(n);
      for (auto it = children[n].rbegin(); it != children[n].rend(); ++it) stack.push_back(*it);
    }
    return out;
  }

  std::vector<std::size_t> pre_order() const { return node_set(root); }

  std::vector<std::size_t> post_order() const {
    std::vector<std::size_t> out;
    out.reserve(size());
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < children[n].size()) {
        const auto c = children[n][next++];
        stack.push_back({c, 0});
      } else {
        out.push_back(n);
        stack.pop_back();
      }
    }
    return out;
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 1}};
    while (!stack.empty()) {
      auto [n, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      for (auto c : children[n]) stack.push_back({c, d + 1});
    }
    return best;
  }

  TokenSequence tokens() const { return nodes; }
};

inline ParseTree build_tree(TokenSequence tokens) {
  if (tokens.empty()) throw TreeError("build_tree: empty token sequence");
  std::sort(tokens.begin(), tokens.end(),
            [](const Token& a, const Token& b) { return a.index < b.index; });
  std::map<int, std::size_t> pos_of;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!pos_of.emplace(tokens[i].index, i).second)
      throw TreeError("build_tree: duplicate token index " + std::to_string(tokens[i].index));
    if (tokens[i].head == tokens[i].index)
      throw TreeError("build_tree: token " + std::to_string(tokens[i].index) + " is its own head");
  }

  ParseTree tree;
  tree.parent.assign(tokens.size(), -1);
  tree.children.assign(tokens.size(), {});
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].head == 0) {
      roots.push_back(i);
      continue;
    }
    auto it = pos_of.find(tokens[i].head);
    if (it == pos_of.end())
      throw TreeError("build_tree: token " + std::to_string(tokens[i].index) +
                      " points to missing head " + std::to_string(tokens[i].head));
    tree.parent[i] = static_cast<int>(it->second);
    tree.children[it->second].push_back(i);
  }
  if (roots.size() != 1)
    throw TreeError("build_tree: expected exactly one root, found " + std::to_string(roots.size()));
  tree.root = roots[0];

  // With one root and one head per token, a node missing from the root's
  // traversal sits on a cycle or hangs from one.
  std::vector<char> seen(tokens.size(), 0);
  std::vector<std::size_t> stack{tree.root};
  std::size_t reached = 0;
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (seen[n]) throw TreeError("build_tree: cycle through token " + std::to_string(tokens[n].index));
    seen[n] = 1;
    ++reached;
    for (auto c : tree.children[n]) stack.push_back(c);
  }
  if (reached != tokens.size()) {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (!seen[i])
        throw TreeError("build_tree: cycle or unreachable node at token " +
                        std::to_string(tokens[i].index));
  }
  tree.nodes = std::move(tokens);
  return tree;
}

inline const std::set<std::string>& default_prune_pos() {
  static const std::set<std::string> tags{"DET", "PUNCT", "SYM"};
  return tags;
}

// Removes every non-root node whose POS is in `prune_pos`; children of a
// removed node are reattached to its nearest surviving ancestor. If the root
// itself carries a pruned tag the tree is returned unchanged.
inline ParseTree prune_tree(const ParseTree& tree,
                            const std::set<std::string>& prune_pos = default_prune_pos()) {
  if (prune_pos.count(tree.nodes[tree.root].pos)) return tree;
  std::vector<char> keep(tree.size(), 1);
  bool any = false;
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (i != tree.root && prune_pos.count(tree.nodes[i].pos)) {
      keep[i] = 0;
      any = true;
    }
  if (!any) return tree;

  TokenSequence out;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (!keep[i]) continue;
    Token t = tree.nodes[i];
    int p = tree.parent[i];
    while (p >= 0 && !keep[static_cast<std::size_t>(p)]) p = tree.parent[static_cast<std::size_t>(p)];
    t.head = p < 0 ? 0 : tree.nodes[static_cast<std::size_t>(p)].index;
    out.push_back(std::move(t));
  }
  return build_tree(std::move(out));
}

// Ordered isomorphism on word/POS/dep labels, ignoring token indices.
inline bool isomorphic(const ParseTree& a, const ParseTree& b) {
  if (a.size() != b.size()) return false;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{a.root, b.root}};
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    const Token& tx = a.nodes[x];
    const Token& ty = b.nodes[y];
    if (tx.word != ty.word || tx.pos != ty.pos || tx.dep != ty.dep) return false;
    if (a.children[x].size() != b.children[y].size()) return false;
    for (std::size_t k = 0; k < a.children[x].size(); ++k)
      stack.push_back({a.children[x][k], b.children[y][k]});
  }
  return true;
}

inline std::string serialize_tree(const ParseTree& tree) { return serialize_tokens(tree.nodes); }

}  // namespace nmtree

#endif  // NMTREE_PARSE_TREE_HPP
