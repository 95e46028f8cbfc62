#ifndef NMTREE_TREE_ENCODER_HPP
#define NMTREE_TREE_ENCODER_HPP

#include <vector>

#include "nmtree/autodiff.hpp"
#include "nmtree/params.hpp"
#include "nmtree/parse_tree.hpp"
#include "nmtree/vocab.hpp"

namespace nmtree {

struct LstmState {
  Var c;
  Var h;
};

enum class Direction { BottomUp, TopDown };

// e_t = [E_w row; E_p row; E_d row]
template <class T>
Var embed_node(Graph<T>& g, const EmbeddingVars& tables, const NodeIndices& idx) {
  return g.concat({g.lookup(tables.word, idx.word), g.lookup(tables.pos, idx.pos),
                   g.lookup(tables.dep, idx.dep)});
}

// Child-Sum Tree LSTM transition. An empty child list is the zero-state case.
template <class T>
LstmState childsum_step(Graph<T>& g, const TreeLstmVars& p, Var e,
                        const std::vector<LstmState>& kids) {
  const std::size_t H = p.d_h;
  if (g.shape(p.w)[1] != g.numel(e))
    throw ShapeError("childsum_step: embedding size " + std::to_string(g.numel(e)) +
                     " does not match weight " + shape_str(g.shape(p.w)));
  for (const auto& k : kids)
    if (g.numel(k.h) != H || g.numel(k.c) != H)
      throw ShapeError("childsum_step: child state size differs from hidden size " +
                       std::to_string(H));

  Var pre = g.linear(e, p.w, p.b);
  Var iou = g.slice(pre, 0, 3 * H);
  if (!kids.empty()) {
    std::vector<Var> hs;
    hs.reserve(kids.size());
    for (const auto& k : kids) hs.push_back(k.h);
    Var h_sum = kids.size() == 1 ? hs[0] : g.add_n(hs);
    iou = g.add(iou, g.linear(h_sum, p.u_iou));
  }
  Var i = g.sigmoid(g.slice(iou, 0, H));
  Var o = g.sigmoid(g.slice(iou, H, H));
  Var u = g.tanh(g.slice(iou, 2 * H, H));

  std::vector<Var> cell_terms{g.mul(i, u)};
  if (!kids.empty()) {
    Var wf = g.slice(pre, 3 * H, H);
    for (const auto& k : kids) {
      Var f = g.sigmoid(g.add(wf, g.linear(k.h, p.u_f)));
      cell_terms.push_back(g.mul(f, k.c));
    }
  }
  Var c = cell_terms.size() == 1 ? cell_terms[0] : g.add_n(cell_terms);
  Var h = g.mul(o, g.tanh(c));
  return {c, h};
}

// Bottom-up: post-order, each node consumes its children's states.
// Top-down: pre-order, each node consumes its parent's state; the root starts from zeros.
template <class T>
std::vector<LstmState> encode_tree(Graph<T>& g, const ParseTree& tree,
                                   const std::vector<Var>& embeddings, Direction dir,
                                   const TreeLstmVars& p) {
  if (embeddings.size() != tree.size())
    throw ShapeError("encode_tree: " + std::to_string(embeddings.size()) + " embeddings for " +
                     std::to_string(tree.size()) + " nodes");
  std::vector<LstmState> states(tree.size());
  if (dir == Direction::BottomUp) {
    for (auto t : tree.post_order()) {
      std::vector<LstmState> kids;
      kids.reserve(tree.children[t].size());
      for (auto c : tree.children[t]) kids.push_back(states[c]);
      states[t] = childsum_step(g, p, embeddings[t], kids);
    }
  } else {
    for (auto t : tree.pre_order()) {
      std::vector<LstmState> pred;
      if (tree.parent[t] >= 0) pred.push_back(states[static_cast<std::size_t>(tree.parent[t])]);
      states[t] = childsum_step(g, p, embeddings[t], pred);
    }
  }
  return states;
}

// h_t = [h_up; h_down]
template <class T>
Var node_context(Graph<T>& g, Var h_up, Var h_down) {
  return g.concat({h_up, h_down});
}

struct EncodedTree {
  std::vector<Var> embedding;  // e_t
  std::vector<LstmState> up;
  std::vector<LstmState> down;
  std::vector<Var> context;  // h_t
};

template <class T>
EncodedTree encode(Graph<T>& g, const ModelVars& vars, const ParseTree& tree,
                   const std::vector<NodeIndices>& indices) {
  EncodedTree enc;
  enc.embedding.reserve(tree.size());
  for (const auto& idx : indices) enc.embedding.push_back(embed_node(g, vars.embed, idx));
  enc.up = encode_tree(g, tree, enc.embedding, Direction::BottomUp, vars.up);
  enc.down = encode_tree(g, tree, enc.embedding, Direction::TopDown, vars.down);
  enc.context.reserve(tree.size());
  for (std::size_t t = 0; t < tree.size(); ++t)
    enc.context.push_back(node_context(g, enc.up[t].h, enc.down[t].h));
  return enc;
}

}  // namespace nmtree

#endif  // NMTREE_TREE_ENCODER_HPP
