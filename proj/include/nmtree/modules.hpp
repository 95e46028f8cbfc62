#ifndef NMTREE_MODULES_HPP
#define NMTREE_MODULES_HPP

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmtree/assembler.hpp"
#include "nmtree/autodiff.hpp"
#include "nmtree/params.hpp"
#include "nmtree/parse_tree.hpp"
#include "nmtree/tree_encoder.hpp"

namespace nmtree {

// K candidate regions, row-major K x d_x.
struct Scene {
  std::size_t num_regions = 0;
  std::size_t d_x = 0;
  std::vector<double> features;
  std::optional<std::size_t> gt_index;

  std::span<const double> region(std::size_t i) const {
    return {features.data() + i * d_x, d_x};
  }

  void validate() const {
    if (num_regions < 1) throw std::invalid_argument("scene: needs at least one region");
    if (features.size() != num_regions * d_x)
      throw ShapeError("scene: " + std::to_string(features.size()) + " feature values for " +
                       std::to_string(num_regions) + " regions of dim " + std::to_string(d_x));
    if (gt_index && *gt_index >= num_regions)
      throw std::out_of_range("scene: gt index " + std::to_string(*gt_index) + " >= K");
  }
};

// ---- attention and language representations -------------------------------

// Scalar relevance of one node for one attention head: fc(tanh(fc(h))).
template <class T>
Var attention_logit(Graph<T>& g, const AttentionVars& head, Var h) {
  return g.linear(g.tanh(g.linear(h, head.w1, head.b1)), head.w2, head.b2);
}

// α over a node set from the hidden vectors of its members.
template <class T>
Var node_attention(Graph<T>& g, const AttentionVars& head, const std::vector<Var>& hiddens) {
  if (hiddens.empty()) throw std::invalid_argument("node_attention: empty node set");
  std::vector<Var> logits;
  logits.reserve(hiddens.size());
  for (auto h : hiddens) logits.push_back(attention_logit(g, head, h));
  return g.softmax(g.concat(logits));
}

// y = Σ α_i e_i
template <class T>
Var language_rep(Graph<T>& g, const std::vector<Var>& embeddings, Var alpha) {
  if (embeddings.size() != g.numel(alpha))
    throw ShapeError("language_rep: attention size differs from node-set size");
  return g.matvec_t(g.stack(embeddings), alpha);
}

// ---- score functions ------------------------------------------------------

// fc(L2norm(p ⊙ y)) where p is the already-projected visual input.
template <class T>
Var score_from_projection(Graph<T>& g, const ScoreVars& s, Var projected, Var y) {
  if (g.numel(projected) != g.numel(y))
    throw ShapeError("score: projected visual size " + std::to_string(g.numel(projected)) +
                     " differs from language size " + std::to_string(g.numel(y)));
  return g.linear(g.l2_normalize(g.mul(projected, y)), s.w_out, s.b_out);
}

// S_s(x, y) = fc(L2norm(fc(x) ⊙ y))
template <class T>
Var score_single(Graph<T>& g, const ScoreVars& s, Var x, Var y) {
  return score_from_projection(g, s, g.linear(x, s.w_in, s.b_in), y);
}

// S_p(x1, x2, y) = fc(L2norm(fc([x1; x2]) ⊙ y)); x1 is the candidate, x2 the context.
template <class T>
Var score_pair(Graph<T>& g, const ScoreVars& s, Var x1, Var x2, Var y) {
  return score_from_projection(g, s, g.linear(g.concat({x1, x2}), s.w_in, s.b_in), y);
}

// ---- modules ----------------------------------------------------------------

namespace detail {
template <class T>
void check_lengths(Graph<T>& g, const std::vector<Var>& scores, std::size_t k, const char* who) {
  for (auto s : scores)
    if (g.numel(s) != k)
      throw ShapeError(std::string(who) + ": child score length " + std::to_string(g.numel(s)) +
                       " differs from K=" + std::to_string(k));
}
}  // namespace detail

// s_t = single + Σ_j s_tj
template <class T>
Var run_single(Graph<T>& g, Var single_scores, const std::vector<Var>& children) {
  detail::check_lengths(g, children, g.numel(single_scores), "run_single");
  if (children.empty()) return single_scores;
  std::vector<Var> terms{single_scores};
  terms.insert(terms.end(), children.begin(), children.end());
  return g.add_n(terms);
}

template <class T>
Var run_sum(Graph<T>& g, const std::vector<Var>& children) {
  if (children.empty()) throw std::invalid_argument("run_sum: needs at least one child");
  detail::check_lengths(g, children, g.numel(children[0]), "run_sum");
  if (children.size() == 1) return children[0];
  return g.add_n(children);
}

struct CompOutput {
  Var scores;
  Var beta;
  Var context;  // x̄
};

// β = softmax(single + Σ_j s_tj), x̄ = Σ β_i x_i, s_t^i = S_p(x_i, x̄, y^p).
template <class T>
CompOutput run_comp(Graph<T>& g, const ScoreVars& pair, Var regions,
                    const std::vector<Var>& region_rows, Var single_scores,
                    const std::vector<Var>& children, Var y_pair) {
  const std::size_t k = g.numel(single_scores);
  detail::check_lengths(g, children, k, "run_comp");
  if (region_rows.size() != k) throw ShapeError("run_comp: region count differs from K");
  CompOutput out;
  out.beta = g.softmax(run_single(g, single_scores, children));
  out.context = g.matvec_t(regions, out.beta);
  std::vector<Var> scores;
  scores.reserve(k);
  for (auto x : region_rows) scores.push_back(score_pair(g, pair, x, out.context, y_pair));
  out.scores = g.concat(scores);
  return out;
}

// ---- bottom-up grounding ------------------------------------------------------

struct NodeTrace {
  ModuleKind kind = ModuleKind::Single;
  Var scores;
  std::optional<Var> alpha_s;
  std::optional<Var> alpha_p;
  std::optional<Var> beta;
};

struct GroundResult {
  Var root_scores;
  std::vector<NodeTrace> nodes;
};

// Post-order evaluation of the assembled tree. Train mode runs both Sum and
// Comp at decided nodes and combines them with the straight-through mix; Soft
// mode combines them with z~; Infer runs only the chosen branch.
template <class T>
GroundResult ground_tree(Graph<T>& g, const ModelVars& vars, const ParseTree& tree,
                         const EncodedTree& enc, const ModuleAssignment& assignment,
                         const Scene& scene, Mode mode) {
  scene.validate();
  if (assignment.kind.size() != tree.size())
    throw std::invalid_argument("ground_tree: assignment covers " +
                                std::to_string(assignment.kind.size()) + " nodes, tree has " +
                                std::to_string(tree.size()));
  for (std::size_t t = 0; t < tree.size(); ++t) {
    const bool fixed = tree.is_root(t) || tree.is_leaf(t);
    if (fixed != (assignment.kind[t] == ModuleKind::Single))
      throw std::invalid_argument("ground_tree: node " + std::to_string(t) +
                                  " has module " + to_string(assignment.kind[t]) +
                                  " inconsistent with its position");
    if (!fixed && !assignment.decision[t])
      throw std::invalid_argument("ground_tree: missing decision for node " + std::to_string(t));
  }
  const std::size_t K = scene.num_regions;
  std::vector<T> feats(scene.features.begin(), scene.features.end());
  Var regions = g.constant({K, scene.d_x}, std::move(feats));
  std::vector<Var> rows;
  rows.reserve(K);
  for (std::size_t i = 0; i < K; ++i) rows.push_back(g.lookup(regions, i));

  // fc(x_i) of S_s is shared by every node.
  std::vector<Var> single_proj;
  single_proj.reserve(K);
  for (auto x : rows) single_proj.push_back(g.linear(x, vars.single.w_in, vars.single.b_in));

  std::vector<std::optional<Var>> logit_s(tree.size()), logit_p(tree.size());
  auto alpha = [&](std::size_t t, const AttentionVars& head,
                   std::vector<std::optional<Var>>& cache) {
    auto members = tree.node_set(t);
    std::vector<Var> logits;
    logits.reserve(members.size());
    for (auto m : members) {
      if (!cache[m]) cache[m] = attention_logit(g, head, enc.context[m]);
      logits.push_back(*cache[m]);
    }
    Var a = g.softmax(g.concat(logits));
    std::vector<Var> embs;
    embs.reserve(members.size());
    for (auto m : members) embs.push_back(enc.embedding[m]);
    return std::pair{a, language_rep(g, embs, a)};
  };
  auto singles = [&](Var y) {
    std::vector<Var> s;
    s.reserve(K);
    for (auto p : single_proj) s.push_back(score_from_projection(g, vars.single, p, y));
    return g.concat(s);
  };

  GroundResult res;
  res.nodes.resize(tree.size());
  for (auto t : tree.post_order()) {
    std::vector<Var> kids;
    kids.reserve(tree.children[t].size());
    for (auto c : tree.children[t]) kids.push_back(res.nodes[c].scores);
    NodeTrace& tr = res.nodes[t];
    tr.kind = assignment.kind[t];

    if (tr.kind == ModuleKind::Single) {
      auto [a_s, y_s] = alpha(t, vars.attn_s, logit_s);
      tr.alpha_s = a_s;
      tr.scores = run_single(g, singles(y_s), kids);
      continue;
    }

    const NodeDecision& d = *assignment.decision[t];
    const bool need_comp = mode != Mode::Infer || tr.kind == ModuleKind::Comp;
    const bool need_sum = mode != Mode::Infer || tr.kind == ModuleKind::Sum;
    Var sum_out, comp_out;
    if (need_sum) sum_out = run_sum(g, kids);
    if (need_comp) {
      auto [a_s, y_s] = alpha(t, vars.attn_s, logit_s);
      auto [a_p, y_p] = alpha(t, vars.attn_p, logit_p);
      tr.alpha_s = a_s;
      tr.alpha_p = a_p;
      auto comp = run_comp(g, vars.pair, regions, rows, singles(y_s), kids, y_p);
      tr.beta = comp.beta;
      comp_out = comp.scores;
    }
    if (mode == Mode::Infer) {
      tr.scores = tr.kind == ModuleKind::Comp ? comp_out : sum_out;
    } else if (mode == Mode::Train) {
      std::vector<T> hard{static_cast<T>(d.z[kSumIndex]), static_cast<T>(d.z[kCompIndex])};
      tr.scores = g.straight_through_mix(hard, d.z_soft_var, {sum_out, comp_out});
    } else {
      tr.scores = g.weighted_mix(d.z_soft_var, {sum_out, comp_out});
    }
  }
  res.root_scores = res.nodes[tree.root].scores;
  return res;
}

}  // namespace nmtree

#endif  // NMTREE_MODULES_HPP
