#ifndef NMTREE_ASSEMBLER_HPP
#define NMTREE_ASSEMBLER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmtree/autodiff.hpp"
#include "nmtree/parse_tree.hpp"
#include "nmtree/rng.hpp"
#include "nmtree/tree_encoder.hpp"

namespace nmtree {

enum class ModuleKind { Single, Sum, Comp };

inline const char* to_string(ModuleKind k) {
  switch (k) {
    case ModuleKind::Single: return "Single";
    case ModuleKind::Sum: return "Sum";
    case ModuleKind::Comp: return "Comp";
  }
  return "?";
}

// Train: hard one-hot forward, straight-through backward, fresh Gumbel noise.
// Soft: z~ mixes the branches in the forward pass too (used for gradient checks).
// Infer: no noise, argmax of the logits, only the chosen branch runs.
enum class Mode { Train, Soft, Infer };

// Index 0 is Sum, index 1 is Comp.
inline constexpr std::size_t kSumIndex = 0;
inline constexpr std::size_t kCompIndex = 1;

inline constexpr double kGumbelClamp = 1e-10;

// G = -log(-log(U)), U clamped to [1e-10, 1 - 1e-10].
inline double gumbel_from_uniform(double u) {
  u = std::clamp(u, kGumbelClamp, 1.0 - kGumbelClamp);
  return -std::log(-std::log(u));
}

inline double sample_gumbel(Rng& rng) { return gumbel_from_uniform(rng.uniform()); }

// Lowest index wins ties.
template <class It>
std::size_t argmax_index(It begin, It end) {
  std::size_t best = 0, i = 0;
  auto best_val = *begin;
  for (auto it = begin; it != end; ++it, ++i)
    if (*it > best_val) {
      best_val = *it;
      best = i;
    }
  return best;
}

struct GumbelDecision {
  std::array<double, 2> z{};
  std::array<double, 2> z_soft{};
};

// Value-level decision, ℓ = log_softmax(logits).
inline GumbelDecision gumbel_decision(std::array<double, 2> logits, std::array<double, 2> noise,
                                      double tau, Mode mode) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_decision: temperature must be positive");
  const double mx = std::max(logits[0], logits[1]);
  const double lse = mx + std::log(std::exp(logits[0] - mx) + std::exp(logits[1] - mx));
  std::array<double, 2> ell{logits[0] - lse, logits[1] - lse};
  GumbelDecision d;
  if (mode == Mode::Infer) {
    d.z[argmax_index(ell.begin(), ell.end())] = 1.0;
    d.z_soft = d.z;
    return d;
  }
  std::array<double, 2> pert{ell[0] + noise[0], ell[1] + noise[1]};
  d.z[argmax_index(pert.begin(), pert.end())] = 1.0;
  const double pm = std::max(pert[0], pert[1]) / tau;
  const double a = std::exp(pert[0] / tau - pm), b = std::exp(pert[1] / tau - pm);
  d.z_soft = {a / (a + b), b / (a + b)};
  return d;
}

// fc([e_t; h_t]) -> 2 unnormalized scores.
template <class T>
Var assembler_logits(Graph<T>& g, Var w, Var b, Var e, Var h) {
  return g.linear(g.concat({e, h}), w, b);
}

struct NodeDecision {
  std::array<double, 2> logits{};
  std::array<double, 2> noise{};
  double tau = 1.0;
  std::array<double, 2> z{};
  std::array<double, 2> z_soft{};
  Var z_soft_var;  // differentiable z~ (Train/Soft only)
};

struct ModuleAssignment {
  std::vector<ModuleKind> kind;
  std::vector<std::optional<NodeDecision>> decision;

  std::size_t sampled() const {
    return static_cast<std::size_t>(
        std::count_if(decision.begin(), decision.end(), [](const auto& d) { return d.has_value(); }));
  }
};

// Leaves and the root get Single; every other node is decided by the
// assembler. In Train/Soft modes `rng` supplies one Gumbel pair per decided
// node, drawn in pre-order; Infer never touches it.
template <class T>
ModuleAssignment assign_modules(Graph<T>& g, const ModelVars& vars, const ParseTree& tree,
                                const EncodedTree& enc, double tau, Rng* rng, Mode mode) {
  if (!(tau > 0.0)) throw std::invalid_argument("assign_modules: temperature must be positive");
  ModuleAssignment a;
  a.kind.assign(tree.size(), ModuleKind::Single);
  a.decision.assign(tree.size(), std::nullopt);
  for (auto t : tree.pre_order()) {
    if (tree.is_root(t) || tree.is_leaf(t)) continue;
    NodeDecision d;
    d.tau = tau;
    Var logits = assembler_logits(g, vars.asm_w, vars.asm_b, enc.embedding[t], enc.context[t]);
    auto lv = g.value(logits);
    d.logits = {static_cast<double>(lv[0]), static_cast<double>(lv[1])};
    if (mode != Mode::Infer) {
      if (!rng) throw std::invalid_argument("assign_modules: training modes need an rng");
      d.noise = {sample_gumbel(*rng), sample_gumbel(*rng)};
    }
    auto gd = gumbel_decision(d.logits, d.noise, tau, mode);
    d.z = gd.z;
    d.z_soft = gd.z_soft;
    if (mode != Mode::Infer) {
      Var pert = g.add(g.log_softmax(logits),
                       g.constant({2}, {static_cast<T>(d.noise[0]), static_cast<T>(d.noise[1])}));
      d.z_soft_var = g.softmax(g.scale(pert, static_cast<T>(1.0 / tau)));
    }
    a.kind[t] = d.z[kCompIndex] == 1.0 ? ModuleKind::Comp : ModuleKind::Sum;
    a.decision[t] = d;
  }
  return a;
}

}  // namespace nmtree

#endif  // NMTREE_ASSEMBLER_HPP
