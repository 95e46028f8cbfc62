#ifndef NMTREE_GRADCHECK_HPP
#define NMTREE_GRADCHECK_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nmtree/model.hpp"
#include "nmtree/parse_tree.hpp"

namespace nmtree {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps vanishing gradients from
// turning round-off into large relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares the backward pass against central differences for every entry of
// every parameter. The model runs in Soft mode with Gumbel noise drawn from
// Rng(noise_seed) on every evaluation, so the noise is held fixed.
inline GradCheckReport gradcheck_model(NMTree<double>& model, const GroundingExample& ex,
                                       std::uint64_t noise_seed, double h = 1e-4) {
  auto loss_at = [&] {
    Graph<double> g(false);
    Rng noise(noise_seed);
    auto f = model.run(g, bind_parameters(g, std::as_const(model.params()), model.dims()), ex,
                       Mode::Soft, &noise);
    return g.scalar(f.loss);
  };

  auto& store = model.params();
  store.zero_grad();
  {
    Graph<double> g;
    Rng noise(noise_seed);
    auto f = model.forward(g, ex, Mode::Soft, &noise);
    g.backward(f.loss);
  }

  GradCheckReport rep;
  for (auto& [name, e] : store.entries()) {
    auto& t = e.tensor;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.values[i];
      t.values[i] = orig + h;
      const double up = loss_at();
      t.values[i] = orig - h;
      const double down = loss_at();
      t.values[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double err = relative_error(t.grad[i], numeric);
      ++rep.checked;
      if (err > rep.max_rel_error || rep.worst_param.empty()) {
        rep.max_rel_error = err;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.worst_analytic = t.grad[i];
        rep.worst_numeric = numeric;
      }
    }
  }
  store.zero_grad();
  return rep;
}

// The fixed tiny problem: d_x=8, d_h=16, embeddings 8/4/4, K=3 and the
// five-node tree "red ball left-of blue box" (two assembler decisions).
struct GradCheckProblem {
  NMTree<double> model;
  GroundingExample example;
};

inline GradCheckProblem tiny_gradcheck_problem(std::uint64_t seed = 7) {
  TokenSequence tokens{{1, "red", "ADJ", 2, "amod"},
                       {2, "ball", "NOUN", 0, "root"},
                       {3, "left-of", "ADP", 2, "prep"},
                       {4, "blue", "ADJ", 5, "amod"},
                       {5, "box", "NOUN", 3, "pobj"}};
  ParseTree tree = build_tree(tokens);
  Vocabulary vocab = build_vocab({tree}, 1);
  ModelDims dims;
  dims.d_x = 8;
  dims.d_h = 16;
  dims.embed_word = 8;
  dims.embed_pos = 4;
  dims.embed_dep = 4;
  dims.attn_hidden = 8;
  NMTree<double> model(vocab, dims, 1.0, seed);

  Scene scene;
  scene.num_regions = 3;
  scene.d_x = dims.d_x;
  scene.gt_index = 1;
  Rng rng(mix_seed(seed, 0xfea7));
  for (std::size_t i = 0; i < scene.num_regions * scene.d_x; ++i) scene.features.push_back(rng.gaussian());
  return {std::move(model), {std::move(tree), std::move(scene)}};
}

}  // namespace nmtree

#endif  // NMTREE_GRADCHECK_HPP
