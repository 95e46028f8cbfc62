#ifndef NMTREE_MODEL_HPP
#define NMTREE_MODEL_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmtree/assembler.hpp"
#include "nmtree/autodiff.hpp"
#include "nmtree/modules.hpp"
#include "nmtree/params.hpp"
#include "nmtree/tree_encoder.hpp"
#include "nmtree/vocab.hpp"

namespace nmtree {

// One grounding problem: a (pruned) expression tree and its scene.
struct GroundingExample {
  ParseTree tree;
  Scene scene;
};

// L = -log softmax(scores)[gt]
template <class T>
Var grounding_loss(Graph<T>& g, Var root_scores, std::size_t gt_index) {
  if (gt_index >= g.numel(root_scores))
    throw std::out_of_range("grounding_loss: gt index " + std::to_string(gt_index) +
                            " out of range for K=" + std::to_string(g.numel(root_scores)));
  return g.neg(g.pick(g.log_softmax(root_scores), gt_index));
}

struct Forward {
  ModelVars vars;
  EncodedTree encoded;
  ModuleAssignment assignment;
  GroundResult result;
  Var loss;  // valid only when the scene has a gt index
};

template <class T>
class NMTree {
 public:
  NMTree() = default;

  NMTree(Vocabulary vocab, ModelDims dims, double tau, std::uint64_t seed)
      : vocab_(std::move(vocab)), dims_(dims), tau_(tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("NMTree: temperature must be positive");
    create_parameters(store_, vocab_, dims_, seed);
  }

  // For checkpoint restore: parameters are filled in by the caller.
  NMTree(Vocabulary vocab, ModelDims dims, double tau, ParameterStore<T> store)
      : vocab_(std::move(vocab)), dims_(dims), tau_(tau), store_(std::move(store)) {
    ParameterStore<T> reference;
    create_parameters(reference, vocab_, dims_, 0);
    for (const auto& [name, e] : reference.entries()) {
      if (!store_.contains(name)) throw std::invalid_argument("NMTree: missing parameter '" + name + "'");
      if (store_.get(name).shape != e.tensor.shape)
        throw ShapeError("NMTree: parameter '" + name + "' has shape " +
                         shape_str(store_.get(name).shape) + ", expected " +
                         shape_str(e.tensor.shape));
    }
    if (store_.size() != reference.size())
      throw std::invalid_argument("NMTree: unexpected extra parameters");
  }

  const Vocabulary& vocab() const { return vocab_; }
  const ModelDims& dims() const { return dims_; }
  double tau() const { return tau_; }
  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }

  // Builds the full forward pass on `g`. `rng` feeds Gumbel noise in
  // Train/Soft modes and is ignored in Infer mode.
  Forward forward(Graph<T>& g, const GroundingExample& ex, Mode mode, Rng* rng) {
    return run(g, bind_parameters(g, store_, dims_), ex, mode, rng);
  }

  // Read-only inference; safe to call concurrently.
  std::vector<double> predict_scores(const GroundingExample& ex) const {
    Graph<T> g(false);
    Forward f = run(g, bind_parameters(g, store_, dims_), ex, Mode::Infer, nullptr);
    auto v = g.value(f.result.root_scores);
    return {v.begin(), v.end()};
  }

  std::size_t predict(const GroundingExample& ex) const {
    auto s = predict_scores(ex);
    return argmax_index(s.begin(), s.end());
  }

  Forward run(Graph<T>& g, const ModelVars& vars, const GroundingExample& ex, Mode mode,
              Rng* rng) const {
    if (ex.scene.d_x != dims_.d_x)
      throw ShapeError("forward: scene feature size " + std::to_string(ex.scene.d_x) +
                       " differs from model d_x " + std::to_string(dims_.d_x));
    Forward f;
    f.vars = vars;
    f.encoded = encode(g, f.vars, ex.tree, encode_tree(vocab_, ex.tree));
    f.assignment = assign_modules(g, f.vars, ex.tree, f.encoded, tau_, rng, mode);
    f.result = ground_tree(g, f.vars, ex.tree, f.encoded, f.assignment, ex.scene, mode);
    if (ex.scene.gt_index) f.loss = grounding_loss(g, f.result.root_scores, *ex.scene.gt_index);
    return f;
  }

 private:
  Vocabulary vocab_;
  ModelDims dims_;
  double tau_ = 1.0;
  ParameterStore<T> store_;
};

}  // namespace nmtree

#endif  // NMTREE_MODEL_HPP
