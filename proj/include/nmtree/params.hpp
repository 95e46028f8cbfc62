#ifndef NMTREE_PARAMS_HPP
#define NMTREE_PARAMS_HPP

#include <cstdint>
#include <string>

#include "nmtree/autodiff.hpp"
#include "nmtree/tensor.hpp"
#include "nmtree/vocab.hpp"

namespace nmtree {

struct ModelDims {
  std::size_t d_x = 16;
  std::size_t d_h = 64;
  std::size_t embed_word = 300;
  std::size_t embed_pos = 50;
  std::size_t embed_dep = 50;
  std::size_t attn_hidden = 64;

  std::size_t embed() const { return embed_word + embed_pos + embed_dep; }
  std::size_t context() const { return 2 * d_h; }
};

// Gate rows of the stacked input projection are ordered i, o, u, f.
struct TreeLstmVars {
  Var w;      // 4dh x E
  Var u_iou;  // 3dh x dh
  Var u_f;    // dh x dh
  Var b;      // 4dh
  std::size_t d_h = 0;
};

struct AttentionVars {
  Var w1, b1, w2, b2;
};

struct ScoreVars {
  Var w_in, b_in, w_out, b_out;
};

struct EmbeddingVars {
  Var word, pos, dep;
};

// Every trainable parameter bound to one Graph.
struct ModelVars {
  EmbeddingVars embed;
  TreeLstmVars up, down;
  Var asm_w, asm_b;
  AttentionVars attn_s, attn_p;
  ScoreVars single, pair;
};

// Creates the full parameter set for the given vocabulary and dims.
template <class T>
void create_parameters(ParameterStore<T>& store, const Vocabulary& vocab, const ModelDims& d,
                       std::uint64_t seed) {
  const std::size_t E = d.embed(), H = d.d_h, A = d.attn_hidden;
  store.add("embed.word", {vocab.words.size(), d.embed_word});
  store.add("embed.pos", {vocab.pos.size(), d.embed_pos});
  store.add("embed.dep", {vocab.deps.size(), d.embed_dep});
  for (const std::string dir : {"lstm_up", "lstm_down"}) {
    store.add(dir + ".W", {4 * H, E});
    store.add(dir + ".U_iou", {3 * H, H});
    store.add(dir + ".U_f", {H, H});
    store.add(dir + ".b", {4 * H});
  }
  store.add("assembler.W", {2, E + 2 * H});
  store.add("assembler.b", {2});
  for (const std::string head : {"attn_s", "attn_p"}) {
    store.add(head + ".W1", {A, 2 * H});
    store.add(head + ".b1", {A});
    store.add(head + ".W2", {1, A});
    store.add(head + ".b2", {1});
  }
  store.add("score_single.W_in", {E, d.d_x});
  store.add("score_single.b_in", {E});
  store.add("score_single.W_out", {1, E});
  store.add("score_single.b_out", {1});
  store.add("score_pair.W_in", {E, 2 * d.d_x});
  store.add("score_pair.b_in", {E});
  store.add("score_pair.W_out", {1, E});
  store.add("score_pair.b_out", {1});

  Rng rng(seed);
  for (auto& [name, e] : store.entries()) {
    if (name.rfind("embed.", 0) == 0)
      init_uniform(e.tensor, rng, 0.1);
    else
      init_uniform_fan_in(e.tensor, rng);
  }
}

// A const store binds read-only (no gradients).
template <class T, class Store>
ModelVars bind_parameters(Graph<T>& g, Store& store, const ModelDims& d) {
  ModelVars v;
  auto p = [&](const std::string& name) { return g.param(store.get(name)); };
  v.embed = {p("embed.word"), p("embed.pos"), p("embed.dep")};
  v.up = {p("lstm_up.W"), p("lstm_up.U_iou"), p("lstm_up.U_f"), p("lstm_up.b"), d.d_h};
  v.down = {p("lstm_down.W"), p("lstm_down.U_iou"), p("lstm_down.U_f"), p("lstm_down.b"), d.d_h};
  v.asm_w = p("assembler.W");
  v.asm_b = p("assembler.b");
  v.attn_s = {p("attn_s.W1"), p("attn_s.b1"), p("attn_s.W2"), p("attn_s.b2")};
  v.attn_p = {p("attn_p.W1"), p("attn_p.b1"), p("attn_p.W2"), p("attn_p.b2")};
  v.single = {p("score_single.W_in"), p("score_single.b_in"), p("score_single.W_out"),
              p("score_single.b_out")};
  v.pair = {p("score_pair.W_in"), p("score_pair.b_in"), p("score_pair.W_out"),
            p("score_pair.b_out")};
  return v;
}

}  // namespace nmtree

#endif  // NMTREE_PARAMS_HPP
