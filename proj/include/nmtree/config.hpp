#ifndef NMTREE_CONFIG_HPP
#define NMTREE_CONFIG_HPP

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "nmtree/synthetic.hpp"
#include "nmtree/training.hpp"

namespace nmtree {

// Everything a run needs: training schedule, model dims, synthetic-task
// inventories, and file paths. Serialized as one flat JSON object.
struct RunConfig {
  TrainConfig train;
  synth::SynthConfig synth;
  std::string data;
  std::string val;
  std::string out;

  void validate() const {
    train.validate();
    if (synth.num_regions < 2) throw std::invalid_argument("config: num_regions must be at least 2");
    if (synth.max_depth < 1 || synth.max_depth > 3) throw std::invalid_argument("config: max_depth must be 1, 2, or 3");
    if (synth.inventory.categories.empty() || synth.inventory.colors.empty())
      throw std::invalid_argument("config: inventories must be nonempty");
    if (train.dims.d_x < synth.inventory.min_feature_dim())
      throw std::invalid_argument("config: d_x=" + std::to_string(train.dims.d_x) +
                                  " is below the feature layout size " +
                                  std::to_string(synth.inventory.min_feature_dim()));
  }
};

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "lr",          "lr_decay",    "decay_every", "epochs",    "batch_size", "tau",
      "d_x",         "d_h",         "embed_word",  "embed_pos", "embed_dep",  "attn_hidden",
      "seed",        "precision",   "min_count",   "early_stop_patience",   "threads",
      "categories",  "colors",      "num_regions", "max_depth", "noise",      "min_distance",
      "data",        "val",         "out"};
  return keys;
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& t = c.train;
  return {{"lr", t.lr},
          {"lr_decay", t.lr_decay},
          {"decay_every", t.decay_every},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"tau", t.tau},
          {"d_x", t.dims.d_x},
          {"d_h", t.dims.d_h},
          {"embed_word", t.dims.embed_word},
          {"embed_pos", t.dims.embed_pos},
          {"embed_dep", t.dims.embed_dep},
          {"attn_hidden", t.dims.attn_hidden},
          {"seed", t.seed},
          {"precision", t.precision},
          {"min_count", t.min_count},
          {"early_stop_patience", t.early_stop_patience},
          {"threads", t.threads},
          {"categories", c.synth.inventory.categories},
          {"colors", c.synth.inventory.colors},
          {"num_regions", c.synth.num_regions},
          {"max_depth", c.synth.max_depth},
          {"noise", c.synth.noise},
          {"min_distance", c.synth.min_distance},
          {"data", c.data},
          {"val", c.val},
          {"out", c.out}};
}

// Applies the keys present in `j` on top of `c`; unknown keys are rejected.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!config_keys().count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
  auto set = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  auto& t = c.train;
  set("lr", t.lr);
  set("lr_decay", t.lr_decay);
  set("decay_every", t.decay_every);
  set("epochs", t.epochs);
  set("batch_size", t.batch_size);
  set("tau", t.tau);
  set("d_x", t.dims.d_x);
  set("d_h", t.dims.d_h);
  set("embed_word", t.dims.embed_word);
  set("embed_pos", t.dims.embed_pos);
  set("embed_dep", t.dims.embed_dep);
  set("attn_hidden", t.dims.attn_hidden);
  set("seed", t.seed);
  set("precision", t.precision);
  set("min_count", t.min_count);
  set("early_stop_patience", t.early_stop_patience);
  set("threads", t.threads);
  set("categories", c.synth.inventory.categories);
  set("colors", c.synth.inventory.colors);
  set("num_regions", c.synth.num_regions);
  set("max_depth", c.synth.max_depth);
  set("noise", c.synth.noise);
  set("min_distance", c.synth.min_distance);
  set("data", c.data);
  set("val", c.val);
  set("out", c.out);
  c.synth.d_x = t.dims.d_x;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  apply_json(c, j);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  return config_from_json(nlohmann::json::parse(is));
}

}  // namespace nmtree

#endif  // NMTREE_CONFIG_HPP
