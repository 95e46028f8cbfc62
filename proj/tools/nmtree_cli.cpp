// nmtree: synthetic data generation, training, evaluation, per-node grounding
// dumps and gradient checking for the neural module tree model.
//
//   nmtree synth --seed 1 --num 5000 --out train.jsonl
//   nmtree train --config configs/default.json --data train.jsonl --val val.jsonl --out model.ckpt
//   nmtree eval --ckpt model.ckpt --data test.jsonl
//   nmtree ground --ckpt model.ckpt --data test.jsonl --index 3
//   nmtree gradcheck
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmtree/nmtree.hpp"

namespace {

using nlohmann::json;
using namespace nmtree;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Registers --<key> for every config key; values are parsed as JSON when
// possible (numbers, arrays) and taken as plain strings otherwise.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> raw;

  void attach(CLI::App* cmd, bool with_config_file = true) {
    if (with_config_file) cmd->add_option("--config", config_path, "JSON config file");
    for (const auto& key : config_keys()) cmd->add_option("--" + key, raw[key], "override config key '" + key + "'");
  }

  RunConfig resolve(const CLI::App* cmd) const {
    RunConfig cfg;
    if (!config_path.empty()) {
      try {
        cfg = load_config(config_path);
      } catch (const json::exception& e) {
        throw UsageError("config '" + config_path + "': " + e.what());
      } catch (const std::invalid_argument& e) {
        throw UsageError("config '" + config_path + "': " + e.what());
      }
    }
    json overrides = json::object();
    for (const auto& [key, value] : raw) {
      if (cmd->count("--" + key) == 0) continue;
      json v = json::parse(value, nullptr, false);
      overrides[key] = v.is_discarded() ? json(value) : v;
    }
    try {
      apply_json(cfg, overrides);
      cfg.validate();
    } catch (const json::exception& e) {
      throw UsageError(std::string("bad config value: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

std::vector<GroundingExample> load_examples(const std::string& path, const RunConfig& cfg) {
  auto raw = synth::read_dataset(path, cfg.synth.inventory);
  std::vector<GroundingExample> out;
  out.reserve(raw.size());
  for (const auto& ex : raw) out.push_back(synth::to_grounding_example(ex, cfg.synth));
  return out;
}

void print_json(const json& j) { std::cout << j.dump() << std::endl; }

int cmd_synth(const RunConfig& cfg, std::size_t num, const std::string& out) {
  if (out.empty()) throw UsageError("synth: --out is required");
  auto data = synth::generate_dataset(cfg.train.seed, num, cfg.synth);
  synth::write_dataset(out, data, cfg.synth.inventory);
  std::cerr << "wrote " << data.size() << " examples to " << out << '\n';
  print_json({{"count", data.size()}, {"out", out}});
  return 0;
}

template <class T>
int cmd_train(const RunConfig& cfg, const std::string& log_path) {
  if (cfg.data.empty() || cfg.out.empty()) throw UsageError("train: --data and --out are required");
  auto train_set = load_examples(cfg.data, cfg);
  if (train_set.empty()) throw std::runtime_error("train: empty training set");
  std::vector<GroundingExample> val_set;
  if (!cfg.val.empty()) val_set = load_examples(cfg.val, cfg);

  std::vector<ParseTree> trees;
  for (const auto& ex : train_set) trees.push_back(ex.tree);
  NMTree<T> model(build_vocab(trees, cfg.train.min_count), cfg.train.dims, cfg.train.tau, cfg.train.seed);

  const std::string log_file = log_path.empty() ? cfg.out + ".log.jsonl" : log_path;
  std::ofstream log(log_file);
  if (!log) throw std::runtime_error("train: cannot write log '" + log_file + "'");
  std::size_t epochs_done = 0;
  train(model, train_set, val_set.empty() ? nullptr : &val_set, cfg.train, [&](const EpochStats& st) {
    json line{{"epoch", st.epoch},
              {"mean_loss", st.mean_loss},
              {"train_acc", st.train_acc},
              {"val_acc", st.val_acc ? json(*st.val_acc) : json(nullptr)},
              {"lr", st.lr}};
    log << line.dump() << '\n' << std::flush;
    print_json(line);
    std::fprintf(stderr, "epoch %zu  loss %.4f  train %.4f  val %s  lr %.3g\n", st.epoch, st.mean_loss,
                 st.train_acc, st.val_acc ? std::to_string(*st.val_acc).c_str() : "-", st.lr);
    epochs_done = st.epoch + 1;
  });
  save_checkpoint(cfg.out, model, cfg, epochs_done);
  std::cerr << "saved checkpoint " << cfg.out << '\n';
  return 0;
}

void print_frequency_table(const ModuleFrequency& freq) {
  auto table = [](const char* title, const auto& rows) {
    std::fprintf(stderr, "%-12s %8s %8s %8s\n", title, "Single", "Sum", "Comp");
    for (const auto& [label, counts] : rows) {
      auto get = [&](const char* k) {
        auto it = counts.find(k);
        return it == counts.end() ? std::size_t{0} : it->second;
      };
      std::fprintf(stderr, "%-12s %8zu %8zu %8zu\n", label.c_str(), get("Single"), get("Sum"), get("Comp"));
    }
  };
  table("POS", freq.by_pos);
  table("DEP", freq.by_dep);
  std::fprintf(stderr, "relation nodes (ADP/VERB) assembled as Comp: %.3f\n", freq.relation_comp_fraction());
}

template <class T>
int cmd_eval(const std::string& ckpt_path, const std::string& data_path, std::size_t threads) {
  auto ckpt = load_checkpoint<T>(ckpt_path);
  auto data = load_examples(data_path, ckpt.config);
  const double top1 = evaluate_top1(ckpt.model, data, threads);
  auto freq = module_frequency(ckpt.model, data);
  print_frequency_table(freq);
  print_json({{"top1", top1}, {"examples", data.size()}, {"module_frequency", freq.to_json()}});
  return 0;
}

template <class T>
int cmd_ground(const std::string& ckpt_path, const std::string& data_path, std::size_t index) {
  auto ckpt = load_checkpoint<T>(ckpt_path);
  auto raw = synth::read_dataset(data_path, ckpt.config.synth.inventory);
  if (index >= raw.size())
    throw UsageError("ground: index " + std::to_string(index) + " out of range for " +
                     std::to_string(raw.size()) + " examples");
  auto ex = synth::to_grounding_example(raw[index], ckpt.config.synth);
  json out = explain_example(ckpt.model, ex);
  out["index"] = index;
  print_json(out);
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, double threshold) {
  auto problem = tiny_gradcheck_problem(cfg.train.seed);
  auto rep = gradcheck_model(problem.model, problem.example, mix_seed(cfg.train.seed, 0x6a));
  const bool ok = rep.max_rel_error < threshold;
  std::fprintf(stderr, "checked %zu parameter entries; max relative error %.3e (%s[%zu]: analytic %.6e, numeric %.6e)\n",
               rep.checked, rep.max_rel_error, rep.worst_param.c_str(), rep.worst_index, rep.worst_analytic,
               rep.worst_numeric);
  print_json({{"max_rel_error", rep.max_rel_error},
              {"checked", rep.checked},
              {"worst_param", rep.worst_param},
              {"worst_index", rep.worst_index},
              {"threshold", threshold},
              {"pass", ok}});
  return ok ? 0 : 1;
}

int precision_of(const std::string& ckpt_path) { return read_manifest(ckpt_path).at("precision").get<int>(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural module tree grounding: synth, train, eval, ground, gradcheck"};
  app.require_subcommand(1);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic grounding dataset (JSON lines)");
  ConfigFlags synth_flags;
  synth_flags.attach(synth_cmd);
  std::size_t num = 0;
  synth_cmd->add_option("--num", num, "number of examples")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  std::string log_path;
  train_cmd->add_option("--log", log_path, "training log path (default <out>.log.jsonl)");

  std::string ckpt, data;
  std::size_t threads = 1;
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy and module-assignment frequencies");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint manifest")->required();
  eval_cmd->add_option("--data", data, "dataset (JSON lines)")->required();
  eval_cmd->add_option("--threads", threads, "evaluation threads")->check(CLI::PositiveNumber);

  std::size_t index = 0;
  auto* ground_cmd = app.add_subcommand("ground", "per-node explainability dump for one example");
  ground_cmd->add_option("--ckpt", ckpt, "checkpoint manifest")->required();
  ground_cmd->add_option("--data", data, "dataset (JSON lines)")->required();
  ground_cmd->add_option("--index", index, "0-based example index")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  ConfigFlags grad_flags;
  grad_flags.attach(grad_cmd);
  double threshold = 1e-3;
  grad_cmd->add_option("--threshold", threshold, "maximum allowed relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      auto cfg = synth_flags.resolve(synth_cmd);
      return cmd_synth(cfg, num, cfg.out);
    }
    if (train_cmd->parsed()) {
      auto cfg = train_flags.resolve(train_cmd);
      return cfg.train.precision == 64 ? cmd_train<double>(cfg, log_path) : cmd_train<float>(cfg, log_path);
    }
    if (eval_cmd->parsed())
      return precision_of(ckpt) == 64 ? cmd_eval<double>(ckpt, data, threads) : cmd_eval<float>(ckpt, data, threads);
    if (ground_cmd->parsed())
      return precision_of(ckpt) == 64 ? cmd_ground<double>(ckpt, data, index) : cmd_ground<float>(ckpt, data, index);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_flags.resolve(grad_cmd), threshold);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
