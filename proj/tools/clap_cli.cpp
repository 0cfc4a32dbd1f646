// Command-line front end over the C interface. Every command writes into its
// own run directory: the resolved config, the seeds, its outputs, and a
// results.jsonl log.

#include <clap/clap.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure {
  int code;
  std::string message;
};

void check(clap_status s) {
  if (s == CLAP_OK) return;
  const int code = s == CLAP_ERR_INTERNAL ? 1 : static_cast<int>(s);
  throw Failure{code, clap_last_error()};
}

[[noreturn]] void usage_error(const std::string& message) { throw Failure{1, message}; }

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Config = Handle<clap_config, clap_config_free>;
using Dataset = Handle<clap_dataset, clap_dataset_free>;
using Model = Handle<clap_model, clap_model_free>;
using Agent = Handle<clap_agent, clap_agent_free>;

std::string config_value(const clap_config* c, const std::string& key) {
  size_t needed = 0;
  check(clap_config_get(c, key.c_str(), nullptr, 0, &needed));
  std::string out(needed + 1, '\0');
  check(clap_config_get(c, key.c_str(), out.data(), out.size(), &needed));
  out.resize(needed);
  return out;
}

std::int64_t config_int(const clap_config* c, const std::string& key) {
  const std::string v = config_value(c, key);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used == v.size()) return n;
  } catch (const std::exception&) {
  }
  usage_error("key '" + key + "' expects an integer, got '" + v + "'");
}

// Options shared by every command.
struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "Config file (key = value with [sections])")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Root seed (overrides run.seed)");
  cmd->add_option("--out", c.out, "Run directory (default: $CLAP_RUN_ROOT/<command>-<time>-seed<seed>)");
  cmd->add_option("--set", c.sets, "Override a config key, e.g. --set agent.epsilon=1 (repeatable)");
}

class Run {
 public:
  Run(const std::string& command, const Common& common) : command_(command) {
    check(clap_config_new(config_.out()));
    if (!common.config_file.empty()) check(clap_config_load_file(config_.get(), common.config_file.c_str()));
    for (const auto& s : common.sets) check(clap_config_set(config_.get(), s.c_str()));
    if (common.seed) check(clap_config_set(config_.get(), ("run.seed=" + std::to_string(*common.seed)).c_str()));
    seed_ = static_cast<std::uint64_t>(config_int(config_.get(), "run.seed"));
    dir_ = common.out.empty() ? default_dir() : fs::path(common.out);
    fs::create_directories(dir_);

    size_t needed = 0;
    check(clap_config_snapshot(config_.get(), nullptr, 0, &needed));
    std::string snap(needed + 1, '\0');
    check(clap_config_snapshot(config_.get(), snap.data(), snap.size(), &needed));
    snap.resize(needed);
    std::ofstream(dir_ / "config.cfg") << snap;
    std::ofstream(dir_ / "seeds.json") << json{{"root", seed_}, {"command", command_}}.dump(2) << "\n";
  }

  const clap_config* config() const { return config_.get(); }
  clap_config* config() { return config_.get(); }
  std::uint64_t seed() const { return seed_; }
  const fs::path& dir() const { return dir_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void result(json j) {
    j["command"] = command_;
    std::ofstream(dir_ / "results.jsonl", std::ios::app) << j.dump() << "\n";
    std::cout << j.dump(2) << "\n";
  }

  // Keeps the run directory self-contained: inputs are copied in.
  std::string adopt(const fs::path& source, const std::string& name) const {
    const fs::path target = dir_ / name;
    if (!fs::exists(source)) throw Failure{2, "no such file: " + source.string()};
    if (!fs::exists(target) || !fs::equivalent(source, target)) {
      fs::copy_file(source, target, fs::copy_options::overwrite_existing);
    }
    return target.string();
  }

 private:
  fs::path default_dir() const {
    const char* root = std::getenv("CLAP_RUN_ROOT");
    const fs::path base = root != nullptr && *root != '\0' ? fs::path(root) : fs::path("runs");
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
    const std::string stem = command_ + "-" + stamp + "-seed" + std::to_string(seed_);
    fs::path p = base / stem;
    for (int i = 1; fs::exists(p); ++i) p = base / (stem + "-" + std::to_string(i));
    return p;
  }

  std::string command_;
  Config config_;
  std::uint64_t seed_ = 0;
  fs::path dir_;
};

void load_dataset(Run& run, const std::string& path, Dataset& out) {
  check(clap_dataset_load(run.adopt(path, "dataset.clapd").c_str(), out.out()));
}

// An explicit --data wins; otherwise the dataset stored next to the model.
std::string dataset_for(const std::string& data, const std::string& model) {
  if (!data.empty()) return data;
  const fs::path beside = fs::path(model).parent_path() / "dataset.clapd";
  if (!fs::exists(beside)) usage_error("no dataset next to " + model + "; pass --data <dataset file>");
  return beside.string();
}

void require_flag(const std::string& value, const std::string& flag, const std::string& what) {
  if (value.empty()) usage_error("missing " + flag + " <" + what + ">: this command needs " + what);
}

json dataset_summary(const clap_dataset* d) {
  clap_dataset_info info{};
  check(clap_dataset_info_get(d, &info));
  return {{"episodes", info.episodes}, {"steps", info.steps}, {"mean_return", info.mean_return}};
}

json curve_json(const clap_curve_point& p) {
  return {{"step", p.step},
          {"return", p.raw_return},
          {"normalized_return", p.normalized_return},
          {"mean_value", p.mean_value}};
}

void train_model_into(Run& run, const clap_dataset* data, const std::string& name, Model& model) {
  check(clap_model_new(run.config(), data, run.seed(), model.out()));
  check(clap_model_train(model.get(), data, run.path(name + "_metrics.csv").c_str()));
  check(clap_model_save(model.get(), run.path(name + ".ckpt").c_str()));
}

double discount(const clap_config* c) {
  const std::string v = config_value(c, "agent.discount");
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    usage_error("agent.discount expects a number, got '" + v + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained latent action policies: offline model-based RL on a point-mass task"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(clap_version()));

  Common common;
  std::string data_path, model_path, plain_model_path, agent_path, policy, input_dir, file_name = "curve.csv";
  std::int64_t episodes = 0, k = 0;

  auto* generate = app.add_subcommand("generate", "Roll out a behavior policy into a dataset");
  generate->add_option("--policy", policy, "expert | medium | replay | random (default data.policy)");
  generate->add_option("--episodes", episodes, "Episode count (default data.episodes)");

  auto* train_model = app.add_subcommand("train-model", "Train the world model on a dataset");
  train_model->add_option("--data", data_path, "Dataset file (default: generate one from the config)");

  auto* train_agent = app.add_subcommand("train-agent", "Train an agent in imagination with a frozen model");
  train_agent->add_option("--model", model_path, "World model checkpoint");
  train_agent->add_option("--data", data_path, "Dataset file (default: dataset.clapd next to the model)");

  auto* evaluate = app.add_subcommand("evaluate", "Run deterministic episodes in the environment");
  evaluate->add_option("--model", model_path, "World model checkpoint");
  evaluate->add_option("--agent", agent_path, "Agent checkpoint");
  evaluate->add_option("--episodes", episodes, "Episode count (default agent_train.eval_episodes)");

  auto* ablate = app.add_subcommand("ablate", "Train constrained, no-constraint and no-latent-action agents");
  ablate->add_option("--model", model_path, "World model checkpoint with latent actions");
  ablate->add_option("--plain-model", plain_model_path, "World model without latent actions (default: train one)");
  ablate->add_option("--data", data_path, "Dataset file (default: dataset.clapd next to the model)");

  auto* sweep = app.add_subcommand("sweep-epsilon", "One agent per support width in analysis.epsilons");
  sweep->add_option("--model", model_path, "World model checkpoint");
  sweep->add_option("--data", data_path, "Dataset file (default: dataset.clapd next to the model)");

  auto* values = app.add_subcommand("analyze-values", "Compare critic values with the dataset's returns-to-go");
  values->add_option("--model", model_path, "World model checkpoint");
  values->add_option("--agent", agent_path, "Agent checkpoint");
  values->add_option("--data", data_path, "Dataset file (default: dataset.clapd next to the model)");

  auto* actions = app.add_subcommand("analyze-actions", "k-NN comparison of dataset and decoded actions");
  actions->add_option("--model", model_path, "World model checkpoint");
  actions->add_option("--data", data_path, "Dataset file (default: dataset.clapd next to the model)");
  actions->add_option("--k", k, "Neighbour count (default analysis.knn_k)");

  auto* report = app.add_subcommand("report", "Merge per-arm CSVs below a directory into one file");
  report->add_option("--in", input_dir, "Directory to scan")->required()->check(CLI::ExistingDirectory);
  report->add_option("--file", file_name, "File name to collect (default curve.csv)");

  for (auto* cmd : {generate, train_model, train_agent, evaluate, ablate, sweep, values, actions, report}) {
    add_common(cmd, common);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    auto* cmd = app.get_subcommands().front();
    Run run(cmd->get_name(), common);
    const clap_config* cfg = run.config();

    if (cmd == generate) {
      if (policy.empty()) policy = config_value(cfg, "data.policy");
      if (episodes == 0) episodes = config_int(cfg, "data.episodes");
      Dataset data;
      check(clap_dataset_generate(cfg, policy.c_str(), episodes, run.seed(), data.out()));
      check(clap_dataset_save(data.get(), run.path("dataset.clapd").c_str()));
      json r = dataset_summary(data.get());
      r["policy"] = policy;
      r["dataset"] = run.path("dataset.clapd");
      run.result(r);
    } else if (cmd == train_model) {
      Dataset data;
      if (data_path.empty()) {
        check(clap_dataset_generate(cfg, config_value(cfg, "data.policy").c_str(), config_int(cfg, "data.episodes"),
                                    run.seed(), data.out()));
        check(clap_dataset_save(data.get(), run.path("dataset.clapd").c_str()));
      } else {
        load_dataset(run, data_path, data);
      }
      Model model;
      train_model_into(run, data.get(), "model", model);
      json r = dataset_summary(data.get());
      r["model"] = run.path("model.ckpt");
      r["step"] = clap_model_step(model.get());
      run.result(r);
    } else if (cmd == train_agent) {
      require_flag(model_path, "--model", "a world model checkpoint");
      Model model;
      check(clap_model_load(run.adopt(model_path, "model.ckpt").c_str(), model.out()));
      Dataset data;
      load_dataset(run, dataset_for(data_path, model_path), data);
      Agent agent;
      check(clap_agent_new(cfg, model.get(), run.seed(), agent.out()));
      clap_curve_point last{};
      check(clap_agent_train(agent.get(), model.get(), data.get(), cfg, "agent", run.path("curve.csv").c_str(),
                             run.path("agent_metrics.csv").c_str(), &last));
      check(clap_agent_save(agent.get(), run.path("agent.ckpt").c_str()));
      json r = curve_json(last);
      r["agent"] = run.path("agent.ckpt");
      run.result(r);
    } else if (cmd == evaluate) {
      require_flag(model_path, "--model", "a world model checkpoint");
      require_flag(agent_path, "--agent", "an agent checkpoint");
      if (episodes == 0) episodes = config_int(cfg, "agent_train.eval_episodes");
      Model model;
      check(clap_model_load(run.adopt(model_path, "model.ckpt").c_str(), model.out()));
      Agent agent;
      check(clap_agent_load(run.adopt(agent_path, "agent.ckpt").c_str(), agent.out()));
      clap_evaluation ev{};
      std::vector<double> returns(static_cast<std::size_t>(std::max<std::int64_t>(episodes, 0)));
      check(clap_evaluate(cfg, model.get(), agent.get(), episodes, run.seed(), &ev, returns.data()));
      run.result({{"episodes", episodes},
                  {"mean_return", ev.mean_return},
                  {"std_return", ev.std_return},
                  {"normalized_return", ev.normalized_return},
                  {"returns", returns}});
    } else if (cmd == ablate) {
      require_flag(model_path, "--model", "a world model checkpoint with latent actions");
      Model model;
      check(clap_model_load(run.adopt(model_path, "model.ckpt").c_str(), model.out()));
      if (!clap_model_has_latent_actions(model.get())) usage_error("--model must be trained with latent actions");
      Dataset data;
      load_dataset(run, dataset_for(data_path, model_path), data);
      Model plain;
      if (plain_model_path.empty()) {
        Config plain_cfg;
        check(clap_config_new(plain_cfg.out()));
        size_t needed = 0;
        check(clap_config_snapshot(cfg, nullptr, 0, &needed));
        std::string snap(needed + 1, '\0');
        check(clap_config_snapshot(cfg, snap.data(), snap.size(), &needed));
        snap.resize(needed);
        const fs::path tmp = run.dir() / "plain_model.cfg";
        std::ofstream(tmp) << snap << "[model]\nlatent_actions = false\n";
        check(clap_config_load_file(plain_cfg.get(), tmp.string().c_str()));
        check(clap_model_new(plain_cfg.get(), data.get(), run.seed(), plain.out()));
        check(clap_model_train(plain.get(), data.get(), run.path("plain_model_metrics.csv").c_str()));
        check(clap_model_save(plain.get(), run.path("plain_model.ckpt").c_str()));
      } else {
        check(clap_model_load(run.adopt(plain_model_path, "plain_model.ckpt").c_str(), plain.out()));
      }
      if (clap_model_has_latent_actions(plain.get())) usage_error("--plain-model must be trained without latent actions");

      double ref_return = 0.0, ref_max = 0.0;
      check(clap_dataset_reference_values(data.get(), discount(cfg), &ref_return, &ref_max));
      for (const std::string variant : {"constrained", "no-constraint", "no-latent-action"}) {
        check(clap_config_set(run.config(), ("agent.variant=" + variant).c_str()));
        clap_model* m = variant == "no-latent-action" ? plain.get() : model.get();
        fs::create_directories(run.dir() / variant);
        Agent agent;
        check(clap_agent_new(cfg, m, run.seed(), agent.out()));
        clap_curve_point last{};
        check(clap_agent_train(agent.get(), m, data.get(), cfg, variant.c_str(),
                               run.path(variant + "/curve.csv").c_str(),
                               run.path(variant + "/agent_metrics.csv").c_str(), &last));
        check(clap_agent_save(agent.get(), run.path(variant + "/agent.ckpt").c_str()));
        json r = curve_json(last);
        r["arm"] = variant;
        r["reference_return"] = ref_return;
        r["reference_max_value"] = ref_max;
        run.result(r);
      }
    } else if (cmd == sweep) {
      require_flag(model_path, "--model", "a world model checkpoint");
      Model model;
      check(clap_model_load(run.adopt(model_path, "model.ckpt").c_str(), model.out()));
      Dataset data;
      load_dataset(run, dataset_for(data_path, model_path), data);
      std::vector<clap_sweep_arm> arms(64);
      size_t count = 0;
      check(clap_epsilon_sweep(cfg, model.get(), data.get(), run.seed(), run.dir().string().c_str(), arms.data(),
                               arms.size(), &count));
      for (size_t i = 0; i < count && i < arms.size(); ++i) {
        run.result({{"epsilon", arms[i].epsilon},
                    {"final_return", arms[i].final_return},
                    {"peak_return", arms[i].peak_return}});
      }
    } else if (cmd == values) {
      require_flag(model_path, "--model", "a world model checkpoint");
      require_flag(agent_path, "--agent", "an agent checkpoint");
      Model model;
      check(clap_model_load(run.adopt(model_path, "model.ckpt").c_str(), model.out()));
      Agent agent;
      check(clap_agent_load(run.adopt(agent_path, "agent.ckpt").c_str(), agent.out()));
      Dataset data;
      load_dataset(run, dataset_for(data_path, model_path), data);
      double ref_return = 0.0, ref_max = 0.0, value = 0.0;
      check(clap_dataset_reference_values(data.get(), discount(cfg), &ref_return, &ref_max));
      check(clap_mean_value(agent.get(), model.get(), data.get(), config_int(cfg, "agent_train.value_windows"),
                            run.seed(), &value));
      run.result({{"agent_step", clap_agent_step(agent.get())},
                  {"mean_value", value},
                  {"reference_return", ref_return},
                  {"reference_max_value", ref_max},
                  {"value_over_reference_max", ref_max != 0.0 ? value / ref_max : 0.0}});
    } else if (cmd == actions) {
      require_flag(model_path, "--model", "a world model checkpoint");
      if (k == 0) k = config_int(cfg, "analysis.knn_k");
      Model model;
      check(clap_model_load(run.adopt(model_path, "model.ckpt").c_str(), model.out()));
      Dataset data;
      load_dataset(run, dataset_for(data_path, model_path), data);
      clap_action_summary s{};
      check(clap_action_study(model.get(), data.get(), k, config_int(cfg, "analysis.query_episodes"), run.seed(),
                              run.path("actions.csv").c_str(), &s));
      run.result({{"k", k},
                  {"rows", s.rows},
                  {"within_range", s.within_range},
                  {"mean_abs_mean_difference", s.mean_abs_mean_difference}});
    } else if (cmd == report) {
      const std::string out = run.path("report.csv");
      if (fs::exists(out)) fs::remove(out);
      size_t files = 0;
      check(clap_merge_csv(input_dir.c_str(), file_name.c_str(), out.c_str(), &files));
      run.result({{"files", files}, {"report", out}});
    }
    std::cerr << "run directory: " << run.dir().string() << "\n";
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
