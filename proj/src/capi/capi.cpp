#include "clap/clap.h"

#include "analysis/analysis.hpp"
#include "common/error.hpp"
#include "config/config.hpp"
#include "dataset/dataset.hpp"
#include "envsuite/envsuite.hpp"
#include "training/training.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

using namespace clap;

struct clap_config {
  config::Config value;
};

struct clap_dataset {
  dataset::TrajectoryDataset value;
};

struct clap_model {
  std::unique_ptr<training::ModelTrainer<float>> trainer;
  dataset::Normalization normalization;
  // Environment description and dataset provenance, carried into checkpoints.
  nlohmann::json environment;
  nlohmann::json data_info;
};

struct clap_agent {
  std::unique_ptr<training::AgentTrainer<float>> trainer;
  nlohmann::json metadata;
};

namespace {

thread_local std::string g_last_error;

clap_status fail(clap_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

template <typename F>
clap_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return CLAP_OK;
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::Usage:
      case ErrorKind::Config: return fail(CLAP_ERR_USAGE, e.what());
      case ErrorKind::Data: return fail(CLAP_ERR_DATA, e.what());
      case ErrorKind::Numerical: return fail(CLAP_ERR_NUMERICAL, e.what());
    }
    return fail(CLAP_ERR_INTERNAL, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(CLAP_ERR_DATA, std::string("malformed metadata: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(CLAP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CLAP_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw UsageError(std::string(what) + " must not be NULL");
}

void copy_out(const std::string& text, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = text.size();
  if (buf == nullptr || cap == 0) return;
  const size_t n = std::min(cap - 1, text.size());
  std::memcpy(buf, text.data(), n);
  buf[n] = '\0';
}

envsuite::PointMass environment_of(const clap_model& m, const clap_config* cfg) {
  if (!m.environment.is_null()) return envsuite::PointMass(envsuite::PointMassConfig::from_json(m.environment));
  require(cfg, "config");
  return envsuite::PointMass(cfg->value.env_config());
}

// Copy of the dataset normalized the way the model saw its training data.
dataset::TrajectoryDataset model_view(const clap_model& m, const clap_dataset& d) {
  const auto& mc = m.trainer->model().config();
  if (d.value.obs_dim() != mc.obs_dim || d.value.action_dim() != mc.action_dim) {
    throw ConfigError("dataset dimensions (" + std::to_string(d.value.obs_dim()) + ", " +
                      std::to_string(d.value.action_dim()) + ") differ from the model's (" +
                      std::to_string(mc.obs_dim) + ", " + std::to_string(mc.action_dim) + ")");
  }
  dataset::TrajectoryDataset out = d.value;
  out.set_normalization(m.normalization);
  return out;
}

analysis::TrackOptions track_options(const config::Config& c, std::uint64_t eval_seed) {
  analysis::TrackOptions o;
  o.steps = c.get_int("agent_train.steps");
  o.eval_every = c.get_int("agent_train.eval_every");
  o.eval_episodes = c.get_int("agent_train.eval_episodes");
  o.value_windows = c.get_int("agent_train.value_windows");
  o.eval_seed = eval_seed;
  if (o.steps < 0 || o.eval_every < 1 || o.eval_episodes < 1 || o.value_windows < 1) {
    throw ConfigError("agent_train.steps must be >= 0 and eval_every, eval_episodes, value_windows >= 1");
  }
  return o;
}

}  // namespace

extern "C" {

const char* clap_version(void) { return "0.1.0"; }

const char* clap_last_error(void) { return g_last_error.c_str(); }

clap_status clap_config_new(clap_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new clap_config();
  });
}

void clap_config_free(clap_config* config) { delete config; }

clap_status clap_config_load_file(clap_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    config->value.load_file(path);
  });
}

clap_status clap_config_set(clap_config* config, const char* assignment) {
  return guarded([&] {
    require(config, "config");
    require(assignment, "assignment");
    config->value.set_assignment(assignment);
  });
}

clap_status clap_config_get(const clap_config* config, const char* key, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    copy_out(config->value.get(key), buf, cap, needed);
  });
}

clap_status clap_config_snapshot(const clap_config* config, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(config, "config");
    copy_out(config->value.snapshot(), buf, cap, needed);
  });
}

clap_status clap_dataset_generate(const clap_config* config, const char* policy, int64_t episodes, uint64_t seed,
                                  clap_dataset** out) {
  return guarded([&] {
    require(config, "config");
    require(policy, "policy");
    require(out, "out");
    envsuite::PointMass env(config->value.env_config());
    auto data = envsuite::generate_dataset(env, envsuite::behavior_kind_from_string(policy), episodes, seed);
    *out = new clap_dataset{std::move(data)};
  });
}

clap_status clap_dataset_load(const char* path, clap_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new clap_dataset{dataset::load(path)};
  });
}

clap_status clap_dataset_save(const clap_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "dataset");
    require(path, "path");
    dataset::save(data->value, path);
  });
}

void clap_dataset_free(clap_dataset* data) { delete data; }

clap_status clap_dataset_info_get(const clap_dataset* data, clap_dataset_info* out) {
  return guarded([&] {
    require(data, "dataset");
    require(out, "out");
    out->episodes = static_cast<int64_t>(data->value.size());
    out->steps = data->value.total_steps();
    out->obs_dim = data->value.obs_dim();
    out->action_dim = data->value.action_dim();
    out->mean_return = data->value.mean_return();
  });
}

clap_status clap_dataset_reference_values(const clap_dataset* data, double discount, double* average_return,
                                          double* average_max_value) {
  return guarded([&] {
    require(data, "dataset");
    auto r = analysis::dataset_reference_values(data->value, discount);
    if (average_return != nullptr) *average_return = r.average_return;
    if (average_max_value != nullptr) *average_max_value = r.average_max_value;
  });
}

clap_status clap_reference_returns(const clap_config* config, double* random_return, double* expert_return) {
  return guarded([&] {
    require(config, "config");
    auto r = envsuite::reference_returns(envsuite::PointMass(config->value.env_config()));
    if (random_return != nullptr) *random_return = r.random;
    if (expert_return != nullptr) *expert_return = r.expert;
  });
}

clap_status clap_model_new(const clap_config* config, const clap_dataset* data, uint64_t seed, clap_model** out) {
  return guarded([&] {
    require(config, "config");
    require(data, "dataset");
    require(out, "out");
    const auto& c = config->value;
    auto m = std::make_unique<clap_model>();
    m->trainer = std::make_unique<training::ModelTrainer<float>>(
        c.model_config(data->value.obs_dim(), data->value.action_dim()), c.model_train_config(), training::Seeds{seed});
    m->normalization = data->value.normalization();
    const auto& meta = data->value.metadata();
    if (meta.contains("environment")) m->environment = meta.at("environment");
    m->data_info = meta;
    m->data_info.erase("environment");
    *out = m.release();
  });
}

clap_status clap_model_train(clap_model* model, const clap_dataset* data, const char* metrics_csv) {
  return guarded([&] {
    require(model, "model");
    require(data, "dataset");
    auto view = model_view(*model, *data);
    std::optional<training::CsvWriter> csv;
    if (metrics_csv != nullptr) csv.emplace(metrics_csv, training::kModelMetricColumns);
    model->trainer->train(view, csv ? &*csv : nullptr);
  });
}

clap_status clap_model_save(const clap_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    nlohmann::json extra = {{"environment", model->environment}, {"dataset", model->data_info}};
    model->trainer->save(path, model->normalization, extra);
  });
}

clap_status clap_model_load(const char* path, clap_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    nlohmann::json meta;
    auto m = std::make_unique<clap_model>();
    m->trainer = training::load_model<float>(path, &meta);
    m->normalization = training::normalization_from_metadata(meta);
    if (meta.contains("environment")) m->environment = meta.at("environment");
    if (meta.contains("dataset")) m->data_info = meta.at("dataset");
    *out = m.release();
  });
}

void clap_model_free(clap_model* model) { delete model; }

int64_t clap_model_step(const clap_model* model) { return model == nullptr ? -1 : model->trainer->step(); }

int clap_model_has_latent_actions(const clap_model* model) {
  return model != nullptr && model->trainer->model().config().latent_actions ? 1 : 0;
}

clap_status clap_agent_new(const clap_config* config, const clap_model* model, uint64_t seed, clap_agent** out) {
  return guarded([&] {
    require(config, "config");
    require(model, "model");
    require(out, "out");
    auto a = std::make_unique<clap_agent>();
    a->trainer = std::make_unique<training::AgentTrainer<float>>(config->value.agent_config(),
                                                                  model->trainer->model().config(),
                                                                  training::Seeds{seed});
    *out = a.release();
  });
}

clap_status clap_agent_save(const clap_agent* agent, const char* path) {
  return guarded([&] {
    require(agent, "agent");
    require(path, "path");
    agent->trainer->save(path);
  });
}

clap_status clap_agent_load(const char* path, clap_agent** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto a = std::make_unique<clap_agent>();
    a->trainer = training::load_agent<float>(path, &a->metadata);
    *out = a.release();
  });
}

void clap_agent_free(clap_agent* agent) { delete agent; }

int64_t clap_agent_step(const clap_agent* agent) { return agent == nullptr ? -1 : agent->trainer->step(); }

clap_status clap_agent_train(clap_agent* agent, clap_model* model, const clap_dataset* data,
                             const clap_config* config, const char* arm, const char* curve_csv,
                             const char* metrics_csv, clap_curve_point* last) {
  return guarded([&] {
    require(agent, "agent");
    require(model, "model");
    require(data, "dataset");
    require(config, "config");
    auto view = model_view(*model, *data);
    auto env = environment_of(*model, config);
    auto refs = envsuite::reference_returns(env);
    auto options = track_options(config->value, agent->trainer->seeds().env());
    std::optional<training::CsvWriter> curve, metrics;
    if (curve_csv != nullptr) curve.emplace(curve_csv, analysis::kCurveColumns);
    if (metrics_csv != nullptr) metrics.emplace(metrics_csv, training::kAgentMetricColumns);
    auto points = analysis::train_and_track(*agent->trainer, model->trainer->model(), view, env, refs, options,
                                            arm != nullptr ? arm : "agent", curve ? &*curve : nullptr,
                                            metrics ? &*metrics : nullptr);
    if (last != nullptr && !points.empty()) {
      const auto& p = points.back();
      *last = {p.step, p.raw_return, p.normalized_return, p.mean_value};
    }
  });
}

clap_status clap_evaluate(const clap_config* config, const clap_model* model, const clap_agent* agent,
                          int64_t episodes, uint64_t seed, clap_evaluation* out, double* returns) {
  return guarded([&] {
    require(model, "model");
    require(agent, "agent");
    auto env = environment_of(*model, config);
    auto refs = envsuite::reference_returns(env);
    auto r = envsuite::evaluate(env, model->trainer->model(), agent->trainer->agent(), model->normalization, episodes,
                                seed);
    if (out != nullptr) *out = {r.mean, r.std, envsuite::normalized_return(r.mean, refs)};
    if (returns != nullptr) std::copy(r.returns.begin(), r.returns.end(), returns);
  });
}

clap_status clap_mean_value(const clap_agent* agent, const clap_model* model, const clap_dataset* data,
                            int64_t windows, uint64_t seed, double* out) {
  return guarded([&] {
    require(agent, "agent");
    require(model, "model");
    require(data, "dataset");
    require(out, "out");
    auto view = model_view(*model, *data);
    const auto& ac = agent->trainer->agent().config();
    *out = training::mean_posterior_value(agent->trainer->agent(), model->trainer->model(), view, windows, ac.window,
                                          seed);
  });
}

clap_status clap_epsilon_sweep(const clap_config* config, clap_model* model, const clap_dataset* data, uint64_t seed,
                               const char* out_dir, clap_sweep_arm* arms, size_t capacity, size_t* count) {
  return guarded([&] {
    require(config, "config");
    require(model, "model");
    require(data, "dataset");
    auto view = model_view(*model, *data);
    auto env = environment_of(*model, config);
    auto refs = envsuite::reference_returns(env);
    const auto& c = config->value;
    auto result = analysis::epsilon_sweep(model->trainer->model(), view, c.agent_config(),
                                          c.get_doubles("analysis.epsilons"), env, refs,
                                          track_options(c, training::Seeds{seed}.env()), seed,
                                          out_dir != nullptr ? std::filesystem::path(out_dir) : std::filesystem::path());
    if (count != nullptr) *count = result.size();
    for (size_t i = 0; arms != nullptr && i < result.size() && i < capacity; ++i) {
      arms[i] = {result[i].epsilon, result[i].final_return(), result[i].peak_return()};
    }
  });
}

clap_status clap_action_study(const clap_model* model, const clap_dataset* data, int64_t k, int64_t query_episodes,
                              uint64_t seed, const char* out_csv, clap_action_summary* out) {
  return guarded([&] {
    require(model, "model");
    require(data, "dataset");
    auto view = model_view(*model, *data);
    auto study = analysis::action_distribution_study(model->trainer->model(), view, k, query_episodes, seed);
    if (out_csv != nullptr) analysis::write_action_study(study, out_csv);
    if (out != nullptr) {
      *out = {study.within_range, study.mean_abs_mean_difference, static_cast<int64_t>(study.rows.size())};
    }
  });
}

clap_status clap_merge_csv(const char* root, const char* file_name, const char* out_csv, size_t* files) {
  return guarded([&] {
    require(root, "root");
    require(file_name, "file_name");
    require(out_csv, "out_csv");
    const auto n = analysis::merge_csv_tree(root, file_name, out_csv);
    if (files != nullptr) *files = n;
  });
}

}  // extern "C"
