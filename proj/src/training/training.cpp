#include "training/training.hpp"

#include "common/error.hpp"
#include "numerics/checkpoint.hpp"

#include <iomanip>
#include <limits>

namespace clap::training {

using world_model::ModelMetrics;

void ModelTrainConfig::validate() const {
  if (steps < 0) throw ConfigError("model training steps must be >= 0");
  if (batch_size <= 0 || window <= 0) throw ConfigError("model batch size and window must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("model learning rate must be positive");
}

nlohmann::json ModelTrainConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"window", window},
          {"learning_rate", learning_rate},
          {"clip_norm", clip_norm ? nlohmann::json(*clip_norm) : nlohmann::json(nullptr)}};
}

ModelTrainConfig ModelTrainConfig::from_json(const nlohmann::json& j) {
  ModelTrainConfig c;
  try {
    c.steps = j.at("steps").get<Index>();
    c.batch_size = j.at("batch_size").get<Index>();
    c.window = j.at("window").get<Index>();
    c.learning_rate = j.at("learning_rate").get<double>();
    const auto& clip = j.at("clip_norm");
    c.clip_norm = clip.is_null() ? std::nullopt : std::optional<double>(clip.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model training config in checkpoint is incomplete: ") + e.what());
  }
  return c;
}

std::uint64_t Seeds::model_init() const { return numerics::derive_seed(root, "model-init"); }
std::uint64_t Seeds::agent_init() const { return numerics::derive_seed(root, "agent-init"); }
std::uint64_t Seeds::env() const { return numerics::derive_seed(root, "env"); }
std::uint64_t Seeds::model_step(std::int64_t step) const {
  return numerics::derive_seed(numerics::derive_seed(root, "model-step"), std::to_string(step));
}
std::uint64_t Seeds::agent_step(std::int64_t step) const {
  return numerics::derive_seed(numerics::derive_seed(root, "agent-step"), std::to_string(step));
}

const std::vector<std::string> kModelMetricColumns{"step",  "loss",      "obs_nll",    "act_nll",
                                                   "kl_state", "kl_action", "reward_nll", "term_nll"};
const std::vector<std::string> kAgentMetricColumns{"step",       "actor_loss", "critic_loss",
                                                   "mean_value", "entropy",    "utilization"};

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header) : width_(header.size()) {
  out_.open(path);
  if (!out_) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != width_) throw ConfigError("CSV row width does not match the header");
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
  out_ << '\n';
}

void CsvWriter::row_labeled(const std::string& label, const std::vector<double>& values) {
  if (values.size() + 1 != width_) throw ConfigError("CSV row width does not match the header");
  out_ << label;
  for (double v : values) out_ << ',' << v;
  out_ << '\n';
}

namespace {

numerics::AdamConfig adam_config(double lr, std::optional<double> clip) {
  numerics::AdamConfig c;
  c.learning_rate = lr;
  c.clip_norm = clip;
  return c;
}

template <typename S>
std::uint32_t scalar_bytes() {
  return static_cast<std::uint32_t>(sizeof(S));
}

numerics::Checkpoint read_typed(const std::filesystem::path& path, std::uint32_t bytes, const char* kind) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  numerics::Checkpoint ckpt = numerics::read_checkpoint(path);
  if (ckpt.scalar_bytes != bytes) {
    throw DataError(path.string() + " stores " + std::to_string(8 * ckpt.scalar_bytes) + "-bit scalars, expected " +
                    std::to_string(8 * bytes) + "-bit");
  }
  if (ckpt.metadata.value("kind", std::string()) != kind) {
    throw DataError(path.string() + " is not a " + std::string(kind) + " checkpoint");
  }
  return ckpt;
}

}  // namespace

template <typename S>
ModelTrainer<S>::ModelTrainer(const world_model::ModelConfig& model_config, const ModelTrainConfig& train,
                              Seeds seeds)
    : config_(model_config), train_(train), seeds_(seeds) {
  train_.validate();
  numerics::Rng init(seeds_.model_init());
  model_ = std::make_unique<world_model::WorldModel<S>>(config_, init);
  optimizer_ = std::make_unique<numerics::Adam<S>>("model", model_->parameters().all(),
                                                    adam_config(train_.learning_rate, train_.clip_norm));
}

template <typename S>
ModelMetrics ModelTrainer<S>::update(const dataset::TrajectoryDataset& data) {
  const std::uint64_t seed = seeds_.model_step(step_);
  numerics::Rng data_rng(numerics::derive_seed(seed, "data"));
  numerics::SeededNoise<S> noise(numerics::derive_seed(seed, "noise"));
  auto batch = dataset::sample_windows<S>(data, train_.batch_size, train_.window, data_rng);
  model_->set_trainable(true);
  numerics::Tape<S> tape;
  auto loss = model_->model_loss(tape, batch, noise);
  model_->parameters().zero_gradients();
  tape.backward(loss.loss);
  optimizer_->apply();
  ++step_;
  return loss.metrics;
}

template <typename S>
ModelMetrics ModelTrainer<S>::train(const dataset::TrajectoryDataset& data, CsvWriter* metrics) {
  ModelMetrics last;
  while (step_ < train_.steps) {
    last = update(data);
    if (metrics) {
      metrics->row({static_cast<double>(step_), last.loss, last.obs_nll, last.act_nll, last.kl_state, last.kl_action,
                    last.reward_nll, last.term_nll});
    }
  }
  if (metrics) metrics->flush();
  return last;
}

template <typename S>
void ModelTrainer<S>::save(const std::filesystem::path& path, const dataset::Normalization& normalization,
                           const nlohmann::json& extra) const {
  numerics::Checkpoint ckpt;
  ckpt.scalar_bytes = scalar_bytes<S>();
  ckpt.metadata = extra;
  ckpt.metadata["kind"] = "model";
  ckpt.metadata["model_config"] = config_.to_json();
  ckpt.metadata["train_config"] = train_.to_json();
  ckpt.metadata["obs_mean"] = normalization.mean;
  ckpt.metadata["obs_std"] = normalization.std;
  ckpt.metadata["step"] = step_;
  ckpt.metadata["seed"] = seeds_.root;
  numerics::export_parameters(model_->parameters(), ckpt);
  ckpt.optimizers.push_back(numerics::export_optimizer(*optimizer_));
  numerics::write_checkpoint(ckpt, path);
}

dataset::Normalization normalization_from_metadata(const nlohmann::json& metadata) {
  try {
    return {metadata.at("obs_mean").get<std::vector<double>>(), metadata.at("obs_std").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model checkpoint has no observation statistics: ") + e.what());
  }
}

template <typename S>
std::unique_ptr<ModelTrainer<S>> load_model(const std::filesystem::path& path, nlohmann::json* metadata) {
  numerics::Checkpoint ckpt = read_typed(path, scalar_bytes<S>(), "model");
  const auto& meta = ckpt.metadata;
  auto cfg = world_model::ModelConfig::from_json(meta.at("model_config"));
  auto train = ModelTrainConfig::from_json(meta.at("train_config"));
  auto trainer = std::make_unique<ModelTrainer<S>>(cfg, train, Seeds{meta.at("seed").get<std::uint64_t>()});
  numerics::import_parameters(ckpt, trainer->model_->parameters());
  if (const auto* rec = ckpt.optimizer("model")) numerics::import_optimizer(*rec, *trainer->optimizer_);
  trainer->step_ = meta.at("step").get<std::int64_t>();
  if (metadata) *metadata = meta;
  return trainer;
}

template <typename S>
AgentTrainer<S>::AgentTrainer(const agent::AgentConfig& config, const world_model::ModelConfig& model_config,
                              Seeds seeds)
    : config_(config), model_config_(model_config), seeds_(seeds) {
  numerics::Rng init(seeds_.agent_init());
  agent_ = std::make_unique<agent::Agent<S>>(config_, model_config_, init);
}

template <typename S>
agent::AgentMetrics AgentTrainer<S>::update(world_model::WorldModel<S>& model, const dataset::TrajectoryDataset& data) {
  const std::uint64_t seed = seeds_.agent_step(step_);
  numerics::Rng data_rng(numerics::derive_seed(seed, "data"));
  numerics::SeededNoise<S> noise(numerics::derive_seed(seed, "noise"));
  auto m = agent_->train_step(model, data, data_rng, noise);
  ++step_;
  return m;
}

template <typename S>
void AgentTrainer<S>::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  numerics::Checkpoint ckpt;
  ckpt.scalar_bytes = scalar_bytes<S>();
  ckpt.metadata = extra;
  ckpt.metadata["kind"] = "agent";
  ckpt.metadata["agent_config"] = config_.to_json();
  ckpt.metadata["model_config"] = model_config_.to_json();
  ckpt.metadata["variant"] = agent::to_string(config_.variant);
  ckpt.metadata["epsilon"] = config_.epsilon;
  ckpt.metadata["step"] = step_;
  ckpt.metadata["seed"] = seeds_.root;
  numerics::export_parameters(agent_->policy_parameters(), ckpt);
  numerics::export_parameters(agent_->critic_parameters(), ckpt);
  numerics::export_parameters(agent_->target_parameters(), ckpt);
  ckpt.optimizers.push_back(numerics::export_optimizer(agent_->actor_optimizer()));
  ckpt.optimizers.push_back(numerics::export_optimizer(agent_->critic_optimizer()));
  numerics::write_checkpoint(ckpt, path);
}

template <typename S>
std::unique_ptr<AgentTrainer<S>> load_agent(const std::filesystem::path& path, nlohmann::json* metadata) {
  numerics::Checkpoint ckpt = read_typed(path, scalar_bytes<S>(), "agent");
  const auto& meta = ckpt.metadata;
  auto cfg = agent::AgentConfig::from_json(meta.at("agent_config"));
  auto mc = world_model::ModelConfig::from_json(meta.at("model_config"));
  auto trainer = std::make_unique<AgentTrainer<S>>(cfg, mc, Seeds{meta.at("seed").get<std::uint64_t>()});
  auto& a = *trainer->agent_;
  numerics::import_parameters(ckpt, a.policy_parameters());
  numerics::import_parameters(ckpt, a.critic_parameters());
  numerics::import_parameters(ckpt, a.target_parameters());
  if (const auto* rec = ckpt.optimizer("actor")) numerics::import_optimizer(*rec, a.actor_optimizer());
  if (const auto* rec = ckpt.optimizer("critic")) numerics::import_optimizer(*rec, a.critic_optimizer());
  trainer->step_ = meta.at("step").get<std::int64_t>();
  if (metadata) *metadata = meta;
  return trainer;
}

template <typename S>
double mean_posterior_value(const agent::Agent<S>& agent, const world_model::WorldModel<S>& model,
                            const dataset::TrajectoryDataset& data, Index windows, Index window_length,
                            std::uint64_t seed) {
  numerics::Rng rng(numerics::derive_seed(seed, "data"));
  numerics::SeededNoise<S> noise(numerics::derive_seed(seed, "noise"));
  auto batch = dataset::sample_windows<S>(data, windows, window_length, rng);
  numerics::Tape<S> tape;
  auto start = agent.start_states(tape, model, batch, noise);
  return static_cast<double>(agent.value(tape, start).value().template cast<double>().mean());
}

#define CLAP_INSTANTIATE(S)                                                                                      \
  template class ModelTrainer<S>;                                                                                \
  template class AgentTrainer<S>;                                                                                \
  template std::unique_ptr<ModelTrainer<S>> load_model<S>(const std::filesystem::path&, nlohmann::json*);        \
  template std::unique_ptr<AgentTrainer<S>> load_agent<S>(const std::filesystem::path&, nlohmann::json*);        \
  template double mean_posterior_value<S>(const agent::Agent<S>&, const world_model::WorldModel<S>&,             \
                                          const dataset::TrajectoryDataset&, Index, Index, std::uint64_t);

CLAP_INSTANTIATE(float)
CLAP_INSTANTIATE(double)
#undef CLAP_INSTANTIATE

}  // namespace clap::training
