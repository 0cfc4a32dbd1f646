#pragma once

#include "agent/agent.hpp"
#include "dataset/dataset.hpp"
#include "numerics/optimizer.hpp"
#include "world_model/world_model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace clap::training {

using numerics::Index;

struct ModelTrainConfig {
  Index steps = 5000;
  Index batch_size = 64;
  Index window = 50;
  double learning_rate = 3e-4;
  std::optional<double> clip_norm = 100.0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelTrainConfig from_json(const nlohmann::json& j);
};

// Independent streams per subsystem, derived from one root seed. Per-step
// streams are keyed by the step index, so a resumed run draws exactly what
// an uninterrupted one would.
struct Seeds {
  std::uint64_t root = 0;

  std::uint64_t model_init() const;
  std::uint64_t agent_init() const;
  std::uint64_t env() const;
  std::uint64_t model_step(std::int64_t step) const;
  std::uint64_t agent_step(std::int64_t step) const;
};

// Append-only CSV with a fixed header; numbers are written with full
// precision so identical runs give identical files.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);
  void row(const std::vector<double>& values);
  // Row whose first column is a text label.
  void row_labeled(const std::string& label, const std::vector<double>& values);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t width_;
};

extern const std::vector<std::string> kModelMetricColumns;
extern const std::vector<std::string> kAgentMetricColumns;

template <typename S>
class ModelTrainer {
 public:
  ModelTrainer(const world_model::ModelConfig& model_config, const ModelTrainConfig& train, Seeds seeds);

  world_model::WorldModel<S>& model() { return *model_; }
  const world_model::WorldModel<S>& model() const { return *model_; }
  numerics::Adam<S>& optimizer() { return *optimizer_; }
  const ModelTrainConfig& train_config() const { return train_; }
  const Seeds& seeds() const { return seeds_; }
  std::int64_t step() const { return step_; }

  world_model::ModelMetrics update(const dataset::TrajectoryDataset& data);
  // Runs until `train_config().steps` updates have been applied.
  world_model::ModelMetrics train(const dataset::TrajectoryDataset& data, CsvWriter* metrics = nullptr);

  // Checkpoint with parameters, optimizer state and metadata (configs,
  // normalization, step, seeds, plus `extra`).
  void save(const std::filesystem::path& path, const dataset::Normalization& normalization,
            const nlohmann::json& extra = nlohmann::json::object()) const;

 private:
  world_model::ModelConfig config_;
  ModelTrainConfig train_;
  Seeds seeds_;
  std::unique_ptr<world_model::WorldModel<S>> model_;
  std::unique_ptr<numerics::Adam<S>> optimizer_;
  std::int64_t step_ = 0;

  template <typename T>
  friend std::unique_ptr<ModelTrainer<T>> load_model(const std::filesystem::path& path, nlohmann::json* metadata);
};

// Throws DataError naming the path when it is missing or malformed.
template <typename S>
std::unique_ptr<ModelTrainer<S>> load_model(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

dataset::Normalization normalization_from_metadata(const nlohmann::json& metadata);

template <typename S>
class AgentTrainer {
 public:
  AgentTrainer(const agent::AgentConfig& config, const world_model::ModelConfig& model_config, Seeds seeds);

  agent::Agent<S>& agent() { return *agent_; }
  const agent::Agent<S>& agent() const { return *agent_; }
  std::int64_t step() const { return step_; }
  const Seeds& seeds() const { return seeds_; }

  agent::AgentMetrics update(world_model::WorldModel<S>& model, const dataset::TrajectoryDataset& data);

  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;

 private:
  agent::AgentConfig config_;
  world_model::ModelConfig model_config_;
  Seeds seeds_;
  std::unique_ptr<agent::Agent<S>> agent_;
  std::int64_t step_ = 0;

  template <typename T>
  friend std::unique_ptr<AgentTrainer<T>> load_agent(const std::filesystem::path& path, nlohmann::json* metadata);
};

template <typename S>
std::unique_ptr<AgentTrainer<S>> load_agent(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

// Mean min-critic value over posterior beliefs of every valid step of
// `windows` sampled windows.
template <typename S>
double mean_posterior_value(const agent::Agent<S>& agent, const world_model::WorldModel<S>& model,
                            const dataset::TrajectoryDataset& data, Index windows, Index window_length,
                            std::uint64_t seed);

}  // namespace clap::training
