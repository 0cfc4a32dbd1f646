#pragma once

#include "agent/agent.hpp"
#include "envsuite/envsuite.hpp"
#include "training/training.hpp"
#include "world_model/world_model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace clap::config {

// Flat `key = value` text. `[section]` lines prefix the keys that follow
// ("[model]" then "deter_size = 64" sets "model.deter_size"). '#' starts a
// comment. Every key has a default; unknown keys are rejected.
class Config {
 public:
  Config();

  static const std::vector<std::string>& keys();

  // Applies a file on top of the current values.
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  // "section.key=value".
  void set_assignment(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  // Every key with its final value, grouped by section.
  std::string snapshot() const;

  world_model::ModelConfig model_config(numerics::Index obs_dim, numerics::Index action_dim) const;
  training::ModelTrainConfig model_train_config() const;
  agent::AgentConfig agent_config() const;
  envsuite::PointMassConfig env_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace clap::config
