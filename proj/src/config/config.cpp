#include "config/config.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace clap::config {

namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Defaults follow the low-dimensional-feature hyperparameters.
constexpr KeyDefault kDefaults[] = {
    {"run.seed", "0"},
    {"env.obs_dim", "8"},
    {"env.horizon", "100"},
    {"env.obs_noise", "0.01"},
    {"env.projection_seed", "20240917"},
    {"data.policy", "expert"},
    {"data.episodes", "100"},
    {"model.deter_size", "200"},
    {"model.stoch_size", "30"},
    {"model.embed_size", "30"},
    {"model.latent_action_size", "12"},
    {"model.hidden_units", "200"},
    {"model.encoder_units", "128"},
    {"model.encoder_layers", "2"},
    {"model.decoder_units", "128"},
    {"model.decoder_layers", "2"},
    {"model.action_encoder_units", "512"},
    {"model.action_encoder_layers", "2"},
    {"model.action_decoder_units", "512"},
    {"model.action_decoder_layers", "2"},
    {"model.action_prior_units", "256"},
    {"model.action_prior_layers", "2"},
    {"model.head_units", "200"},
    {"model.head_layers", "2"},
    {"model.free_nats", "0"},
    {"model.latent_actions", "true"},
    {"model_train.steps", "5000"},
    {"model_train.batch_size", "64"},
    {"model_train.window", "50"},
    {"model_train.learning_rate", "3e-4"},
    {"model_train.clip_norm", "100"},
    {"agent.variant", "constrained"},
    {"agent.epsilon", "2.0"},
    {"agent.policy_units", "256"},
    {"agent.policy_layers", "3"},
    {"agent.value_units", "256"},
    {"agent.value_layers", "3"},
    {"agent.learning_rate", "8e-5"},
    {"agent.clip_norm", "100"},
    {"agent.horizon", "5"},
    {"agent.discount", "0.99"},
    {"agent.lambda", "0.95"},
    {"agent.entropy_scale", "0.01"},
    {"agent.policy_init_scale", "0.1"},
    {"agent.ema_critic", "false"},
    {"agent.ema_decay", "0.98"},
    {"agent.batch_size", "16"},
    {"agent.window", "8"},
    {"agent_train.steps", "20000"},
    {"agent_train.eval_every", "1000"},
    {"agent_train.eval_episodes", "20"},
    {"agent_train.value_windows", "16"},
    {"analysis.epsilons", "0.5,1,2,3,10"},
    {"analysis.knn_k", "20"},
    {"analysis.query_episodes", "5"},
};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string valid_keys_message() {
  std::string out = "valid keys:";
  for (const auto& k : Config::keys()) out += "\n  " + k;
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
}

std::optional<double> optional_double(const std::string& key, const std::string& v) {
  if (v == "none" || v == "off") return std::nullopt;
  return parse_double(key, v);
}

}  // namespace

Config::Config() {
  for (const auto& d : kDefaults) values_[d.key] = d.value;
}

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& d : kDefaults) out.emplace_back(d.key);
    return out;
  }();
  return k;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path.string());
}

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(number) + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      set(key, trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void Config::set_assignment(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'; " + valid_keys_message());
  it->second = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'; " + valid_keys_message());
  return it->second;
}

double Config::get_double(const std::string& key) const { return parse_double(key, get(key)); }

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool Config::get_bool(const std::string& key) const {
  std::string v = get(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + get(key) + "'");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw ConfigError("key '" + key + "' expects a comma-separated list of numbers");
  return out;
}

std::string Config::snapshot() const {
  std::string out, section;
  for (const auto& key : keys()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + values_.at(key) + "\n";
  }
  return out;
}

world_model::ModelConfig Config::model_config(numerics::Index obs_dim, numerics::Index action_dim) const {
  world_model::ModelConfig c;
  c.obs_dim = obs_dim;
  c.action_dim = action_dim;
  c.deter_size = get_int("model.deter_size");
  c.stoch_size = get_int("model.stoch_size");
  c.embed_size = get_int("model.embed_size");
  c.latent_action_size = get_int("model.latent_action_size");
  c.hidden_units = get_int("model.hidden_units");
  c.encoder_units = get_int("model.encoder_units");
  c.encoder_layers = get_int("model.encoder_layers");
  c.decoder_units = get_int("model.decoder_units");
  c.decoder_layers = get_int("model.decoder_layers");
  c.action_encoder_units = get_int("model.action_encoder_units");
  c.action_encoder_layers = get_int("model.action_encoder_layers");
  c.action_decoder_units = get_int("model.action_decoder_units");
  c.action_decoder_layers = get_int("model.action_decoder_layers");
  c.action_prior_units = get_int("model.action_prior_units");
  c.action_prior_layers = get_int("model.action_prior_layers");
  c.head_units = get_int("model.head_units");
  c.head_layers = get_int("model.head_layers");
  c.free_nats = get_double("model.free_nats");
  c.latent_actions = get_bool("model.latent_actions");
  return c;
}

training::ModelTrainConfig Config::model_train_config() const {
  training::ModelTrainConfig c;
  c.steps = get_int("model_train.steps");
  c.batch_size = get_int("model_train.batch_size");
  c.window = get_int("model_train.window");
  c.learning_rate = get_double("model_train.learning_rate");
  c.clip_norm = optional_double("model_train.clip_norm", get("model_train.clip_norm"));
  c.validate();
  return c;
}

agent::AgentConfig Config::agent_config() const {
  agent::AgentConfig c;
  c.variant = agent::policy_variant_from_string(get("agent.variant"));
  c.epsilon = get_double("agent.epsilon");
  c.policy_units = get_int("agent.policy_units");
  c.policy_layers = get_int("agent.policy_layers");
  c.value_units = get_int("agent.value_units");
  c.value_layers = get_int("agent.value_layers");
  c.learning_rate = get_double("agent.learning_rate");
  c.clip_norm = optional_double("agent.clip_norm", get("agent.clip_norm"));
  c.horizon = get_int("agent.horizon");
  c.discount = get_double("agent.discount");
  c.lambda = get_double("agent.lambda");
  c.entropy_scale = get_double("agent.entropy_scale");
  c.policy_init_scale = get_double("agent.policy_init_scale");
  c.ema_critic = get_bool("agent.ema_critic");
  c.ema_decay = get_double("agent.ema_decay");
  c.batch_size = get_int("agent.batch_size");
  c.window = get_int("agent.window");
  c.validate();
  return c;
}

envsuite::PointMassConfig Config::env_config() const {
  envsuite::PointMassConfig c;
  c.obs_dim = get_int("env.obs_dim");
  c.horizon = get_int("env.horizon");
  c.obs_noise = get_double("env.obs_noise");
  c.projection_seed = static_cast<std::uint64_t>(get_int("env.projection_seed"));
  return c;
}

}  // namespace clap::config
