#include "common/error.hpp"
#include "config/config.hpp"

#include <gtest/gtest.h>

using clap::ConfigError;
using clap::config::Config;

TEST(Config, DefaultsMatchTheReferenceHyperparameters) {
  Config c;
  auto m = c.model_config(8, 2);
  EXPECT_EQ(m.deter_size, 200);
  EXPECT_EQ(m.stoch_size, 30);
  EXPECT_EQ(m.latent_action_size, 12);
  EXPECT_EQ(m.action_encoder_units, 512);
  EXPECT_EQ(m.free_nats, 0.0);
  auto t = c.model_train_config();
  EXPECT_EQ(t.batch_size, 64);
  EXPECT_EQ(t.window, 50);
  EXPECT_DOUBLE_EQ(t.learning_rate, 3e-4);
  EXPECT_EQ(t.clip_norm, 100.0);
  auto a = c.agent_config();
  EXPECT_EQ(a.horizon, 5);
  EXPECT_DOUBLE_EQ(a.discount, 0.99);
  EXPECT_DOUBLE_EQ(a.lambda, 0.95);
  EXPECT_DOUBLE_EQ(a.learning_rate, 8e-5);
  EXPECT_DOUBLE_EQ(a.epsilon, 2.0);
  EXPECT_EQ(a.policy_units, 256);
  EXPECT_EQ(a.policy_layers, 3);
}

TEST(Config, UnknownKeyListsValidKeys) {
  Config c;
  try {
    c.set("model.width", "3");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("model.width"), std::string::npos);
    EXPECT_NE(msg.find("model.deter_size"), std::string::npos);
    EXPECT_NE(msg.find("agent.epsilon"), std::string::npos);
  }
}

TEST(Config, SectionsCommentsAndPrecedence) {
  Config c;
  c.load_text("# toy\n[model]\ndeter_size = 16  # narrow\n\n[agent]\nepsilon=3\n", "toy.cfg");
  EXPECT_EQ(c.get_int("model.deter_size"), 16);
  EXPECT_DOUBLE_EQ(c.get_double("agent.epsilon"), 3.0);
  c.set_assignment("agent.epsilon = 0.5");
  EXPECT_DOUBLE_EQ(c.get_double("agent.epsilon"), 0.5);
  EXPECT_EQ(c.get_int("model.stoch_size"), 30);
}

TEST(Config, FileErrorsCarryTheLine) {
  Config c;
  try {
    c.load_text("[model]\ndeter_size 16\n", "bad.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(c.load_text("[model\n", "x"), ConfigError);
  EXPECT_THROW(c.load_text("[model]\nbogus = 1\n", "x"), ConfigError);
  EXPECT_THROW(c.load_file("/nonexistent/clap.cfg"), ConfigError);
}

TEST(Config, TypedGettersValidate) {
  Config c;
  c.set("model.deter_size", "1.5");
  EXPECT_THROW(c.get_int("model.deter_size"), ConfigError);
  c.set("model.latent_actions", "maybe");
  EXPECT_THROW(c.get_bool("model.latent_actions"), ConfigError);
  c.set("model.latent_actions", "off");
  EXPECT_FALSE(c.get_bool("model.latent_actions"));
  c.set("agent.epsilon", "two");
  EXPECT_THROW(c.get_double("agent.epsilon"), ConfigError);
  c.set("analysis.epsilons", "0.5, 1,2 ");
  EXPECT_EQ(c.get_doubles("analysis.epsilons"), (std::vector<double>{0.5, 1.0, 2.0}));
}

TEST(Config, ClipNormCanBeDisabled) {
  Config c;
  c.set("model_train.clip_norm", "none");
  EXPECT_FALSE(c.model_train_config().clip_norm.has_value());
  c.set("agent.clip_norm", "off");
  EXPECT_FALSE(c.agent_config().clip_norm.has_value());
}

TEST(Config, InvalidValuesFailInBuilders) {
  Config c;
  c.set("agent.variant", "greedy");
  EXPECT_THROW(c.agent_config(), ConfigError);
  Config d;
  d.set("agent.lambda", "1.5");
  EXPECT_THROW(d.agent_config(), ConfigError);
}

TEST(Config, SnapshotReloadsToTheSameValues) {
  Config c;
  c.set("agent.epsilon", "1");
  c.set("run.seed", "42");
  c.set("analysis.epsilons", "0.5,1");
  Config d;
  d.load_text(c.snapshot(), "snapshot");
  for (const auto& k : Config::keys()) EXPECT_EQ(c.get(k), d.get(k)) << k;
  EXPECT_EQ(c.snapshot(), d.snapshot());
}
