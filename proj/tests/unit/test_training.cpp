#include "common/error.hpp"
#include "support/toy_agent.hpp"
#include "support/toy_model.hpp"
#include "training/training.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace clap;
using namespace clap::training;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "clap_training_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

dataset::TrajectoryDataset toy_data() {
  numerics::Rng rng(21);
  auto d = clap::testing::random_dataset(4, 9, 3, 2, rng);
  d.compute_normalization();
  return d;
}

ModelTrainConfig toy_train(Index steps) {
  ModelTrainConfig c;
  c.steps = steps;
  c.batch_size = 3;
  c.window = 4;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

TEST(Seeds, StreamsAreDistinctAndStable) {
  Seeds a{5}, b{5}, c{6};
  EXPECT_EQ(a.model_init(), b.model_init());
  EXPECT_NE(a.model_init(), c.model_init());
  EXPECT_NE(a.model_init(), a.agent_init());
  EXPECT_NE(a.model_step(1), a.model_step(2));
  EXPECT_NE(a.model_step(1), a.agent_step(1));
}

TEST(ModelTrainConfig, ValidatesAndRoundTrips) {
  auto c = toy_train(7);
  c.clip_norm.reset();
  auto back = ModelTrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.steps, 7);
  EXPECT_FALSE(back.clip_norm.has_value());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(CsvWriter, HeaderAndWidthCheck) {
  const auto path = scratch("w.csv");
  {
    CsvWriter w(path, {"a", "b"});
    w.row({1.0, 0.1});
    w.row_labeled("x", {2.0});
    EXPECT_THROW(w.row({1.0}), ConfigError);
  }
  EXPECT_EQ(slurp(path), "a,b\n1,0.10000000000000001\nx,2\n");
}

TEST(ModelTrainer, TrainRunsToTheConfiguredStep) {
  auto data = toy_data();
  ModelTrainer<double> t(clap::testing::tiny_model_config(3, 2), toy_train(3), Seeds{1});
  const auto csv = scratch("model_metrics.csv");
  {
    CsvWriter w(csv, kModelMetricColumns);
    t.train(data, &w);
  }
  EXPECT_EQ(t.step(), 3);
  std::ifstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 4);
}

TEST(ModelTrainer, SameSeedSameCheckpointBytes) {
  auto data = toy_data();
  const auto a = scratch("a.ckpt"), b = scratch("b.ckpt");
  for (const auto& p : {a, b}) {
    ModelTrainer<double> t(clap::testing::tiny_model_config(3, 2), toy_train(4), Seeds{9});
    t.train(data);
    t.save(p, data.normalization());
  }
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(ModelTrainer, ResumeMatchesUninterruptedRun) {
  auto data = toy_data();
  const auto mc = clap::testing::tiny_model_config(3, 2);
  ModelTrainer<double> straight(mc, toy_train(6), Seeds{2});
  straight.train(data);

  ModelTrainer<double> first(mc, toy_train(6), Seeds{2});
  for (int i = 0; i < 3; ++i) first.update(data);
  const auto mid = scratch("mid.ckpt");
  first.save(mid, data.normalization());
  auto resumed = load_model<double>(mid);
  EXPECT_EQ(resumed->step(), 3);
  resumed->train(data);

  const auto x = scratch("straight.ckpt"), y = scratch("resumed.ckpt");
  straight.save(x, data.normalization());
  resumed->save(y, data.normalization());
  EXPECT_EQ(slurp(x), slurp(y));
}

TEST(ModelTrainer, CheckpointCarriesMetadata) {
  auto data = toy_data();
  ModelTrainer<double> t(clap::testing::tiny_model_config(3, 2), toy_train(1), Seeds{4});
  t.train(data);
  const auto p = scratch("meta.ckpt");
  t.save(p, data.normalization(), {{"note", "x"}});
  nlohmann::json meta;
  auto back = load_model<double>(p, &meta);
  EXPECT_EQ(meta.at("kind"), "model");
  EXPECT_EQ(meta.at("note"), "x");
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 4u);
  EXPECT_TRUE(normalization_from_metadata(meta) == data.normalization());
  EXPECT_EQ(back->model().config().to_json(), t.model().config().to_json());
}

TEST(ModelTrainer, LoadErrors) {
  EXPECT_THROW(load_model<double>(scratch("missing.ckpt")), DataError);
  auto data = toy_data();
  ModelTrainer<double> t(clap::testing::tiny_model_config(3, 2), toy_train(1), Seeds{4});
  const auto p = scratch("double.ckpt");
  t.save(p, data.normalization());
  EXPECT_THROW(load_model<float>(p), DataError);
  EXPECT_THROW(load_agent<double>(p), DataError);
  try {
    load_model<double>(scratch("missing.ckpt"));
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.ckpt"), std::string::npos);
  }
}

TEST(AgentTrainer, ResumeMatchesUninterruptedRun) {
  auto data = toy_data();
  const auto mc = clap::testing::tiny_model_config(3, 2);
  numerics::Rng rng(1);
  world_model::WorldModel<double> model(mc, rng);
  auto ac = clap::testing::tiny_agent_config();
  ac.ema_critic = true;

  AgentTrainer<double> straight(ac, mc, Seeds{3});
  for (int i = 0; i < 4; ++i) straight.update(model, data);

  AgentTrainer<double> first(ac, mc, Seeds{3});
  for (int i = 0; i < 2; ++i) first.update(model, data);
  const auto mid = scratch("agent_mid.ckpt");
  first.save(mid);
  nlohmann::json meta;
  auto resumed = load_agent<double>(mid, &meta);
  EXPECT_EQ(meta.at("kind"), "agent");
  EXPECT_EQ(meta.at("variant"), "constrained");
  EXPECT_EQ(meta.at("epsilon").get<double>(), ac.epsilon);
  for (int i = 0; i < 2; ++i) resumed->update(model, data);

  const auto x = scratch("agent_straight.ckpt"), y = scratch("agent_resumed.ckpt");
  straight.save(x);
  resumed->save(y);
  EXPECT_EQ(slurp(x), slurp(y));
}

TEST(MeanPosteriorValue, ZeroForUntrainedCritic) {
  auto data = toy_data();
  const auto mc = clap::testing::tiny_model_config(3, 2);
  numerics::Rng rng(1);
  world_model::WorldModel<double> model(mc, rng);
  agent::Agent<double> agent(clap::testing::tiny_agent_config(), mc, rng);
  EXPECT_EQ(mean_posterior_value(agent, model, data, 4, 3, 7), 0.0);
}
