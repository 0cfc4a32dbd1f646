#include "common/error.hpp"
#include "envsuite/envsuite.hpp"
#include "support/toy_agent.hpp"
#include "support/toy_model.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace clap;
using namespace clap::envsuite;

TEST(PointMass, StepIsPureAndReplayable) {
  PointMass env;
  numerics::Rng rng(3);
  const PointState start = env.reset(rng);
  std::vector<std::array<double, 2>> actions;
  for (int t = 0; t < 40; ++t) actions.push_back({2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0});

  auto replay = [&] {
    std::vector<PointState> states{start};
    std::vector<double> rewards;
    for (const auto& a : actions) {
      auto r = env.step(states.back(), a);
      states.push_back(r.state);
      rewards.push_back(r.reward);
    }
    return std::make_pair(states, rewards);
  };
  auto a = replay();
  auto b = replay();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(PointMass, WallsClipPositionAndStopVelocity) {
  PointMass env;
  PointState s{0.99, 0.0, 0.5, 0.0, 0.0};
  auto r = env.step(s, {1.0, 0.0});
  EXPECT_DOUBLE_EQ(r.state[0], 1.0);
  EXPECT_DOUBLE_EQ(r.state[2], 0.0);
  EXPECT_DOUBLE_EQ(r.state[4], 1.0);
}

TEST(PointMass, RewardIsOffsetMinusGoalDistance) {
  PointMass env;
  PointState at_goal{0.5, 0.5, 0.0, 0.0, 0.0};
  auto r = env.step(at_goal, {0.0, 0.0});
  EXPECT_DOUBLE_EQ(r.reward, 1.0);
  PointState away{-0.5, 0.5, 0.0, 0.0, 0.0};
  r = env.step(away, {0.0, 0.0});
  EXPECT_NEAR(r.reward, 0.0, 1e-12);
}

TEST(PointMass, TerminalOnlyAtTheTimeLimit) {
  PointMassConfig c;
  c.horizon = 5;
  PointMass env(c);
  PointState s{0.0, 0.0, 0.0, 0.0, 0.0};
  for (int t = 0; t < 4; ++t) {
    auto r = env.step(s, {0.1, 0.1});
    EXPECT_EQ(r.terminal, t == 3) << t;
    s = r.state;
  }
}

TEST(PointMass, ObservationLayout) {
  PointMassConfig c;
  c.obs_noise = 0.0;
  PointMass env(c);
  numerics::Rng rng(1);
  PointState s{0.25, -0.5, 0.1, 0.2, 30.0};
  auto o = env.observe(s, rng);
  ASSERT_EQ(o.size(), 8u);
  EXPECT_FLOAT_EQ(o[0], 0.25f);
  EXPECT_FLOAT_EQ(o[1], -0.5f);
  EXPECT_FLOAT_EQ(o[2], 0.1f);
  EXPECT_FLOAT_EQ(o[3], 0.2f);
  EXPECT_FLOAT_EQ(o[4], 0.3f);
}

TEST(PointMass, RejectsTooFewObservationEntries) {
  PointMassConfig c;
  c.obs_dim = 4;
  EXPECT_THROW(PointMass{c}, ConfigError);
}

TEST(PointMass, ConfigRoundTrip) {
  PointMassConfig c;
  c.horizon = 37;
  c.goal = {0.1, -0.2};
  auto back = PointMassConfig::from_json(c.to_json());
  EXPECT_EQ(back.horizon, 37);
  EXPECT_EQ(back.goal, c.goal);
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(PointMassConfig::from_json(nlohmann::json::object()), DataError);
}

TEST(Behavior, ActionsStayInTheBox) {
  PointMass env;
  numerics::Rng rng(5);
  for (auto kind : {BehaviorKind::Expert, BehaviorKind::Medium, BehaviorKind::Replay, BehaviorKind::Random}) {
    BehaviorPolicy p(kind, env.config());
    p.begin_episode(rng);
    for (int i = 0; i < 500; ++i) {
      PointState s{2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 3 * rng.normal(), 3 * rng.normal(), 0.0};
      auto a = p.act(s, rng);
      for (double x : a) {
        EXPECT_LE(x, 1.0);
        EXPECT_GE(x, -1.0);
      }
    }
  }
}

TEST(Behavior, NamesRoundTrip) {
  for (auto kind : {BehaviorKind::Expert, BehaviorKind::Medium, BehaviorKind::Replay, BehaviorKind::Random}) {
    EXPECT_EQ(behavior_kind_from_string(to_string(kind)), kind);
  }
  EXPECT_THROW(behavior_kind_from_string("optimal"), ConfigError);
}

TEST(Generate, SameSeedSameDataset) {
  PointMass env;
  auto a = generate_dataset(env, BehaviorKind::Medium, 1, 11);
  auto b = generate_dataset(env, BehaviorKind::Medium, 1, 11);
  EXPECT_TRUE(a == b);
  auto c = generate_dataset(env, BehaviorKind::Medium, 1, 12);
  EXPECT_FALSE(a == c);
}

TEST(Generate, MetadataAndShape) {
  PointMass env;
  auto d = generate_dataset(env, BehaviorKind::Expert, 3, 2);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.total_steps(), 300);
  EXPECT_EQ(d.metadata().at("policy"), "expert");
  EXPECT_DOUBLE_EQ(d.metadata().at("mean_return").get<double>(), d.mean_return());
  for (const auto& ep : d.episodes()) {
    EXPECT_EQ(ep.rewards.front(), 0.0f);
    EXPECT_EQ(ep.terminals.back(), 1);
    EXPECT_LE(ep.actions.cwiseAbs().maxCoeff(), 1.0f);
  }
  EXPECT_THROW(generate_dataset(env, BehaviorKind::Expert, 0, 2), ConfigError);
}

TEST(Generate, TiersAreOrdered) {
  PointMass env;
  auto tiers = generate_tiers(env, 30, 4);
  EXPECT_GT(tiers.expert.mean_return(), tiers.medium.mean_return());
  EXPECT_GT(tiers.medium.mean_return(), tiers.replay.mean_return());
}

TEST(Generate, DatasetReturnMatchesBehaviorRollouts) {
  PointMass env;
  auto d = generate_dataset(env, BehaviorKind::Replay, 4, 9);
  auto s = run_behavior(env, BehaviorKind::Replay, 4, 9);
  EXPECT_NEAR(d.mean_return(), s.mean, 1e-3);
}

TEST(Normalized, ReferencePoints) {
  EXPECT_DOUBLE_EQ(normalized_return(10.0, -2.0, 10.0), 100.0);
  EXPECT_DOUBLE_EQ(normalized_return(-2.0, -2.0, 10.0), 0.0);
  EXPECT_DOUBLE_EQ(normalized_return(4.0, -2.0, 10.0), 50.0);
  EXPECT_THROW(normalized_return(1.0, 3.0, 3.0), ConfigError);
  EXPECT_THROW(normalized_return(1.0, 5.0, 3.0), ConfigError);
}

TEST(Normalized, RandomBelowExpert) {
  PointMass env;
  auto refs = reference_returns(env, 20, 1);
  EXPECT_LT(refs.random, refs.expert);
  auto back = ReferenceReturns::from_json(refs.to_json());
  EXPECT_EQ(back.random, refs.random);
  EXPECT_EQ(back.expert, refs.expert);
}

TEST(Evaluate, UntrainedAgentIsDeterministicAndBelowExpert) {
  PointMassConfig c;
  c.horizon = 30;
  PointMass env(c);
  auto mc = clap::testing::tiny_model_config(env.obs_dim(), env.action_dim());
  numerics::Rng rng(2);
  world_model::WorldModel<double> model(mc, rng);
  agent::Agent<double> agent(clap::testing::tiny_agent_config(), mc, rng);
  auto data = generate_dataset(env, BehaviorKind::Expert, 5, 3);
  auto a = evaluate(env, model, agent, data.normalization(), 10, 4);
  auto b = evaluate(env, model, agent, data.normalization(), 10, 4);
  ASSERT_EQ(a.returns.size(), 10u);
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_LT(a.mean, run_behavior(env, BehaviorKind::Expert, 10, 4).mean);
}

TEST(Evaluate, BatchSizeDoesNotChangeEpisodes) {
  PointMassConfig c;
  c.horizon = 20;
  PointMass env(c);
  auto mc = clap::testing::tiny_model_config(env.obs_dim(), env.action_dim());
  numerics::Rng rng(8);
  world_model::WorldModel<double> model(mc, rng);
  agent::Agent<double> agent(clap::testing::tiny_agent_config(), mc, rng);
  dataset::Normalization identity;
  auto three = evaluate(env, model, agent, identity, 3, 6);
  auto one = evaluate(env, model, agent, identity, 1, 6);
  EXPECT_NEAR(one.returns[0], three.returns[0], 1e-9);
}
