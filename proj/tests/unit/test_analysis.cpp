#include "analysis/analysis.hpp"
#include "common/error.hpp"
#include "support/toy_agent.hpp"
#include "support/toy_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace clap;
using namespace clap::analysis;
namespace fs = std::filesystem;

namespace {

dataset::Episode rewards_only(const std::vector<float>& rewards) {
  dataset::Episode e;
  const auto t = static_cast<Index>(rewards.size());
  e.observations = numerics::Matrix<float>::Zero(t, 1);
  e.actions = numerics::Matrix<float>::Zero(t, 1);
  e.rewards = rewards;
  e.terminals.assign(rewards.size(), 0);
  return e;
}

// Returns-to-go by explicit powers, one start at a time.
double max_value_by_powers(const std::vector<float>& r, double discount) {
  double best = -1e300;
  for (std::size_t t = 0; t < r.size(); ++t) {
    double g = 0.0;
    for (std::size_t k = t; k < r.size(); ++k) g += std::pow(discount, static_cast<double>(k - t)) * r[k];
    best = std::max(best, g);
  }
  return best;
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "clap_analysis_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(ReferenceValues, TwoOnesUndiscounted) {
  dataset::TrajectoryDataset d(1, 1);
  d.add_episode(rewards_only({1.0f, 1.0f}));
  auto r = dataset_reference_values(d, 1.0);
  EXPECT_DOUBLE_EQ(r.average_return, 2.0);
  EXPECT_DOUBLE_EQ(r.average_max_value, 2.0);
}

TEST(ReferenceValues, FinalRewardOnly) {
  std::vector<float> r(10, 0.0f);
  r.back() = 1.0f;
  dataset::TrajectoryDataset d(1, 1);
  d.add_episode(rewards_only(r));
  EXPECT_DOUBLE_EQ(dataset_reference_values(d, 0.99).average_max_value, 1.0);
}

TEST(ReferenceValues, UndiscountedMaxIsTheLargestSuffixSum) {
  numerics::Rng rng(4);
  dataset::TrajectoryDataset d(1, 1);
  double sum_returns = 0.0, sum_best = 0.0;
  for (int e = 0; e < 5; ++e) {
    std::vector<float> r;
    for (int t = 0; t < 12; ++t) r.push_back(static_cast<float>(rng.below(7)) - 3.0f);
    double total = 0.0, suffix = 0.0, best = -1e300;
    for (float x : r) total += x;
    for (auto it = r.rbegin(); it != r.rend(); ++it) best = std::max(best, suffix += *it);
    sum_returns += total;
    sum_best += best;
    d.add_episode(rewards_only(r));
  }
  auto ref = dataset_reference_values(d, 1.0);
  EXPECT_EQ(ref.average_return, sum_returns / 5.0);
  EXPECT_EQ(ref.average_max_value, sum_best / 5.0);
}

TEST(ReferenceValues, ExpertDatasetMatchesPowerSums) {
  envsuite::PointMass env;
  auto d = envsuite::generate_dataset(env, envsuite::BehaviorKind::Expert, 6, 1);
  double best = 0.0;
  for (const auto& ep : d.episodes()) best += max_value_by_powers(ep.rewards, 0.99);
  EXPECT_NEAR(dataset_reference_values(d, 0.99).average_max_value, best / 6.0, 1e-9);
}

TEST(ReferenceValues, EmptyDatasetFails) {
  dataset::TrajectoryDataset d(1, 1);
  EXPECT_THROW(dataset_reference_values(d, 0.99), DataError);
}

TEST(Neighbors, ExactQueryFindsItself) {
  numerics::Rng rng(2);
  auto d = clap::testing::random_dataset(3, 6, 4, 2, rng);
  d.compute_normalization();
  NeighborIndex index(d);
  for (Index i = 0; i < index.size(); ++i) {
    std::vector<double> dist;
    auto nn = index.nearest(index.observation(i), 1, &dist);
    ASSERT_EQ(nn.size(), 1u);
    EXPECT_EQ(nn[0], i);
    EXPECT_EQ(dist[0], 0.0);
  }
}

TEST(Neighbors, DuplicatedDatasetHasZeroDistances) {
  numerics::Rng rng(3);
  auto base = clap::testing::random_dataset(2, 5, 3, 2, rng);
  dataset::TrajectoryDataset d(3, 2);
  for (const auto& ep : base.episodes()) {
    d.add_episode(ep);
    d.add_episode(ep);
  }
  d.compute_normalization();
  NeighborIndex index(d);
  for (Index i = 0; i < index.size(); ++i) {
    std::vector<double> dist;
    index.nearest(index.observation(i), 2, &dist);
    EXPECT_EQ(dist[0], 0.0);
    EXPECT_EQ(dist[1], 0.0);
  }
}

TEST(Neighbors, InvariantToEpisodeOrder) {
  numerics::Rng rng(5);
  auto a = clap::testing::random_dataset(4, 7, 3, 2, rng);
  a.compute_normalization();
  dataset::TrajectoryDataset b(3, 2);
  for (auto it = a.episodes().rbegin(); it != a.episodes().rend(); ++it) b.add_episode(*it);
  b.set_normalization(a.normalization());
  NeighborIndex ia(a), ib(b);
  for (Index i = 0; i < ia.size(); i += 3) {
    auto na = ia.nearest(ia.observation(i), 5);
    auto nb = ib.nearest(ia.observation(i), 5);
    for (std::size_t j = 0; j < na.size(); ++j) {
      EXPECT_EQ(ia.observation(na[j]), ib.observation(nb[j]));
      EXPECT_EQ(ia.action(na[j]), ib.action(nb[j]));
    }
  }
}

TEST(Neighbors, TooSmallDatasetFails) {
  numerics::Rng rng(5);
  auto d = clap::testing::random_dataset(1, 4, 3, 2, rng);
  NeighborIndex index(d);
  EXPECT_THROW(index.nearest(index.observation(0), 5), DataError);
  EXPECT_THROW(index.nearest(index.observation(0), 0), ConfigError);
}

TEST(ActionStudy, RowsAndRanges) {
  numerics::Rng rng(6);
  auto d = clap::testing::random_dataset(3, 12, 3, 2, rng);
  d.compute_normalization();
  world_model::WorldModel<double> model(clap::testing::tiny_model_config(3, 2), rng);
  auto study = action_distribution_study(model, d, 4, 2, 9);
  ASSERT_EQ(study.rows.size(), 24u);
  EXPECT_EQ(study.rows[11].block, 1);
  EXPECT_GE(study.within_range, 0.0);
  EXPECT_LE(study.within_range, 1.0);
  auto again = action_distribution_study(model, d, 4, 2, 9);
  EXPECT_EQ(study.within_range, again.within_range);
  EXPECT_EQ(study.mean_abs_mean_difference, again.mean_abs_mean_difference);
  EXPECT_THROW(action_distribution_study(model, d, 100, 1, 9), DataError);

  world_model::WorldModel<double> plain(clap::testing::tiny_model_config(3, 2, false), rng);
  EXPECT_THROW(action_distribution_study(plain, d, 4, 1, 9), ConfigError);

  const auto dir = scratch_dir("study");
  write_action_study(study, dir / "actions.csv");
  std::ifstream in(dir / "actions.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "episode,step,block,dim,data_mean,data_std,model_mean,model_std,within_range");
}

TEST(MergeCsv, FourArmsOneHeader) {
  const auto root = scratch_dir("merge");
  for (int i = 0; i < 4; ++i) {
    fs::create_directories(root / ("eps_" + std::to_string(i)));
    training::CsvWriter w(root / ("eps_" + std::to_string(i)) / "curve.csv", kCurveColumns);
    w.row_labeled("epsilon=" + std::to_string(i), {0, 1, 2, 3});
    w.row_labeled("epsilon=" + std::to_string(i), {10, 1, 2, 3});
  }
  const auto out = root / "merged.csv";
  EXPECT_EQ(merge_csv_tree(root, "curve.csv", out), 4u);
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "arm,step,return,normalized_return,mean_value");
  std::set<std::string> arms;
  int rows = 0;
  while (std::getline(in, line)) {
    arms.insert(line.substr(0, line.find(',')));
    ++rows;
  }
  EXPECT_EQ(rows, 8);
  EXPECT_EQ(arms.size(), 4u);
}

TEST(MergeCsv, MismatchedHeadersAndEmptyTreesFail) {
  const auto root = scratch_dir("mismatch");
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  std::ofstream(root / "a" / "x.csv") << "p,q\n1,2\n";
  std::ofstream(root / "b" / "x.csv") << "p,r\n1,2\n";
  EXPECT_THROW(merge_csv_tree(root, "x.csv", root / "out.csv"), DataError);
  EXPECT_THROW(merge_csv_tree(root, "none.csv", root / "out.csv"), DataError);
}

namespace {

struct TinySetup {
  envsuite::PointMass env;
  dataset::TrajectoryDataset data;
  world_model::ModelConfig mc;
  std::unique_ptr<world_model::WorldModel<double>> model;
  envsuite::ReferenceReturns refs;
  TrackOptions options;

  TinySetup() : env(short_env()) {
    data = envsuite::generate_dataset(env, envsuite::BehaviorKind::Expert, 3, 1);
    mc = clap::testing::tiny_model_config(env.obs_dim(), env.action_dim());
    numerics::Rng rng(1);
    model = std::make_unique<world_model::WorldModel<double>>(mc, rng);
    refs = envsuite::reference_returns(env, 10, 1);
    options.steps = 4;
    options.eval_every = 2;
    options.eval_episodes = 2;
    options.value_windows = 2;
  }
  static envsuite::PointMassConfig short_env() {
    envsuite::PointMassConfig c;
    c.horizon = 12;
    return c;
  }
};

}  // namespace

TEST(TrainAndTrack, CurveCadenceAndUntrainedValue) {
  TinySetup s;
  training::AgentTrainer<double> trainer(clap::testing::tiny_agent_config(), s.mc, training::Seeds{3});
  auto curve = train_and_track(trainer, *s.model, s.data, s.env, s.refs, s.options, "x");
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0].step, 0);
  EXPECT_EQ(curve[1].step, 2);
  EXPECT_EQ(curve[2].step, 4);
  EXPECT_EQ(curve[0].mean_value, 0.0);
}

TEST(EpsilonSweep, SingleArmEqualsPlainRunAndArmsAlign) {
  TinySetup s;
  auto base = clap::testing::tiny_agent_config();
  base.epsilon = 1.0;
  training::AgentTrainer<double> plain(base, s.mc, training::Seeds{3});
  auto curve = train_and_track(plain, *s.model, s.data, s.env, s.refs, s.options, "x");
  auto one = epsilon_sweep(*s.model, s.data, base, {1.0}, s.env, s.refs, s.options, 3);
  ASSERT_EQ(one.size(), 1u);
  ASSERT_EQ(one[0].curve.size(), curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    EXPECT_EQ(one[0].curve[i].raw_return, curve[i].raw_return);
    EXPECT_EQ(one[0].curve[i].mean_value, curve[i].mean_value);
  }

  const auto dir = scratch_dir("sweep");
  auto arms = epsilon_sweep(*s.model, s.data, base, {0.5, 1.0, 2.0, 3.0}, s.env, s.refs, s.options, 3, dir);
  ASSERT_EQ(arms.size(), 4u);
  for (const auto& a : arms) EXPECT_EQ(a.curve.size(), arms.front().curve.size());
  EXPECT_TRUE(fs::exists(dir / "eps_0.5" / "curve.csv"));
  EXPECT_TRUE(fs::exists(dir / "eps_3" / "agent_metrics.csv"));
  EXPECT_EQ(merge_csv_tree(dir, "curve.csv", dir / "report.csv"), 4u);
}
