#include "common/error.hpp"
#include "dataset/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace clap::dataset;
namespace fs = std::filesystem;

namespace {

Episode make_episode(Index t, Index od, Index ad, float base) {
  Episode e;
  e.observations.resize(t, od);
  e.actions.resize(t, ad);
  for (Index k = 0; k < t; ++k) {
    for (Index j = 0; j < od; ++j) e.observations(k, j) = base + static_cast<float>(k) * 0.5f + static_cast<float>(j);
    for (Index j = 0; j < ad; ++j) e.actions(k, j) = std::sin(base + static_cast<float>(k + j));
    e.rewards.push_back(0.1f * static_cast<float>(k));
    e.terminals.push_back(0);
  }
  return e;
}

TrajectoryDataset small_dataset() {
  TrajectoryDataset d(3, 2);
  d.add_episode(make_episode(12, 3, 2, 0.0f));
  d.add_episode(make_episode(7, 3, 2, 1.5f));
  auto last = make_episode(20, 3, 2, -2.0f);
  last.terminals.back() = 1;
  d.add_episode(last);
  d.compute_normalization();
  d.metadata()["name"] = "toy";
  d.metadata()["seed"] = 4;
  return d;
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST(Dataset, SaveLoadRoundTrip) {
  auto d = small_dataset();
  const auto path = temp("clap_ds_roundtrip.bin");
  save(d, path);
  auto back = load(path);
  EXPECT_TRUE(back == d);
  fs::remove(path);
}

TEST(Dataset, MidEpisodeTerminalRejectedWithStep) {
  TrajectoryDataset d(3, 2);
  auto e = make_episode(5, 3, 2, 0.0f);
  e.terminals[2] = 1;
  try {
    d.add_episode(e);
    FAIL();
  } catch (const clap::DataError& err) {
    const std::string msg = err.what();
    EXPECT_NE(msg.find("episode 0"), std::string::npos);
    EXPECT_NE(msg.find("step 2"), std::string::npos);
  }
}

TEST(Dataset, EmptyFileIsNoEpisodes) {
  const auto path = temp("clap_ds_empty.bin");
  { std::ofstream(path, std::ios::binary); }
  try {
    load(path);
    FAIL();
  } catch (const clap::DataError& err) {
    EXPECT_NE(std::string(err.what()).find("no episodes"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Dataset, TruncatedAndVersionMismatch) {
  auto d = small_dataset();
  const auto path = temp("clap_ds_trunc.bin");
  save(d, path);
  fs::resize_file(path, fs::file_size(path) - 10);
  EXPECT_THROW(load(path), clap::DataError);

  save(d, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto at = bytes.find("\"format_version\":1");
  ASSERT_NE(at, std::string::npos);
  bytes[at + 17] = '7';
  { std::ofstream(path, std::ios::binary) << bytes; }
  try {
    load(path);
    FAIL();
  } catch (const clap::DataError& err) {
    const std::string msg = err.what();
    EXPECT_NE(msg.find("version 7"), std::string::npos);
    EXPECT_NE(msg.find("version 1"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Dataset, ShortEpisodeRejected) {
  TrajectoryDataset d(3, 2);
  EXPECT_THROW(d.add_episode(make_episode(1, 3, 2, 0.0f)), clap::DataError);
}

TEST(Dataset, NormalizedObservationsAreStandardized) {
  auto d = small_dataset();
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  Index n = 0;
  for (const auto& e : d.episodes()) {
    auto z = d.normalization().apply<double>(e.observations);
    for (Index k = 0; k < z.rows(); ++k) {
      for (Index j = 0; j < 3; ++j) {
        sum[j] += z(k, j);
        sq[j] += z(k, j) * z(k, j);
      }
    }
    n += z.rows();
  }
  for (int j = 0; j < 3; ++j) {
    const double m = sum[j] / n;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(std::sqrt(sq[j] / n - m * m), 1.0, 1e-6);
  }
}

TEST(Windows, FullEpisodeWindowAllValid) {
  TrajectoryDataset d(3, 2);
  d.add_episode(make_episode(50, 3, 2, 0.0f));
  d.compute_normalization();
  clap::numerics::Rng rng(1);
  auto w = sample_windows<double>(d, 1, 50, rng);
  EXPECT_EQ(w.window(), 50);
  EXPECT_EQ(w.valid_steps(), 50.0);
  for (Index k = 0; k < 50; ++k) EXPECT_EQ(w.actions[k](0, 0), static_cast<double>(d.episode(0).actions(k, 0)));
}

TEST(Windows, ShortEpisodeIsFrontPadded) {
  TrajectoryDataset d(3, 2);
  d.add_episode(make_episode(10, 3, 2, 0.0f));
  d.compute_normalization();
  clap::numerics::Rng rng(1);
  auto w = sample_windows<double>(d, 2, 50, rng);
  for (Index r = 0; r < 2; ++r) {
    for (Index k = 0; k < 40; ++k) {
      EXPECT_EQ(w.mask[k](r, 0), 0.0);
      EXPECT_EQ(w.observations[k].row(r).cwiseAbs().sum(), 0.0);
    }
    for (Index k = 0; k < 10; ++k) {
      EXPECT_EQ(w.mask[40 + k](r, 0), 1.0);
      EXPECT_EQ(w.rewards[40 + k](r, 0), static_cast<double>(d.episode(0).rewards[k]));
    }
  }
}

TEST(Windows, SelectionFrequencyProportionalToValidStarts) {
  TrajectoryDataset d(3, 2);
  d.add_episode(make_episode(30, 3, 2, 0.0f));  // 21 starts for K=10
  d.add_episode(make_episode(14, 3, 2, 1.0f));  // 5 starts
  d.compute_normalization();
  clap::numerics::Rng rng(77);
  auto refs = sample_window_refs(d, 10000, 10, rng);
  double first = 0;
  for (const auto& r : refs) {
    if (r.episode == 0) {
      ++first;
      EXPECT_LE(r.start, 20);
    } else {
      EXPECT_LE(r.start, 4);
    }
  }
  const double p = 21.0 / 26.0;
  const double sigma = std::sqrt(10000 * p * (1 - p));
  EXPECT_LT(std::abs(first - 10000 * p), 3 * sigma);
}

TEST(Windows, NonPositiveSizesAreConfigErrors) {
  auto d = small_dataset();
  clap::numerics::Rng rng(1);
  EXPECT_THROW(sample_windows<float>(d, 0, 5, rng), clap::ConfigError);
  EXPECT_THROW(sample_windows<float>(d, 3, 0, rng), clap::ConfigError);
}

TEST(Windows, EpochLength) {
  auto d = small_dataset();  // 39 steps
  EXPECT_EQ(batches_per_epoch(d, 2, 5), 4);
}

TEST(CsvImport, ReadsEpisodesInNameOrder) {
  const auto dir = temp("clap_csv_import");
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream a(dir / "ep_000.csv");
    a << "obs_0,obs_1,act_0,reward,terminal\n0.1,0.2,0.5,1.0,0\n0.3,0.4,-0.5,2.0,1\n";
    std::ofstream b(dir / "ep_001.csv");
    b << "obs_0,obs_1,act_0,reward,terminal\n1,2,0,0,0\n3,4,1,0.5,0\n5,6,-1,0.5,0\n";
  }
  auto d = import_csv_directory(dir);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.episode(0).length(), 2);
  EXPECT_EQ(d.episode(0).terminals[1], 1);
  EXPECT_FLOAT_EQ(d.episode(1).observations(2, 1), 6.0f);
  EXPECT_FLOAT_EQ(d.episode(0).actions(1, 0), -0.5f);
  fs::remove_all(dir);
}
