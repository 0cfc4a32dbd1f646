#include "analysis/analysis.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace clap::analysis {

ReferenceValues dataset_reference_values(const dataset::TrajectoryDataset& data, double discount) {
  if (data.episodes().empty()) throw DataError("dataset has no episodes");
  ReferenceValues out;
  for (const auto& ep : data.episodes()) {
    double to_go = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t t = ep.rewards.size(); t-- > 0;) {
      to_go = static_cast<double>(ep.rewards[t]) + discount * to_go;
      best = std::max(best, to_go);
    }
    out.average_return += ep.total_reward();
    out.average_max_value += best;
  }
  const double n = static_cast<double>(data.episodes().size());
  out.average_return /= n;
  out.average_max_value /= n;
  return out;
}

const std::vector<std::string> kCurveColumns{"arm", "step", "return", "normalized_return", "mean_value"};

namespace {

// Arm labels are written verbatim as the first CSV column; they must not
// contain commas.
class CurveWriter {
 public:
  CurveWriter(training::CsvWriter* out, std::string arm) : out_(out), arm_(std::move(arm)) {}
  void write(const CurvePoint& p) {
    if (out_) out_->row_labeled(arm_, {static_cast<double>(p.step), p.raw_return, p.normalized_return, p.mean_value});
  }

 private:
  training::CsvWriter* out_;
  std::string arm_;
};

}  // namespace

template <typename S>
std::vector<CurvePoint> train_and_track(training::AgentTrainer<S>& trainer, world_model::WorldModel<S>& model,
                                        const dataset::TrajectoryDataset& data, const envsuite::PointMass& env,
                                        const envsuite::ReferenceReturns& refs, const TrackOptions& options,
                                        const std::string& arm, training::CsvWriter* curve,
                                        training::CsvWriter* metrics) {
  if (options.eval_every <= 0) throw ConfigError("eval_every must be positive");
  CurveWriter writer(curve, arm);
  std::vector<CurvePoint> points;
  auto measure = [&] {
    CurvePoint p;
    p.step = trainer.step();
    auto ev = envsuite::evaluate(env, model, trainer.agent(), data.normalization(), options.eval_episodes,
                                 options.eval_seed);
    p.raw_return = ev.mean;
    p.normalized_return = envsuite::normalized_return(ev.mean, refs);
    p.mean_value = training::mean_posterior_value(trainer.agent(), model, data, options.value_windows,
                                                  trainer.agent().config().window,
                                                  numerics::derive_seed(options.eval_seed, "values"));
    points.push_back(p);
    writer.write(p);
  };
  if (trainer.step() == 0 || trainer.step() % options.eval_every == 0) measure();
  while (trainer.step() < options.steps) {
    auto m = trainer.update(model, data);
    if (metrics) {
      metrics->row({static_cast<double>(trainer.step()), m.actor_loss, m.critic_loss, m.mean_value, m.entropy,
                    m.utilization});
    }
    if (trainer.step() % options.eval_every == 0 || trainer.step() == options.steps) measure();
  }
  if (curve) curve->flush();
  if (metrics) metrics->flush();
  return points;
}

double SweepArm::peak_return() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : curve) best = std::max(best, p.normalized_return);
  return best;
}

namespace {

std::string epsilon_label(double e) {
  std::ostringstream ss;
  ss << e;
  return ss.str();
}

}  // namespace

template <typename S>
std::vector<SweepArm> epsilon_sweep(world_model::WorldModel<S>& model, const dataset::TrajectoryDataset& data,
                                    const agent::AgentConfig& base, const std::vector<double>& epsilons,
                                    const envsuite::PointMass& env, const envsuite::ReferenceReturns& refs,
                                    const TrackOptions& options, std::uint64_t seed,
                                    const std::filesystem::path& out_dir) {
  std::vector<SweepArm> arms;
  for (double eps : epsilons) {
    agent::AgentConfig cfg = base;
    cfg.epsilon = eps;
    training::AgentTrainer<S> trainer(cfg, model.config(), training::Seeds{seed});
    std::unique_ptr<training::CsvWriter> curve, metrics;
    if (!out_dir.empty()) {
      const auto dir = out_dir / ("eps_" + epsilon_label(eps));
      std::filesystem::create_directories(dir);
      curve = std::make_unique<training::CsvWriter>(dir / "curve.csv", kCurveColumns);
      metrics = std::make_unique<training::CsvWriter>(dir / "agent_metrics.csv", training::kAgentMetricColumns);
    }
    SweepArm arm;
    arm.epsilon = eps;
    arm.curve = train_and_track(trainer, model, data, env, refs, options, "epsilon=" + epsilon_label(eps),
                                curve.get(), metrics.get());
    arms.push_back(std::move(arm));
  }
  return arms;
}

NeighborIndex::NeighborIndex(const dataset::TrajectoryDataset& data)
    : obs_dim_(data.obs_dim()), action_dim_(data.action_dim()) {
  const auto& norm = data.normalization();
  for (std::size_t e = 0; e < data.episodes().size(); ++e) {
    const auto& ep = data.episode(e);
    auto obs = norm.apply<double>(ep.observations);
    for (Index t = 0; t < ep.length(); ++t) {
      entries_.push_back({static_cast<Index>(e), t});
      for (Index j = 0; j < obs_dim_; ++j) obs_.push_back(obs(t, j));
      for (Index j = 0; j < action_dim_; ++j) actions_.push_back(static_cast<double>(ep.actions(t, j)));
    }
  }
}

std::vector<double> NeighborIndex::observation(Index i) const {
  auto b = obs_.begin() + i * obs_dim_;
  return {b, b + obs_dim_};
}

std::vector<double> NeighborIndex::action(Index i) const {
  auto b = actions_.begin() + i * action_dim_;
  return {b, b + action_dim_};
}

std::vector<Index> NeighborIndex::nearest(const std::vector<double>& query, Index k,
                                          std::vector<double>* distances) const {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (k > size()) {
    throw DataError("dataset has " + std::to_string(size()) + " steps, fewer than k = " + std::to_string(k));
  }
  if (static_cast<Index>(query.size()) != obs_dim_) throw ConfigError("query width does not match observations");
  std::vector<double> d(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    double acc = 0.0;
    const double* o = obs_.data() + i * static_cast<std::size_t>(obs_dim_);
    for (Index j = 0; j < obs_dim_; ++j) acc += (o[j] - query[j]) * (o[j] - query[j]);
    d[i] = acc;
  }
  auto less = [&](Index a, Index b) {
    if (d[a] != d[b]) return d[a] < d[b];
    const double* oa = obs_.data() + a * obs_dim_;
    const double* ob = obs_.data() + b * obs_dim_;
    if (!std::equal(oa, oa + obs_dim_, ob)) return std::lexicographical_compare(oa, oa + obs_dim_, ob, ob + obs_dim_);
    const double* aa = actions_.data() + a * action_dim_;
    const double* ab = actions_.data() + b * action_dim_;
    return std::lexicographical_compare(aa, aa + action_dim_, ab, ab + action_dim_);
  };
  std::vector<Index> idx(entries_.size());
  std::iota(idx.begin(), idx.end(), Index(0));
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), less);
  idx.resize(static_cast<std::size_t>(k));
  if (distances) {
    distances->clear();
    for (Index i : idx) distances->push_back(d[i]);
  }
  return idx;
}

const std::vector<std::string> kActionStudyColumns{"episode", "step", "block", "dim", "data_mean", "data_std",
                                                   "model_mean", "model_std", "within_range"};

namespace {

void fit_gaussian(const std::vector<std::vector<double>>& xs, std::vector<double>& mean, std::vector<double>& std) {
  const std::size_t d = xs.front().size();
  mean.assign(d, 0.0);
  std.assign(d, 0.0);
  for (const auto& x : xs)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
  for (auto& m : mean) m /= static_cast<double>(xs.size());
  for (const auto& x : xs)
    for (std::size_t j = 0; j < d; ++j) std[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
  for (auto& s : std) s = std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace

template <typename S>
ActionStudy action_distribution_study(const world_model::WorldModel<S>& model, const dataset::TrajectoryDataset& data,
                                      Index k, Index query_episodes, std::uint64_t seed) {
  const auto& mc = model.config();
  if (!mc.latent_actions) throw ConfigError("the action study needs a world model with latent actions");
  if (query_episodes < 1) throw ConfigError("need at least one query episode");
  NeighborIndex index(data);
  if (k > index.size()) {
    throw DataError("dataset has " + std::to_string(index.size()) + " steps, fewer than k = " + std::to_string(k));
  }

  // Posterior-mean beliefs for every dataset step, in index order.
  numerics::SeededNoise<S> noise(numerics::derive_seed(seed, "posterior"));
  numerics::Matrix<S> h_all(index.size(), mc.deter_size), s_all(index.size(), mc.stoch_size);
  Index row = 0;
  for (std::size_t e = 0; e < data.episodes().size(); ++e) {
    const Index len = data.episode(e).length();
    auto batch = dataset::make_windows<S>(data, {dataset::WindowRef{e, 0}}, len);
    numerics::Tape<S> tape;
    auto beliefs = model.observe_sequence(tape, batch, noise, world_model::StateReadout::Mean);
    for (Index t = 0; t < len; ++t, ++row) {
      h_all.row(row) = beliefs[t].h.value().row(0);
      s_all.row(row) = beliefs[t].s.value().row(0);
    }
  }

  numerics::SeededNoise<S> sampler(numerics::derive_seed(seed, "prior-decoder"));
  ActionStudy study;
  double within = 0.0, diff = 0.0;
  Index within_count = 0, diff_count = 0;
  const Index episodes = std::min<Index>(query_episodes, static_cast<Index>(data.episodes().size()));
  const auto& norm = data.normalization();
  for (Index e = 0; e < episodes; ++e) {
    const auto& ep = data.episode(static_cast<std::size_t>(e));
    auto obs = norm.apply<double>(ep.observations);
    for (Index t = 0; t < ep.length(); ++t) {
      std::vector<double> q(obs.row(t).data(), obs.row(t).data() + obs.cols());
      auto nn = index.nearest(q, k);
      std::vector<std::vector<double>> data_actions;
      numerics::Matrix<S> h(k, mc.deter_size), s(k, mc.stoch_size);
      for (Index i = 0; i < k; ++i) {
        data_actions.push_back(index.action(nn[i]));
        h.row(i) = h_all.row(nn[i]);
        s.row(i) = s_all.row(nn[i]);
      }
      numerics::Tape<S> tape;
      world_model::Belief<S> b{tape.constant(h), tape.constant(s)};
      auto prior = model.action_prior(tape, b);
      auto u = prior.rsample(sampler);
      auto a = world_model::from_unit_interval(model.action_decoder(tape, b, u).rsample(sampler)).value();

      ActionStudyRow r;
      r.episode = e;
      r.step = t;
      r.block = t / 10;
      fit_gaussian(data_actions, r.data_mean, r.data_std);
      std::vector<std::vector<double>> model_actions;
      Index inside = 0;
      for (Index i = 0; i < k; ++i) {
        std::vector<double> x(static_cast<std::size_t>(mc.action_dim));
        for (Index j = 0; j < mc.action_dim; ++j) {
          x[j] = static_cast<double>(a(i, j));
          double lo = data_actions[0][j], hi = data_actions[0][j];
          for (const auto& da : data_actions) {
            lo = std::min(lo, da[j]);
            hi = std::max(hi, da[j]);
          }
          inside += (x[j] >= lo && x[j] <= hi) ? 1 : 0;
        }
        model_actions.push_back(std::move(x));
      }
      fit_gaussian(model_actions, r.model_mean, r.model_std);
      r.within_range = static_cast<double>(inside) / static_cast<double>(k * mc.action_dim);
      within += static_cast<double>(inside);
      within_count += k * mc.action_dim;
      for (Index j = 0; j < mc.action_dim; ++j) diff += std::abs(r.model_mean[j] - r.data_mean[j]);
      diff_count += mc.action_dim;
      study.rows.push_back(std::move(r));
    }
  }
  study.within_range = within / static_cast<double>(within_count);
  study.mean_abs_mean_difference = diff / static_cast<double>(diff_count);
  return study;
}

void write_action_study(const ActionStudy& study, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < kActionStudyColumns.size(); ++i) out << (i ? "," : "") << kActionStudyColumns[i];
  out << '\n';
  for (const auto& r : study.rows) {
    for (std::size_t j = 0; j < r.data_mean.size(); ++j) {
      out << r.episode << ',' << r.step << ',' << r.block << ',' << j << ',' << r.data_mean[j] << ','
          << r.data_std[j] << ',' << r.model_mean[j] << ',' << r.model_std[j] << ',' << r.within_range << '\n';
    }
  }
}

std::size_t merge_csv_tree(const std::filesystem::path& root, const std::string& file_name,
                           const std::filesystem::path& out) {
  if (!std::filesystem::is_directory(root)) throw DataError("not a directory: " + root.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == file_name && entry.path() != out) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no " + file_name + " files below " + root.string());
  std::ofstream dst(out);
  if (!dst) throw DataError("cannot write " + out.string());
  std::string header;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    if (!std::getline(in, line)) throw DataError(f.string() + " is empty");
    if (header.empty()) {
      header = line;
      dst << header << '\n';
    } else if (line != header) {
      throw DataError(f.string() + " has a different header than " + files.front().string());
    }
    while (std::getline(in, line)) {
      if (!line.empty()) dst << line << '\n';
    }
  }
  return files.size();
}

#define CLAP_INSTANTIATE(S)                                                                                         \
  template std::vector<CurvePoint> train_and_track<S>(                                                              \
      training::AgentTrainer<S>&, world_model::WorldModel<S>&, const dataset::TrajectoryDataset&,                   \
      const envsuite::PointMass&, const envsuite::ReferenceReturns&, const TrackOptions&, const std::string&,       \
      training::CsvWriter*, training::CsvWriter*);                                                                  \
  template std::vector<SweepArm> epsilon_sweep<S>(world_model::WorldModel<S>&, const dataset::TrajectoryDataset&,   \
                                                  const agent::AgentConfig&, const std::vector<double>&,            \
                                                  const envsuite::PointMass&, const envsuite::ReferenceReturns&,    \
                                                  const TrackOptions&, std::uint64_t, const std::filesystem::path&); \
  template ActionStudy action_distribution_study<S>(const world_model::WorldModel<S>&,                             \
                                                    const dataset::TrajectoryDataset&, Index, Index, std::uint64_t);

CLAP_INSTANTIATE(float)
CLAP_INSTANTIATE(double)
#undef CLAP_INSTANTIATE

}  // namespace clap::analysis
