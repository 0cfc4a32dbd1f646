#include "dataset/dataset.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace clap::dataset {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'L', 'A', 'P', 'D', 'A', 'T', 'A'};

std::string where(std::size_t episode) { return "episode " + std::to_string(episode); }

}  // namespace

double Episode::total_reward() const {
  double r = 0.0;
  for (float x : rewards) r += x;
  return r;
}

template <typename S>
Matrix<S> Normalization::apply(const Matrix<float>& raw) const {
  if (mean.empty()) return raw.cast<S>();
  Matrix<S> out(raw.rows(), raw.cols());
  for (Index i = 0; i < raw.rows(); ++i) {
    for (Index j = 0; j < raw.cols(); ++j) {
      out(i, j) = static_cast<S>((static_cast<double>(raw(i, j)) - mean[j]) / std[j]);
    }
  }
  return out;
}

template <typename S>
Matrix<S> Normalization::apply_row(const float* raw, Index dim) const {
  Matrix<S> out(1, dim);
  if (mean.empty()) {
    for (Index j = 0; j < dim; ++j) out(0, j) = static_cast<S>(raw[j]);
    return out;
  }
  for (Index j = 0; j < dim; ++j) out(0, j) = static_cast<S>((static_cast<double>(raw[j]) - mean[j]) / std[j]);
  return out;
}

template Matrix<float> Normalization::apply<float>(const Matrix<float>&) const;
template Matrix<double> Normalization::apply<double>(const Matrix<float>&) const;
template Matrix<float> Normalization::apply_row<float>(const float*, Index) const;
template Matrix<double> Normalization::apply_row<double>(const float*, Index) const;

void TrajectoryDataset::validate(const Episode& e, std::size_t index) const {
  const Index t = e.length();
  if (t < 2) throw DataError(where(index) + " has length " + std::to_string(t) + ", need at least 2");
  if (e.observations.cols() != obs_dim_) {
    throw DataError(where(index) + " has observation width " + std::to_string(e.observations.cols()) +
                    ", expected " + std::to_string(obs_dim_));
  }
  if (e.actions.rows() != t || e.actions.cols() != action_dim_) {
    throw DataError(where(index) + " has an action block of shape " + std::to_string(e.actions.rows()) + "x" +
                    std::to_string(e.actions.cols()));
  }
  if (static_cast<Index>(e.rewards.size()) != t || static_cast<Index>(e.terminals.size()) != t) {
    throw DataError(where(index) + " has mismatched reward/terminal lengths");
  }
  for (Index k = 0; k < t; ++k) {
    if (!e.observations.row(k).allFinite() || !std::isfinite(e.rewards[static_cast<std::size_t>(k)])) {
      throw DataError(where(index) + " has a non-finite value at step " + std::to_string(k));
    }
    for (Index j = 0; j < action_dim_; ++j) {
      const float a = e.actions(k, j);
      if (!(a >= -1.0f && a <= 1.0f)) {
        throw DataError(where(index) + " has action " + std::to_string(a) + " outside [-1, 1] at step " +
                        std::to_string(k));
      }
    }
    const std::uint8_t term = e.terminals[static_cast<std::size_t>(k)];
    if (term > 1) throw DataError(where(index) + " has a non-boolean terminal at step " + std::to_string(k));
    if (term == 1 && k != t - 1) {
      throw DataError(where(index) + " is terminal at step " + std::to_string(k) + " before its final step " +
                      std::to_string(t - 1));
    }
  }
}

void TrajectoryDataset::add_episode(Episode episode) {
  validate(episode, episodes_.size());
  episodes_.push_back(std::move(episode));
}

void TrajectoryDataset::compute_normalization() {
  const Index n = total_steps();
  if (n == 0) throw DataError("no episodes");
  std::vector<double> mean(static_cast<std::size_t>(obs_dim_), 0.0), var(static_cast<std::size_t>(obs_dim_), 0.0);
  for (const auto& e : episodes_) {
    for (Index k = 0; k < e.length(); ++k) {
      for (Index j = 0; j < obs_dim_; ++j) mean[static_cast<std::size_t>(j)] += e.observations(k, j);
    }
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& e : episodes_) {
    for (Index k = 0; k < e.length(); ++k) {
      for (Index j = 0; j < obs_dim_; ++j) {
        const double d = e.observations(k, j) - mean[static_cast<std::size_t>(j)];
        var[static_cast<std::size_t>(j)] += d * d;
      }
    }
  }
  Normalization norm;
  norm.mean = mean;
  for (auto v : var) norm.std.push_back(std::max(std::sqrt(v / static_cast<double>(n)), kStdFloor));
  norm_ = std::move(norm);
}

void TrajectoryDataset::set_normalization(Normalization n) {
  if (static_cast<Index>(n.mean.size()) != obs_dim_ || static_cast<Index>(n.std.size()) != obs_dim_) {
    throw DataError("normalization statistics have the wrong width");
  }
  for (double s : n.std) {
    if (!(s > 0.0)) throw DataError("normalization std must be positive");
  }
  norm_ = std::move(n);
}

Index TrajectoryDataset::total_steps() const {
  Index n = 0;
  for (const auto& e : episodes_) n += e.length();
  return n;
}

double TrajectoryDataset::mean_return() const {
  if (episodes_.empty()) return 0.0;
  double r = 0.0;
  for (const auto& e : episodes_) r += e.total_reward();
  return r / static_cast<double>(episodes_.size());
}

bool TrajectoryDataset::operator==(const TrajectoryDataset& o) const {
  return obs_dim_ == o.obs_dim_ && action_dim_ == o.action_dim_ && episodes_ == o.episodes_ && norm_ == o.norm_ &&
         metadata_ == o.metadata_;
}

void save(const TrajectoryDataset& data, const std::filesystem::path& path) {
  if (data.size() == 0) throw DataError("refusing to save a dataset with no episodes");
  nlohmann::json header;
  header["format_version"] = kDatasetVersion;
  header["obs_dim"] = data.obs_dim();
  header["action_dim"] = data.action_dim();
  std::vector<Index> lengths;
  for (const auto& e : data.episodes()) lengths.push_back(e.length());
  header["episode_lengths"] = lengths;
  header["obs_mean"] = data.normalization().mean;
  header["obs_std"] = data.normalization().std;
  header["metadata"] = data.metadata();
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write dataset '" + path.string() + "'");
  os.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : data.episodes()) {
    os.write(reinterpret_cast<const char*>(e.observations.data()),
             static_cast<std::streamsize>(e.observations.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(e.actions.data()),
             static_cast<std::streamsize>(e.actions.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(e.rewards.data()),
             static_cast<std::streamsize>(e.rewards.size() * sizeof(float)));
    std::vector<float> term(e.terminals.begin(), e.terminals.end());
    os.write(reinterpret_cast<const char*>(term.data()), static_cast<std::streamsize>(term.size() * sizeof(float)));
  }
  if (!os) throw DataError("failed writing dataset '" + path.string() + "'");
}

TrajectoryDataset load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  const std::string src = "dataset '" + path.string() + "'";
  if (buf.empty()) throw DataError(src + ": no episodes (empty file)");
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const std::string& what) {
    if (pos + n > buf.size()) throw DataError(src + " is truncated while reading " + what);
  };
  need(sizeof(kMagic), "magic");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) throw DataError(src + " is not a dataset (bad magic)");
  pos += sizeof(kMagic);
  std::uint64_t len = 0;
  need(sizeof(len), "header length");
  std::memcpy(&len, buf.data() + pos, sizeof(len));
  pos += sizeof(len);
  need(len, "header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                   buf.begin() + static_cast<std::ptrdiff_t>(pos + len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(src + " has a malformed header: " + e.what());
  }
  pos += len;

  TrajectoryDataset data;
  std::vector<Index> lengths;
  try {
    const auto version = header.at("format_version").get<std::uint32_t>();
    if (version != kDatasetVersion) {
      throw DataError(src + " has format version " + std::to_string(version) + ", this build reads version " +
                      std::to_string(kDatasetVersion));
    }
    data = TrajectoryDataset(header.at("obs_dim").get<Index>(), header.at("action_dim").get<Index>());
    lengths = header.at("episode_lengths").get<std::vector<Index>>();
    data.metadata() = header.value("metadata", nlohmann::json::object());
    if (lengths.empty()) throw DataError(src + ": no episodes");
    Normalization norm{header.at("obs_mean").get<std::vector<double>>(),
                       header.at("obs_std").get<std::vector<double>>()};
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      const Index t = lengths[i];
      if (t < 0) throw DataError(src + ": " + where(i) + " has a negative length");
      Episode e;
      e.observations.resize(t, data.obs_dim());
      e.actions.resize(t, data.action_dim());
      e.rewards.resize(static_cast<std::size_t>(t));
      std::vector<float> term(static_cast<std::size_t>(t));
      auto read = [&](void* dst, std::size_t bytes, const char* what) {
        need(bytes, where(i) + " " + what);
        std::memcpy(dst, buf.data() + pos, bytes);
        pos += bytes;
      };
      read(e.observations.data(), static_cast<std::size_t>(e.observations.size()) * sizeof(float), "observations");
      read(e.actions.data(), static_cast<std::size_t>(e.actions.size()) * sizeof(float), "actions");
      read(e.rewards.data(), e.rewards.size() * sizeof(float), "rewards");
      read(term.data(), term.size() * sizeof(float), "terminals");
      for (float f : term) {
        if (f != 0.0f && f != 1.0f) throw DataError(src + ": " + where(i) + " has a non-boolean terminal flag");
        e.terminals.push_back(f == 1.0f ? 1 : 0);
      }
      try {
        data.add_episode(std::move(e));
      } catch (const DataError& err) {
        throw DataError(src + ": " + err.what());
      }
    }
    if (!norm.mean.empty()) {
      data.set_normalization(std::move(norm));
    } else {
      data.compute_normalization();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(src + " has an invalid header: " + e.what());
  }
  if (pos != buf.size()) throw DataError(src + " has trailing bytes after the last episode");
  return data;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

float parse_float(const std::string& s, const std::string& where) {
  float v = 0.0f;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError(where + ": cannot parse '" + s + "'");
  return v;
}

}  // namespace

TrajectoryDataset import_csv_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("'" + dir.string() + "' contains no episodes (*.csv)");

  TrajectoryDataset data;
  Index obs_dim = -1, act_dim = -1;
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + file.string() + "' is empty");
    const auto head = split_csv(line);
    Index o = 0, a = 0;
    for (const auto& h : head) {
      if (h.rfind("obs_", 0) == 0) ++o;
      if (h.rfind("act_", 0) == 0) ++a;
    }
    if (o == 0 || a == 0 || static_cast<Index>(head.size()) != o + a + 2 || head[head.size() - 2] != "reward" ||
        head.back() != "terminal") {
      throw DataError("'" + file.string() + "' needs columns obs_*, act_*, reward, terminal");
    }
    if (obs_dim < 0) {
      obs_dim = o;
      act_dim = a;
      data = TrajectoryDataset(obs_dim, act_dim);
    } else if (o != obs_dim || a != act_dim) {
      throw DataError("'" + file.string() + "' has different widths than the first episode");
    }
    std::vector<std::vector<float>> rows;
    Index lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto cells = split_csv(line);
      const std::string at = file.filename().string() + ":" + std::to_string(lineno);
      if (cells.size() != head.size()) throw DataError(at + ": expected " + std::to_string(head.size()) + " cells");
      std::vector<float> r;
      for (const auto& c : cells) r.push_back(parse_float(c, at));
      rows.push_back(std::move(r));
    }
    Episode e;
    const Index t = static_cast<Index>(rows.size());
    e.observations.resize(t, obs_dim);
    e.actions.resize(t, act_dim);
    for (Index k = 0; k < t; ++k) {
      const auto& r = rows[static_cast<std::size_t>(k)];
      for (Index j = 0; j < obs_dim; ++j) e.observations(k, j) = r[static_cast<std::size_t>(j)];
      for (Index j = 0; j < act_dim; ++j) e.actions(k, j) = r[static_cast<std::size_t>(obs_dim + j)];
      e.rewards.push_back(r[static_cast<std::size_t>(obs_dim + act_dim)]);
      e.terminals.push_back(r.back() != 0.0f ? 1 : 0);
    }
    try {
      data.add_episode(std::move(e));
    } catch (const DataError& err) {
      throw DataError(file.filename().string() + ": " + err.what());
    }
  }
  data.compute_normalization();
  data.metadata()["name"] = dir.filename().string();
  data.metadata()["generator"] = "csv import";
  data.metadata()["mean_return"] = data.mean_return();
  return data;
}

template <typename S>
double WindowBatch<S>::valid_steps() const {
  double n = 0.0;
  for (const auto& m : mask) n += static_cast<double>(m.sum());
  return n;
}

template struct WindowBatch<float>;
template struct WindowBatch<double>;

Index valid_starts(Index episode_length, Index window) {
  return episode_length >= window ? episode_length - window + 1 : 1;
}

std::vector<WindowRef> sample_window_refs(const TrajectoryDataset& data, Index batch, Index window,
                                          numerics::Rng& rng) {
  if (batch <= 0 || window <= 0) {
    throw ConfigError("batch size and window length must be positive (got " + std::to_string(batch) + ", " +
                      std::to_string(window) + ")");
  }
  if (data.size() == 0) throw DataError("no episodes");
  std::vector<std::uint64_t> cumulative;
  std::uint64_t total = 0;
  for (const auto& e : data.episodes()) {
    total += static_cast<std::uint64_t>(valid_starts(e.length(), window));
    cumulative.push_back(total);
  }
  std::vector<WindowRef> refs;
  refs.reserve(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    const std::uint64_t pick = rng.below(total);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const auto ep = static_cast<std::size_t>(it - cumulative.begin());
    const std::uint64_t before = ep == 0 ? 0 : cumulative[ep - 1];
    refs.push_back({ep, static_cast<Index>(pick - before)});
  }
  return refs;
}

template <typename S>
WindowBatch<S> make_windows(const TrajectoryDataset& data, const std::vector<WindowRef>& refs, Index window) {
  if (window <= 0) throw ConfigError("window length must be positive");
  const Index b = static_cast<Index>(refs.size());
  const Index od = data.obs_dim(), ad = data.action_dim();
  WindowBatch<S> w;
  for (Index k = 0; k < window; ++k) {
    w.observations.push_back(Matrix<S>::Zero(b, od));
    w.actions.push_back(Matrix<S>::Zero(b, ad));
    w.rewards.push_back(Matrix<S>::Zero(b, 1));
    w.terminals.push_back(Matrix<S>::Zero(b, 1));
    w.mask.push_back(Matrix<S>::Zero(b, 1));
  }
  const auto& norm = data.normalization();
  for (Index r = 0; r < b; ++r) {
    const auto& ref = refs[static_cast<std::size_t>(r)];
    const Episode& e = data.episode(ref.episode);
    const Index valid = std::min(window, e.length() - ref.start);
    const Index pad = window - valid;
    for (Index k = 0; k < valid; ++k) {
      const Index src = ref.start + k;
      const Index dst = pad + k;
      w.observations[static_cast<std::size_t>(dst)].row(r) = norm.apply_row<S>(&e.observations(src, 0), od);
      w.actions[static_cast<std::size_t>(dst)].row(r) = e.actions.row(src).template cast<S>();
      w.rewards[static_cast<std::size_t>(dst)](r, 0) = static_cast<S>(e.rewards[static_cast<std::size_t>(src)]);
      w.terminals[static_cast<std::size_t>(dst)](r, 0) = static_cast<S>(e.terminals[static_cast<std::size_t>(src)]);
      w.mask[static_cast<std::size_t>(dst)](r, 0) = S(1);
    }
  }
  return w;
}

template <typename S>
WindowBatch<S> sample_windows(const TrajectoryDataset& data, Index batch, Index window, numerics::Rng& rng) {
  return make_windows<S>(data, sample_window_refs(data, batch, window, rng), window);
}

template WindowBatch<float> make_windows<float>(const TrajectoryDataset&, const std::vector<WindowRef>&, Index);
template WindowBatch<double> make_windows<double>(const TrajectoryDataset&, const std::vector<WindowRef>&, Index);
template WindowBatch<float> sample_windows<float>(const TrajectoryDataset&, Index, Index, numerics::Rng&);
template WindowBatch<double> sample_windows<double>(const TrajectoryDataset&, Index, Index, numerics::Rng&);

Index batches_per_epoch(const TrajectoryDataset& data, Index batch, Index window) {
  const Index per = batch * window;
  return (data.total_steps() + per - 1) / per;
}

}  // namespace clap::dataset
