#include "numerics/checkpoint.hpp"

#include "common/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace clap::numerics {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'L', 'A', 'P', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(const T& v) { os_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
  void bytes(const void* data, std::size_t n) { os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::string source) : buf_(buf), source_(std::move(source)) {}
  template <typename T>
  T pod(const char* what) {
    T v;
    need(sizeof(T), what);
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<unsigned char> bytes(std::uint64_t n, const char* what) {
    need(n, what);
    std::vector<unsigned char> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                   buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (pos_ + n > buf_.size()) {
      throw DataError("checkpoint '" + source_ + "' is truncated while reading " + what);
    }
  }
  const std::string& buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_header(Reader& r, const std::string& source, std::uint32_t& version, std::uint32_t& scalar_bytes) {
  const auto magic = r.bytes(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("'" + source + "' is not a checkpoint (bad magic)");
  }
  version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint '" + source + "' has format version " + std::to_string(version) +
                    ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  scalar_bytes = r.pod<std::uint32_t>("scalar width");
  if (scalar_bytes != 4 && scalar_bytes != 8) {
    throw DataError("checkpoint '" + source + "' has unsupported scalar width " + std::to_string(scalar_bytes));
  }
}

template <typename S>
std::vector<unsigned char> to_bytes(const Matrix<S>& m) {
  std::vector<unsigned char> out(static_cast<std::size_t>(m.size()) * sizeof(S));
  std::memcpy(out.data(), m.data(), out.size());
  return out;
}

template <typename S>
Matrix<S> from_bytes(const std::vector<unsigned char>& bytes, std::uint64_t rows, std::uint64_t cols) {
  Matrix<S> m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::memcpy(m.data(), bytes.data(), bytes.size());
  return m;
}

}  // namespace

const OptimizerRecord* Checkpoint::optimizer(const std::string& name) const {
  for (const auto& o : optimizers) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint '" + path.string() + "'");
  Writer w(os);
  w.bytes(kMagic, sizeof(kMagic));
  w.pod(ckpt.version);
  w.pod(ckpt.scalar_bytes);
  const std::string meta = ckpt.metadata.dump();
  w.pod(static_cast<std::uint64_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  w.pod(static_cast<std::uint64_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.path);
    w.pod(t.rows);
    w.pod(t.cols);
    w.bytes(t.bytes.data(), t.bytes.size());
  }
  w.pod(static_cast<std::uint64_t>(ckpt.optimizers.size()));
  for (const auto& o : ckpt.optimizers) {
    w.str(o.name);
    w.pod(o.step);
    w.pod(o.learning_rate);
    w.pod(o.beta1);
    w.pod(o.beta2);
    w.pod(o.epsilon);
    w.pod(static_cast<std::uint64_t>(o.entries.size()));
    for (const auto& e : o.entries) {
      w.str(e.path);
      w.pod(e.rows);
      w.pod(e.cols);
      w.bytes(e.first.data(), e.first.size());
      w.bytes(e.second.data(), e.second.size());
    }
  }
  if (!os) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string buf = slurp(path);
  Reader r(buf, path.string());
  Checkpoint ckpt;
  check_header(r, path.string(), ckpt.version, ckpt.scalar_bytes);
  const auto meta_len = r.pod<std::uint64_t>("metadata length");
  const auto meta = r.bytes(meta_len, "metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta.begin(), meta.end());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' has malformed metadata: " + e.what());
  }
  const auto n_tensors = r.pod<std::uint64_t>("tensor count");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    TensorRecord t;
    t.path = r.str("tensor path");
    t.rows = r.pod<std::uint64_t>("tensor rows");
    t.cols = r.pod<std::uint64_t>("tensor cols");
    t.bytes = r.bytes(t.rows * t.cols * ckpt.scalar_bytes, "tensor data");
    ckpt.tensors.push_back(std::move(t));
  }
  const auto n_opt = r.pod<std::uint64_t>("optimizer count");
  for (std::uint64_t i = 0; i < n_opt; ++i) {
    OptimizerRecord o;
    o.name = r.str("optimizer name");
    o.step = r.pod<std::uint64_t>("optimizer step");
    o.learning_rate = r.pod<double>("learning rate");
    o.beta1 = r.pod<double>("beta1");
    o.beta2 = r.pod<double>("beta2");
    o.epsilon = r.pod<double>("epsilon");
    const auto n = r.pod<std::uint64_t>("moment count");
    for (std::uint64_t k = 0; k < n; ++k) {
      MomentRecord e;
      e.path = r.str("moment path");
      e.rows = r.pod<std::uint64_t>("moment rows");
      e.cols = r.pod<std::uint64_t>("moment cols");
      e.first = r.bytes(e.rows * e.cols * ckpt.scalar_bytes, "first moment");
      e.second = r.bytes(e.rows * e.cols * ckpt.scalar_bytes, "second moment");
      o.entries.push_back(std::move(e));
    }
    ckpt.optimizers.push_back(std::move(o));
  }
  if (!r.at_end()) throw DataError("checkpoint '" + path.string() + "' has trailing bytes");
  return ckpt;
}

std::uint32_t peek_scalar_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string head(16, '\0');
  in.read(head.data(), 16);
  head.resize(static_cast<std::size_t>(in.gcount()));
  Reader r(head, path.string());
  std::uint32_t version = 0, scalar_bytes = 0;
  check_header(r, path.string(), version, scalar_bytes);
  return scalar_bytes;
}

template <typename S>
void export_parameters(const ParameterStore<S>& store, Checkpoint& ckpt) {
  ckpt.scalar_bytes = sizeof(S);
  for (const auto* p : store.all()) {
    TensorRecord t;
    t.path = p->path;
    t.rows = static_cast<std::uint64_t>(p->value.rows());
    t.cols = static_cast<std::uint64_t>(p->value.cols());
    t.bytes = to_bytes(p->value);
    ckpt.tensors.push_back(std::move(t));
  }
}

template <typename S>
void import_parameters(const Checkpoint& ckpt, ParameterStore<S>& store) {
  if (ckpt.scalar_bytes != sizeof(S)) {
    throw DataError("checkpoint stores " + std::to_string(ckpt.scalar_bytes * 8) + "-bit scalars, expected " +
                    std::to_string(sizeof(S) * 8) + "-bit");
  }
  for (auto* p : store.all()) {
    const TensorRecord* rec = nullptr;
    for (const auto& t : ckpt.tensors) {
      if (t.path == p->path) {
        rec = &t;
        break;
      }
    }
    if (rec == nullptr) throw DataError("checkpoint is missing parameter '" + p->path + "'");
    if (rec->rows != static_cast<std::uint64_t>(p->value.rows()) ||
        rec->cols != static_cast<std::uint64_t>(p->value.cols())) {
      throw DataError("checkpoint parameter '" + p->path + "' has shape " + std::to_string(rec->rows) + "x" +
                      std::to_string(rec->cols) + ", expected " + std::to_string(p->value.rows()) + "x" +
                      std::to_string(p->value.cols()));
    }
    p->value = from_bytes<S>(rec->bytes, rec->rows, rec->cols);
  }
}

template <typename S>
OptimizerRecord export_optimizer(const Adam<S>& adam) {
  OptimizerRecord o;
  o.name = adam.name();
  o.step = static_cast<std::uint64_t>(adam.step_count());
  o.learning_rate = adam.config().learning_rate;
  o.beta1 = adam.config().beta1;
  o.beta2 = adam.config().beta2;
  o.epsilon = adam.config().epsilon;
  for (const auto& m : adam.moments()) {
    MomentRecord e;
    e.path = m.path;
    e.rows = static_cast<std::uint64_t>(m.first.rows());
    e.cols = static_cast<std::uint64_t>(m.first.cols());
    e.first = to_bytes(m.first);
    e.second = to_bytes(m.second);
    o.entries.push_back(std::move(e));
  }
  return o;
}

template <typename S>
void import_optimizer(const OptimizerRecord& record, Adam<S>& adam) {
  std::vector<AdamMoments<S>> moments;
  for (const auto& e : record.entries) {
    moments.push_back({e.path, from_bytes<S>(e.first, e.rows, e.cols), from_bytes<S>(e.second, e.rows, e.cols)});
  }
  adam.restore(static_cast<std::int64_t>(record.step), std::move(moments));
  adam.set_learning_rate(record.learning_rate);
}

template void export_parameters<float>(const ParameterStore<float>&, Checkpoint&);
template void export_parameters<double>(const ParameterStore<double>&, Checkpoint&);
template void import_parameters<float>(const Checkpoint&, ParameterStore<float>&);
template void import_parameters<double>(const Checkpoint&, ParameterStore<double>&);
template OptimizerRecord export_optimizer<float>(const Adam<float>&);
template OptimizerRecord export_optimizer<double>(const Adam<double>&);
template void import_optimizer<float>(const OptimizerRecord&, Adam<float>&);
template void import_optimizer<double>(const OptimizerRecord&, Adam<double>&);

}  // namespace clap::numerics
