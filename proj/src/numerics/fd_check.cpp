#include "numerics/fd_check.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace clap::numerics {
namespace {

template <typename S>
double evaluate(const LossBuilder<S>& build, const std::string& path) {
  Tape<S> tape;
  const double v = static_cast<double>(build(tape).item());
  if (!std::isfinite(v)) throw NumericalError("fd_check: non-finite loss while probing '" + path + "'");
  return v;
}

}  // namespace

bool FdReport::ok() const {
  return std::all_of(entries.begin(), entries.end(), [](const FdEntry& e) { return e.ok; });
}

std::string FdReport::summary() const {
  std::ostringstream os;
  os << "fd_check max relative error " << max_relative_error;
  for (const auto& e : entries) {
    if (!e.ok) os << "\n  FAIL " << e.path << " rel=" << e.max_relative_error << " abs=" << e.max_abs_error;
  }
  return os.str();
}

template <typename S>
FdReport fd_check(const LossBuilder<S>& build, const std::vector<Parameter<S>*>& params, const FdOptions& options) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<S> tape;
    Var<S> loss = build(tape);
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw NumericalError("fd_check: non-finite loss at the unperturbed point");
    }
    tape.backward(loss);
  }

  FdReport report;
  for (auto* p : params) {
    FdEntry entry;
    entry.path = p->path;
    const Index n = p->value.size();
    const Index probes = options.max_entries_per_parameter > 0 ? std::min(n, options.max_entries_per_parameter) : n;
    for (Index k = 0; k < probes; ++k) {
      const Index i = probes == n ? k : (k * n) / probes;
      S& slot = p->value.data()[i];
      const S original = slot;
      slot = static_cast<S>(static_cast<double>(original) + options.step);
      const double up = evaluate(build, p->path);
      slot = static_cast<S>(static_cast<double>(original) - options.step);
      const double down = evaluate(build, p->path);
      slot = original;

      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = static_cast<double>(p->grad.data()[i]);
      const double abs_err = std::abs(numeric - analytic);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), options.abs_floor});
      const double rel = abs_err / denom;
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_relative_error = std::max(entry.max_relative_error, rel);
      ++entry.checked;
    }
    entry.ok = entry.max_relative_error < options.tolerance;
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

template FdReport fd_check<float>(const LossBuilder<float>&, const std::vector<Parameter<float>*>&, const FdOptions&);
template FdReport fd_check<double>(const LossBuilder<double>&, const std::vector<Parameter<double>*>&, const FdOptions&);

}  // namespace clap::numerics
