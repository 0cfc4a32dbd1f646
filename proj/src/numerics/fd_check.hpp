#pragma once

#include "numerics/parameter.hpp"
#include "numerics/tape.hpp"

#include <functional>
#include <string>
#include <vector>

namespace clap::numerics {

struct FdEntry {
  std::string path;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  Index checked = 0;
  bool ok = true;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_relative_error = 0.0;
  bool ok() const;
  std::string summary() const;
};

struct FdOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Gradients smaller than this are compared in absolute terms.
  double abs_floor = 1e-6;
  // Cap on entries probed per parameter (0 = all). Entries are spread evenly.
  Index max_entries_per_parameter = 0;
};

// Builds the loss on a fresh tape. Must be deterministic: any sampling noise
// has to be frozen across calls.
template <typename S>
using LossBuilder = std::function<Var<S>(Tape<S>&)>;

// Compares reverse-mode gradients against central finite differences. Each
// parameter's `grad` is overwritten with the analytic gradient.
template <typename S>
FdReport fd_check(const LossBuilder<S>& build, const std::vector<Parameter<S>*>& params, const FdOptions& options);

}  // namespace clap::numerics
