#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "docentr/numerics/graph.hpp"

namespace docentr::numerics {

struct GradCheckOptions {
  double step = 1e-3;
  /// Number of parameter elements to probe, drawn uniformly without
  /// replacement across all parameters. Empty means every element.
  std::optional<std::size_t> samples;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  /// Location of the worst element.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

/// Builds the scalar loss on a fresh graph; the function binds whichever
/// parameters it needs.
template <typename T>
using LossBuilder = std::function<Var(Graph<T>&)>;

/// Compares backward() against central differences (f(p+h) - f(p-h)) / 2h.
/// The error per element is |a - n| / max(|a|, |n|, 1e-8); the maximum over
/// the probed elements is returned. Parameter grads are left holding the
/// analytic gradient.
template <typename T>
GradCheckResult grad_check(const LossBuilder<T>& loss, std::span<BasicParameter<T>* const> params,
                           const GradCheckOptions& options = {});

}  // namespace docentr::numerics
