#include "docentr/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace docentr::numerics {

namespace {

template <typename T>
double evaluate(const LossBuilder<T>& loss) {
  Graph<T> g;
  return static_cast<double>(g.value(loss(g)).item());
}

}  // namespace

template <typename T>
GradCheckResult grad_check(const LossBuilder<T>& loss, std::span<BasicParameter<T>* const> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ContractError("grad_check: step must be positive");

  for (auto* p : params) p->zero_grad();
  {
    Graph<T> g;
    g.backward(loss(g));
  }

  // (parameter, element) pairs to probe
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (std::size_t e = 0; e < params[pi]->value.size(); ++e) probes.emplace_back(pi, e);
  if (options.samples && *options.samples < probes.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(probes.begin(), probes.end(), rng);
    probes.resize(*options.samples);
  }

  GradCheckResult result;
  const T h = static_cast<T>(options.step);
  for (auto [pi, e] : probes) {
    T& slot = params[pi]->value[e];
    const T saved = slot;
    slot = saved + h;
    const double up = evaluate(loss);
    slot = saved - h;
    const double down = evaluate(loss);
    slot = saved;
    // the perturbation actually applied, after rounding to T
    const double span = static_cast<double>(saved + h) - static_cast<double>(saved - h);
    const double numeric = (up - down) / span;
    const double analytic = static_cast<double>(params[pi]->grad[e]);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic - numeric) / denom;
    ++result.checked;
    if (err > result.max_rel_error || result.checked == 1) {
      result.max_rel_error = err;
      result.worst_param = pi;
      result.worst_index = e;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

template GradCheckResult grad_check<float>(const LossBuilder<float>&, std::span<BasicParameter<float>* const>,
                                           const GradCheckOptions&);
template GradCheckResult grad_check<double>(const LossBuilder<double>&, std::span<BasicParameter<double>* const>,
                                            const GradCheckOptions&);

}  // namespace docentr::numerics
