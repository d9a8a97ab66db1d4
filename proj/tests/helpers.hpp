#pragma once

// Shared generators for randomized tests. Everything is seeded, so runs are
// reproducible.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "qsched/model.hpp"

namespace qsched::testing {

// Unit-mass process with all rates <= rate_cap: random positive profile
// scaled by the water-filling factor sigma with sum min(sigma*y_i, cap)*dt = 1.
inline ArrivalProcess random_unit_process(std::mt19937_64& rng, const TimeGrid& grid,
                                          double rate_cap) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::vector<double> shape(static_cast<std::size_t>(grid.size()));
  for (double& y : shape) y = unif(rng);
  auto mass_at = [&](double sigma) {
    double mass = 0.0;
    for (double y : shape) mass += std::min(sigma * y, rate_cap) * grid.dt();
    return mass;
  };
  if (static_cast<double>(grid.size()) * rate_cap * grid.dt() <= 1.0) {
    throw std::invalid_argument("grid cannot carry unit mass under the rate cap");
  }
  double lo = 0.0, hi = 1.0;
  while (mass_at(hi) < 1.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (mass_at(mid) < 1.0 ? lo : hi) = mid;
  }
  double sigma = 0.5 * (lo + hi);
  std::vector<double> rates(shape.size());
  for (std::size_t i = 0; i < shape.size(); ++i) {
    rates[i] = std::min(sigma * shape[i], rate_cap);
  }
  // distribute the (tiny) residual mass over uncapped cells
  double mass = 0.0;
  for (double r : rates) mass += r * grid.dt();
  double residual = 1.0 - mass;
  for (std::size_t i = 0; i < rates.size() && std::abs(residual) > 0.0; ++i) {
    double room = rate_cap - rates[i];
    double add = std::clamp(residual / grid.dt(), -rates[i], room);
    rates[i] += add;
    residual -= add * grid.dt();
  }
  return ArrivalProcess(grid, rates);
}

struct RandomPolicyInstance {
  ModelParams params;
  SignalingPolicy policy;
};

inline RandomPolicyInstance random_policy_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double mu = 0.3 + 0.5 * unif(rng);
  double c = 0.2 + 0.7 * unif(rng);
  // enough capacity that the cap rarely binds
  double dt = 0.2;
  int n = 32;
  TimeGrid grid(-0.8, dt, n);

  int num_taus = 1 + static_cast<int>(unif(rng) * 2.0);
  std::vector<double> taus;
  double tau = 0.4 + unif(rng);
  for (int k = 0; k < num_taus; ++k) {
    taus.push_back(tau);
    tau += 0.4 + unif(rng);
  }
  ModelParams params(mu, c, uniform_discrete_prior(taus));

  std::vector<Mixture> mixtures;
  for (int k = 0; k < num_taus; ++k) {
    Mixture mix;
    int comps = 1 + static_cast<int>(unif(rng) * 1.99);
    double w_first = comps == 1 ? 1.0 : 0.3 + 0.4 * unif(rng);
    for (int j = 0; j < comps; ++j) {
      double w = comps == 1 ? 1.0 : (j == 0 ? w_first : 1.0 - w_first);
      mix.push_back(PolicyComponent{w, random_unit_process(rng, grid, mu)});
    }
    mixtures.push_back(std::move(mix));
  }
  return RandomPolicyInstance{params, SignalingPolicy::keyed(taus, std::move(mixtures))};
}

// A suggestion time carrying positive average density.
inline double random_supported_time(std::mt19937_64& rng, const SignalingPolicy& policy,
                                    const ModelParams& params) {
  auto times = policy.support_times(1e-9);
  std::uniform_int_distribution<std::size_t> dist(0, times.size() - 1);
  for (int tries = 0; tries < 100; ++tries) {
    double t = times[dist(rng)];
    if (mean_suggested_rate(policy, params, t) > 1e-9) return t;
  }
  return times.front();
}

}  // namespace qsched::testing
