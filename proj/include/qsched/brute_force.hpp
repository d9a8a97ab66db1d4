#pragma once

// Exhaustive oracle for tiny instances: enumerates per-window rate
// assignments from a finite level set, keeps the (near) unit-mass ones whose
// pointwise obedience rows stay within a slack, and minimizes the expected
// social cost. Every kept policy lifts into the slack-relaxed moment
// program, so the value upper-bounds that program's optimum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "qsched/model.hpp"
#include "qsched/windows.hpp"

namespace qsched {

struct BruteForceOptions {
  double obedience_slack = 0.0;
  std::uint64_t max_joint = 2'000'000;  // beyond this, sample instead
  std::uint64_t samples = 200'000;
  std::uint64_t seed = 1;
};

struct BruteForceResult {
  bool found = false;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_rates;  // per window, local rates
  std::uint64_t joint_candidates = 0;
  std::uint64_t joint_feasible = 0;
  bool sampled = false;
};

namespace detail {

inline void enumerate_assignments(const std::vector<double>& levels, int n, double dt,
                                  double mass_tol,
                                  std::vector<std::vector<double>>& out) {
  std::vector<int> pick(static_cast<std::size_t>(n), 0);
  const int base = static_cast<int>(levels.size());
  while (true) {
    double mass = 0.0;
    for (int i = 0; i < n; ++i) mass += levels[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])] * dt;
    if (std::abs(mass - 1.0) <= mass_tol) {
      std::vector<double> rates(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        rates[static_cast<std::size_t>(i)] = levels[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])];
      }
      out.push_back(std::move(rates));
    }
    int pos = 0;
    while (pos < n && ++pick[static_cast<std::size_t>(pos)] == base) {
      pick[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == n) break;
  }
}

}  // namespace detail

inline BruteForceResult brute_force_small(const ModelParams& params,
                                          const std::vector<SupportWindow>& windows,
                                          const TimeGrid& grid,
                                          const std::vector<double>& rate_levels,
                                          const BruteForceOptions& opts = {}) {
  const DiscretePrior& prior = params.discrete_prior();
  if (windows.size() != prior.points.size()) {
    throw std::invalid_argument("need one window per prior point");
  }
  double min_positive = std::numeric_limits<double>::infinity();
  for (double lv : rate_levels) {
    if (lv < 0.0) throw std::invalid_argument("rate levels must be nonnegative");
    if (lv > 0.0) min_positive = std::min(min_positive, lv);
  }
  if (!std::isfinite(min_positive)) {
    throw std::invalid_argument("rate levels must include a positive value");
  }

  const double dt = grid.dt();
  const double mass_tol = dt * min_positive / 2.0;

  std::vector<std::vector<std::vector<double>>> per_window;
  for (const auto& w : windows) {
    if (w.count > 6) {
      throw std::invalid_argument("brute force is limited to windows of at most 6 points");
    }
    std::vector<std::vector<double>> feasible;
    detail::enumerate_assignments(rate_levels, w.count, dt, mass_tol, feasible);
    per_window.push_back(std::move(feasible));
  }

  BruteForceResult result;
  std::uint64_t joint = 1;
  for (const auto& f : per_window) {
    if (f.empty()) return result;  // empty feasible set: reported, not an error
    joint *= static_cast<std::uint64_t>(f.size());
    if (joint > opts.max_joint) break;
  }
  result.joint_candidates = joint;

  // covered grid points and, per point, the windows covering it
  std::vector<int> covered;
  std::vector<std::vector<int>> covers;
  for (int gi = 0; gi < grid.size(); ++gi) {
    auto ks = covering_windows(windows, gi);
    if (!ks.empty()) {
      covered.push_back(gi);
      covers.push_back(std::move(ks));
    }
  }

  const double mu = params.mu;
  const double c = params.c;

  auto local_rate = [&](const std::vector<double>& rates, const SupportWindow& w,
                        int gi) -> double {
    int li = gi - w.first_index;
    return (li >= 0 && li < w.count) ? rates[static_cast<std::size_t>(li)] : 0.0;
  };

  // pointwise obedience rows in moment form, |sum_k f_k m_k(t)(m_k(t)-mu c)|
  auto obedient = [&](const std::vector<const std::vector<double>*>& pick) -> bool {
    for (std::size_t idx = 0; idx < covered.size(); ++idx) {
      double row = 0.0;
      for (int k : covers[idx]) {
        double r = local_rate(*pick[static_cast<std::size_t>(k)],
                              windows[static_cast<std::size_t>(k)], covered[idx]);
        row += prior.weights[static_cast<std::size_t>(k)] * r * (r - mu * c);
      }
      if (std::abs(row) > opts.obedience_slack + 1e-12) return false;
    }
    return true;
  };

  auto value_of = [&](const std::vector<const std::vector<double>*>& pick) -> double {
    double total = 0.0;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      std::vector<double> rates(static_cast<std::size_t>(grid.size()), 0.0);
      const SupportWindow& w = windows[k];
      for (int i = 0; i < w.count; ++i) {
        rates[static_cast<std::size_t>(w.first_index + i)] = (*pick[k])[static_cast<std::size_t>(i)];
      }
      ArrivalProcess m(grid, std::move(rates));
      total += prior.weights[k] * social_cost(m, mu, c, prior.points[k]);
    }
    return total;
  };

  auto consider = [&](const std::vector<const std::vector<double>*>& pick) {
    if (!obedient(pick)) return;
    ++result.joint_feasible;
    double v = value_of(pick);
    if (v < result.best_value) {
      result.best_value = v;
      result.found = true;
      result.best_rates.clear();
      for (const auto* r : pick) result.best_rates.push_back(*r);
    }
  };

  const std::size_t K = per_window.size();
  std::vector<const std::vector<double>*> pick(K, nullptr);
  if (joint <= opts.max_joint) {
    std::vector<std::size_t> idx(K, 0);
    while (true) {
      for (std::size_t k = 0; k < K; ++k) pick[k] = &per_window[k][idx[k]];
      consider(pick);
      std::size_t pos = 0;
      while (pos < K && ++idx[pos] == per_window[pos].size()) {
        idx[pos] = 0;
        ++pos;
      }
      if (pos == K) break;
    }
  } else {
    // sampling mode: the minimum over a sample still upper-bounds the optimum
    result.sampled = true;
    std::mt19937_64 rng(opts.seed);
    for (std::uint64_t s = 0; s < opts.samples; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        std::uniform_int_distribution<std::size_t> dist(0, per_window[k].size() - 1);
        pick[k] = &per_window[k][dist(rng)];
      }
      consider(pick);
    }
  }
  return result;
}

}  // namespace qsched
