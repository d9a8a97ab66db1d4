#pragma once

// Closed- and semi-closed-form equilibria: the full-information arrival
// process (constant rate mu*c over a window of length 1/(mu*c)) and the
// no-information equilibrium under an exponential prior (density
// mu - mu/(beta - lambda t), possibly with a flat mu*c prefix), plus
// obedience validation of arbitrary policies.

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "qsched/model.hpp"
#include "qsched/quadrature.hpp"
#include "qsched/rootfind.hpp"

namespace qsched {

inline constexpr double kObedienceTolAnalytic = 1e-6;
inline constexpr double kObedienceTolSolver = 5e-3;

struct FullInfoEquilibrium {
  double tau;
  double t1;    // tau - (1-c)/(mu c)
  double t2;    // tau + 1/mu
  double rate;  // mu c

  static FullInfoEquilibrium for_params(double mu, double c, double tau) {
    return FullInfoEquilibrium{tau, tau - (1.0 - c) / (mu * c), tau + 1.0 / mu, mu * c};
  }

  double span() const { return t2 - t1; }
};

// Rate mu*c at grid points in [t1, t2), zero elsewhere. Requires the window
// to hold an integer number of grid cells so the discrete mass is exactly 1.
inline ArrivalProcess full_info_equilibrium(double mu, double c, double tau,
                                            const TimeGrid& grid) {
  const auto eq = FullInfoEquilibrium::for_params(mu, c, tau);
  const double dt = grid.dt();
  const double cells = 1.0 / (mu * c * dt);
  const double rounded = std::round(cells);
  if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells)) {
    std::ostringstream msg;
    msg << "window length 1/(mu*c) is not an integer number of grid cells (" << cells
        << "); use e.g. dt=" << 1.0 / (mu * c * rounded);
    throw std::invalid_argument(msg.str());
  }
  const int count = static_cast<int>(rounded);
  int first = static_cast<int>(std::ceil((eq.t1 - grid.t0()) / dt - 1e-9));
  if (first < 0 || first + count > grid.size()) {
    std::ostringstream msg;
    msg << "grid [" << grid.front() << ", " << grid.back() << "] does not cover ["
        << eq.t1 << ", " << eq.t2 << ")";
    throw std::invalid_argument(msg.str());
  }
  std::vector<double> rates(static_cast<std::size_t>(grid.size()), 0.0);
  for (int i = first; i < first + count; ++i) {
    rates[static_cast<std::size_t>(i)] = eq.rate;
  }
  return ArrivalProcess(grid, std::move(rates));
}

inline ArrivalProcess full_info_equilibrium(const ModelParams& params, double tau,
                                            const TimeGrid& grid) {
  return full_info_equilibrium(params.mu, params.c, tau, grid);
}

// One full-information process per prior point, as a deterministic policy.
inline SignalingPolicy full_info_policy(const ModelParams& params, const TimeGrid& grid) {
  const DiscretePrior& prior = params.discrete_prior();
  std::vector<ArrivalProcess> processes;
  processes.reserve(prior.points.size());
  for (double tau : prior.points) {
    processes.push_back(full_info_equilibrium(params, tau, grid));
  }
  return SignalingPolicy::keyed_deterministic(prior.points, std::move(processes));
}

enum class NoInfoBranch { NonNegative, Negative };

// No-information equilibrium under an exponential prior. For the Negative
// branch the density is flat at mu*c on [t1, flat_end] and follows the ODE
// form beyond; for the NonNegative branch flat_end == t1.
struct NoInfoEquilibrium {
  double mu;
  double c;
  double lambda;
  double beta;      // -ln(1-c) + lambda/mu + 1
  double t1;
  double t2;        // -ln(1-c)/lambda + 1/mu
  double flat_end;  // t~ = -c t1/(1-c) when t1 < 0, else t1
  NoInfoBranch branch;

  double density(double t) const {
    if (t < t1 || t > t2) return 0.0;
    if (t < flat_end) return mu * c;
    return mu - mu / (beta - lambda * t);
  }

  // Exact antiderivative of the density from t1.
  double cumulative(double t) const {
    if (t <= t1) return 0.0;
    double upto = std::min(t, t2);
    double flat = mu * c * (std::min(upto, flat_end) - t1);
    if (upto <= flat_end) return flat;
    double a = flat_end;
    double ode = mu * (upto - a) +
                 (mu / lambda) * (std::log(beta - lambda * upto) - std::log(beta - lambda * a));
    return flat + ode;
  }

  double mass() const { return cumulative(t2); }

  // First-order stationarity of the average cost at t, evaluated with the
  // analytic cumulative: 1 - c - e^{-lambda tilde(t)} (1 - m(t)/mu).
  double stationarity_residual(double t) const {
    double tilde = std::max(t - cumulative(t) / mu, 0.0);
    return 1.0 - c - std::exp(-lambda * tilde) * (1.0 - density(t) / mu);
  }

  double max_stationarity_residual(int samples = 4001) const {
    double worst = 0.0;
    for (int i = 0; i <= samples; ++i) {
      double t = t1 + (t2 - t1) * static_cast<double>(i) / samples;
      worst = std::max(worst, std::abs(stationarity_residual(t)));
    }
    return worst;
  }

  // Midpoint-samples the analytic density onto the grid cells [t_i, t_i+dt)
  // and renormalizes to unit mass; rejects grids too coarse to resolve the
  // density (renormalization factor outside 1 +- 1e-3).
  ArrivalProcess discretize(const TimeGrid& grid) const {
    std::vector<double> rates(static_cast<std::size_t>(grid.size()), 0.0);
    for (int i = 0; i < grid.size(); ++i) {
      rates[static_cast<std::size_t>(i)] = density(grid.point(i) + 0.5 * grid.dt());
    }
    double total = 0.0;
    for (double r : rates) total += r * grid.dt();
    if (!(total > 0.0)) {
      throw std::invalid_argument("grid does not intersect the equilibrium support");
    }
    double factor = 1.0 / total;
    if (std::abs(factor - 1.0) > 1e-3) {
      std::ostringstream msg;
      msg << "grid too coarse to discretize the equilibrium density "
          << "(renormalization factor " << factor << "); reduce dt";
      throw std::invalid_argument(msg.str());
    }
    for (double& r : rates) r *= factor;
    return ArrivalProcess(grid, std::move(rates));
  }

  TimeGrid covering_grid(double dt) const {
    int n = static_cast<int>(std::ceil((t2 - t1) / dt - 1e-9));
    return TimeGrid(t1, dt, std::max(n, 1));
  }
};

// Solves for every valid branch of the no-information equilibrium; may be
// empty (the equilibrium is conditional on existence).
inline std::vector<NoInfoEquilibrium> no_info_equilibrium(const ModelParams& params) {
  const double lambda = params.exponential_prior().lambda;
  const double mu = params.mu;
  const double c = params.c;
  if (!(c > 0.0 && c < 1.0)) {
    throw std::domain_error("no-information equilibrium needs 0 < c < 1 (ln(1-c) diverges)");
  }
  const double t2 = -std::log(1.0 - c) / lambda + 1.0 / mu;
  const double beta = -std::log(1.0 - c) + lambda / mu + 1.0;

  std::vector<NoInfoEquilibrium> out;

  // t1 >= 0: mass balance ln(1-c) + lambda t1 + ln(beta - lambda t1) = 0.
  auto mass_balance = [&](double x) {
    return std::log(1.0 - c) + lambda * x + std::log(beta - lambda * x);
  };
  for (const auto& root : scan_and_bisect(mass_balance, 0.0, t2)) {
    out.push_back(NoInfoEquilibrium{mu, c, lambda, beta, root.x, t2, root.x,
                                    NoInfoBranch::NonNegative});
  }

  // t1 < 0: flat mu*c segment up to t~ = -c t1/(1-c), ODE form beyond.
  double t1_neg = (1.0 - c) / (lambda * c) * std::log(1.0 - c) -
                  (1.0 - c) / (mu * c) + 1.0 / lambda;
  if (t1_neg < 0.0) {
    out.push_back(NoInfoEquilibrium{mu, c, lambda, beta, t1_neg, t2,
                                    -c * t1_neg / (1.0 - c), NoInfoBranch::Negative});
  }
  return out;
}

struct ObedienceReport {
  std::vector<double> times;
  std::vector<double> residuals;
  double max_abs = 0.0;

  bool obedient(double tol) const { return max_abs <= tol; }
};

// First-order obedience residual d/ds c_bar(t, s)|_{s=t} at every suggested
// time with positive average density. Requires every component to respect
// the rate cap m <= mu (the local-optimality characterization needs it).
inline ObedienceReport obedience_residual(const SignalingPolicy& policy,
                                          const ModelParams& params) {
  if (policy.max_component_rate() > params.mu + kRateTol) {
    throw std::invalid_argument(
        "obedience check requires every component rate <= mu");
  }
  ObedienceReport report;
  for (double t : policy.support_times()) {
    double mbar = mean_suggested_rate(policy, params, t);
    if (mbar <= 1e-10) continue;
    double r = average_cost_derivative(policy, params, t, t);
    report.times.push_back(t);
    report.residuals.push_back(r);
    report.max_abs = std::max(report.max_abs, std::abs(r));
  }
  return report;
}

}  // namespace qsched
