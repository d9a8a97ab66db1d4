#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsched/equilibria.hpp"
#include "qsched/quadrature.hpp"

#include "helpers.hpp"

using namespace qsched;

TEST_CASE("full-information window relations") {
  for (double mu : {0.3, 0.5, 0.7}) {
    for (double c : {0.2, 0.5, 0.8, 1.0}) {
      for (double tau : {1.0, 3.5, 6.0}) {
        auto eq = FullInfoEquilibrium::for_params(mu, c, tau);
        CHECK(c * eq.t1 + (1.0 - c) * eq.t2 == doctest::Approx(tau).epsilon(1e-12));
        CHECK(mu * c * (eq.t2 - eq.t1) == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("full-information process on the benchmark grids") {
  TimeGrid grid(0.0, 0.25, 40);

  ArrivalProcess half = full_info_equilibrium(0.5, 0.5, 3.5, grid);
  CHECK(half.mass() == doctest::Approx(1.0).epsilon(1e-14));
  for (int i = 0; i < grid.size(); ++i) {
    double t = grid.point(i);
    double expected = (t >= 1.5 - 1e-12 && t < 5.5 - 1e-12) ? 0.25 : 0.0;
    CHECK(half.rate(i) == expected);
  }

  ArrivalProcess point8 = full_info_equilibrium(0.5, 0.8, 3.5, grid);
  for (int i = 0; i < grid.size(); ++i) {
    double t = grid.point(i);
    double expected = (t >= 3.0 - 1e-12 && t < 5.5 - 1e-12) ? 0.4 : 0.0;
    CHECK(point8.rate(i) == doctest::Approx(expected).epsilon(1e-14));
  }

  // c=1 collapses the early window: rate mu on [tau, tau + 1/mu)
  ArrivalProcess lateness_free = full_info_equilibrium(0.5, 1.0, 3.5, grid);
  for (int i = 0; i < grid.size(); ++i) {
    double t = grid.point(i);
    double expected = (t >= 3.5 - 1e-12 && t < 5.5 - 1e-12) ? 0.5 : 0.0;
    CHECK(lateness_free.rate(i) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("full-information process rejects bad grids") {
  CHECK_THROWS_AS(
      static_cast<void>(full_info_equilibrium(0.5, 0.5, 3.5, TimeGrid(2.0, 0.25, 40))),
      std::invalid_argument);
  // non-integer cell count names a compatible step
  try {
    static_cast<void>(full_info_equilibrium(0.5, 0.5, 3.5, TimeGrid(0.0, 0.3, 40)));
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("dt=") != std::string::npos);
  }
}

TEST_CASE("no-information closed forms at the benchmark parameters") {
  ModelParams params(0.5, 0.5, ExponentialPrior{1.0});
  auto branches = no_info_equilibrium(params);
  REQUIRE(branches.size() == 1);
  const auto& eq = branches.front();
  CHECK(eq.branch == NoInfoBranch::Negative);
  CHECK(eq.t2 == doctest::Approx(std::log(2.0) + 2.0).epsilon(1e-14));
  CHECK(eq.beta == doctest::Approx(std::log(2.0) + 3.0).epsilon(1e-14));
  CHECK(eq.t1 == doctest::Approx(std::log(0.5) - 1.0).epsilon(1e-12));
  CHECK(eq.flat_end == doctest::Approx(-eq.t1).epsilon(1e-12));  // c/(1-c) = 1

  // density hits zero exactly at the right endpoint and stays below mu
  CHECK(eq.density(eq.t2) == doctest::Approx(0.0).epsilon(1e-14));
  for (int i = 0; i <= 1000; ++i) {
    double t = eq.t1 + (eq.t2 - eq.t1) * i / 1000.0;
    CHECK(eq.density(t) >= -1e-14);
    CHECK(eq.density(t) < 0.5);
  }
  // flat segment joins the interior density continuously at mu*c
  CHECK(eq.density(eq.flat_end - 1e-12) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(eq.density(eq.flat_end + 1e-12) == doctest::Approx(0.25).epsilon(1e-9));

  // unit mass, both in closed form and by quadrature
  CHECK(eq.mass() == doctest::Approx(1.0).epsilon(1e-12));
  double quad = integrate([&](double t) { return eq.density(t); }, eq.t1, eq.t2, 1e-12);
  CHECK(std::abs(quad - 1.0) < 1e-8);

  // pointwise stationarity of the average cost
  CHECK(eq.max_stationarity_residual() < 1e-9);
}

TEST_CASE("no-information equilibrium picks the nonnegative branch for large c") {
  ModelParams params(0.5, 0.9, ExponentialPrior{1.0});
  auto branches = no_info_equilibrium(params);
  REQUIRE(branches.size() == 1);
  const auto& eq = branches.front();
  CHECK(eq.branch == NoInfoBranch::NonNegative);
  CHECK(eq.t1 >= 0.0);
  CHECK(eq.t1 < eq.t2);
  // the mass-balance equation holds at the root
  double g = std::log(0.1) + eq.t1 + std::log(eq.beta - eq.t1);
  CHECK(std::abs(g) < 1e-10);
  CHECK(eq.mass() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(eq.max_stationarity_residual() < 1e-9);
}

TEST_CASE("no-information density satisfies its differential equation") {
  for (double c : {0.4, 0.6}) {
    ModelParams params(0.5, c, ExponentialPrior{0.8});
    for (const auto& eq : no_info_equilibrium(params)) {
      double h = 1e-5;
      for (int i = 1; i < 200; ++i) {
        double t = eq.flat_end + (eq.t2 - eq.flat_end) * i / 200.0;
        if (t - h < eq.flat_end || t + h > eq.t2) continue;
        double mprime = (eq.density(t + h) - eq.density(t - h)) / (2.0 * h);
        double lhs = -eq.lambda * std::pow(1.0 - eq.density(t) / eq.mu, 2) - mprime / eq.mu;
        CHECK(std::abs(lhs) < 1e-6);
      }
    }
  }
}

TEST_CASE("no-information stationarity closure holds pointwise") {
  // e^{-lambda tilde}(1 - m/mu) = 1 - c on the support
  for (double c : {0.3, 0.5, 0.7, 0.9}) {
    for (double lambda : {0.7, 1.0, 1.8}) {
      ModelParams params(0.45, c, ExponentialPrior{lambda});
      for (const auto& eq : no_info_equilibrium(params)) {
        for (int i = 0; i <= 500; ++i) {
          double t = eq.t1 + (eq.t2 - eq.t1) * i / 500.0;
          double tilde = std::max(t - eq.cumulative(t) / eq.mu, 0.0);
          double closure = std::exp(-lambda * tilde) * (1.0 - eq.density(t) / eq.mu);
          CHECK(std::abs(closure - (1.0 - c)) < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("no-information solver input validation") {
  CHECK_THROWS_AS(no_info_equilibrium(ModelParams(0.5, 1.0, ExponentialPrior{1.0})),
                  std::domain_error);
  CHECK_THROWS_AS(no_info_equilibrium(ModelParams(0.5, 0.5, uniform_discrete_prior({1.0}))),
                  std::invalid_argument);
}

TEST_CASE("discretization renormalizes and keeps unit mass") {
  ModelParams params(0.5, 0.5, ExponentialPrior{1.0});
  auto eq = no_info_equilibrium(params).front();
  ArrivalProcess m = eq.discretize(eq.covering_grid(0.001));
  CHECK(m.mass() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.max_rate() <= params.mu);
  // much coarser grids cannot resolve the density within the 1e-3 gate
  CHECK_THROWS_AS(static_cast<void>(eq.discretize(eq.covering_grid(1.0))),
                  std::invalid_argument);
}

TEST_CASE("discretized no-information policy passes the solver-tier obedience check") {
  ModelParams params(0.5, 0.5, ExponentialPrior{1.0});
  auto eq = no_info_equilibrium(params).front();
  ArrivalProcess m = eq.discretize(eq.covering_grid(0.01));
  auto report = obedience_residual(SignalingPolicy::uniform(m), params);
  CHECK(report.max_abs < kObedienceTolSolver);
  CHECK(report.obedient(kObedienceTolSolver));
  CHECK_FALSE(report.residuals.empty());
}

TEST_CASE("full-information policy is exactly obedient") {
  ModelParams params(0.5, 0.5, uniform_discrete_prior({3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0}));
  TimeGrid grid(0.0, 0.25, 40);
  auto report = obedience_residual(full_info_policy(params, grid), params);
  CHECK(report.max_abs <= 1e-9);
  CHECK(report.obedient(kObedienceTolAnalytic));
}

TEST_CASE("an early burst is far from obedient") {
  // all mass at rate mu well before the start: the queue term dominates and
  // the residual sits at 1-c across the burst
  double mu = 0.5, c = 0.5, dt = 0.25;
  ModelParams params(mu, c, DiscretePrior{{3.0}, {1.0}});
  TimeGrid grid(0.0, dt, 16);
  std::vector<double> rates(16, 0.0);
  for (int i = 0; i < 8; ++i) rates[static_cast<std::size_t>(i)] = mu;
  SignalingPolicy burst =
      SignalingPolicy::keyed_deterministic({3.0}, {ArrivalProcess(grid, rates)});
  auto report = obedience_residual(burst, params);
  REQUIRE_FALSE(report.residuals.empty());
  CHECK(report.residuals.back() == doctest::Approx(1.0 - c).epsilon(1e-12));
  CHECK(report.max_abs == doctest::Approx(1.0 - c).epsilon(1e-12));
  CHECK_FALSE(report.obedient(kObedienceTolAnalytic));
}

TEST_CASE("obedience check rejects rates above mu") {
  double mu = 0.5;
  ModelParams params(mu, 0.5, DiscretePrior{{2.0}, {1.0}});
  TimeGrid grid(0.0, 0.5, 4);
  ArrivalProcess m(grid, {0.6, 0.6, 0.4, 0.4});
  CHECK_THROWS_AS(obedience_residual(SignalingPolicy::keyed_deterministic({2.0}, {m}), params),
                  std::invalid_argument);
}
