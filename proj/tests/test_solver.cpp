#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "qsched/equilibria.hpp"
#include "qsched/extract.hpp"
#include "qsched/sdp.hpp"

#include "helpers.hpp"

using namespace qsched;

namespace {

Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double v = gauss(rng);
      a(i, j) = v;
      a(j, i) = v;
    }
  }
  return a;
}

struct SmallInstance {
  ModelParams params;
  TimeGrid grid;
  std::vector<SupportWindow> windows;
  GpmProblem problem;
};

SmallInstance small_instance(double c, double span, double left_ext, double dt,
                             std::vector<double> taus, double slack = 0.0) {
  ModelParams params(0.5, c, uniform_discrete_prior(taus));
  const auto& prior = params.discrete_prior();
  auto bounds = window_bounds(prior, params.mu, c, span, left_ext);
  TimeGrid grid = covering_grid(bounds, dt);
  auto windows = build_windows(prior, params.mu, c, span, left_ext, grid);
  GpmOptions opts;
  opts.obedience_slack = slack;
  GpmProblem problem = assemble_gpm(params, windows, grid, opts);
  return SmallInstance{params, grid, std::move(windows), std::move(problem)};
}

}  // namespace

TEST_CASE("PSD projection is idempotent and non-expansive") {
  std::mt19937_64 rng(211);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(trial % 9);
    Eigen::MatrixXd a = random_symmetric(rng, n, 1.5);
    Eigen::MatrixXd b = random_symmetric(rng, n, 1.5);
    Eigen::MatrixXd pa = psd_project(a);
    Eigen::MatrixXd pb = psd_project(b);

    // projected matrices are PSD
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pa);
    CHECK(es.eigenvalues()(0) >= -1e-10);
    // idempotent
    CHECK((psd_project(pa) - pa).norm() <= 1e-10);
    // non-expansive in the Frobenius norm
    CHECK((pa - pb).norm() <= (a - b).norm() * (1.0 + 1e-12) + 1e-12);
    // projection never moves a PSD matrix
    Eigen::MatrixXd spd = a * a.transpose();
    CHECK((psd_project(spd) - spd).norm() <= 1e-9 * (1.0 + spd.norm()));
  }
}

TEST_CASE("solver reproduces the forced single-window optimum") {
  // one start time, exactly the full-information span: the feasible set is
  // the full-information lift alone
  auto inst = small_instance(0.5, 4.0, 0.0, 0.5, {3.0});
  SdpOptions opts;
  opts.tol = 1e-9;
  MomentSolution sol = solve_sdp(inst.problem, opts);
  REQUIRE(sol.diagnostics.converged);
  CHECK(sol.diagnostics.primal_res < 1e-9);
  CHECK(sol.diagnostics.dual_res < 1e-9);
  REQUIRE(sol.blocks.size() == 1);
  for (int i = 0; i < sol.blocks[0].mbar.size(); ++i) {
    CHECK(sol.blocks[0].mbar(i) == doctest::Approx(0.25).epsilon(5e-7));
  }
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("solution satisfies the moment-matrix invariants at tight tolerance") {
  auto inst = small_instance(0.8, 2.5, 0.0, 0.25, {3.0, 3.5});
  SdpOptions opts;
  opts.tol = 1e-9;
  MomentSolution sol = solve_sdp(inst.problem, opts);
  REQUIRE(sol.diagnostics.converged);

  const double dt = inst.grid.dt();
  for (const auto& block : sol.blocks) {
    int n = static_cast<int>(block.mbar.size());
    // moment matrix is PSD within eigenvalue tolerance
    Eigen::MatrixXd m(n + 1, n + 1);
    m(0, 0) = 1.0;
    m.block(0, 1, 1, n) = block.mbar.transpose();
    m.block(1, 0, n, 1) = block.mbar;
    m.block(1, 1, n, n) = block.second_moment;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    CHECK(es.eigenvalues()(0) >= -1e-7);

    // second moments stay elementwise nonnegative and under the rate cap
    CHECK(block.second_moment.minCoeff() >= -1e-9);
    for (int i = 0; i < n; ++i) {
      CHECK(inst.params.mu * block.mbar(i) - block.second_moment(i, i) >= -1e-7);
    }

    // first- and second-moment mass consistency
    CHECK(block.mbar.sum() * dt == doctest::Approx(1.0).epsilon(1e-7));
    for (int i = 0; i < n; ++i) {
      CHECK(block.second_moment.row(i).sum() * dt ==
            doctest::Approx(block.mbar(i)).epsilon(1e-7));
    }
  }

  // equalities hold to working precision on the returned iterate
  std::vector<double> x(static_cast<std::size_t>(inst.problem.num_vars), 0.0);
  for (std::size_t k = 0; k < sol.blocks.size(); ++k) {
    const auto& block = sol.blocks[k];
    int n = static_cast<int>(block.mbar.size());
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(inst.problem.mbar_index(static_cast<int>(k), i))] =
          block.mbar(i);
      for (int j = i; j < n; ++j) {
        x[static_cast<std::size_t>(inst.problem.tri_index(static_cast<int>(k), i, j))] =
            block.second_moment(i, j);
      }
    }
  }
  CHECK(inst.problem.max_equality_violation(x) < 1e-10);
}

TEST_CASE("solver objective never exceeds a feasible moment point") {
  auto inst = small_instance(0.5, 4.0, 0.0, 0.25, {3.0, 3.5, 4.0});
  SdpOptions opts;
  opts.tol = 1e-8;
  MomentSolution sol = solve_sdp(inst.problem, opts);
  REQUIRE(sol.diagnostics.converged);
  SignalingPolicy policy = full_info_policy(inst.params, inst.grid);
  std::vector<double> lift = lift_policy(inst.problem, policy, inst.params.discrete_prior());
  CHECK(sol.objective <= inst.problem.objective_value(lift) + 1e-6);
}

TEST_CASE("capacity-infeasible problems are reported, never silently solved") {
  ModelParams params(0.5, 0.5, DiscretePrior{{3.0}, {1.0}});
  TimeGrid grid(0.0, 0.25, 30);
  auto windows = build_windows(params.discrete_prior(), params.mu, params.c, 0.25, 0.0, grid);
  GpmProblem problem = assemble_gpm(params, windows, grid);
  MomentSolution sol = solve_sdp(problem);
  CHECK_FALSE(sol.diagnostics.converged);
  CHECK(sol.diagnostics.status.find("infeasible") != std::string::npos);
}

TEST_CASE("iteration cap returns the best iterate with converged=false") {
  auto inst = small_instance(0.5, 4.0, 0.0, 0.25, {3.0, 3.5, 4.0});
  SdpOptions opts;
  opts.max_iter = 5;
  MomentSolution sol = solve_sdp(inst.problem, opts);
  CHECK_FALSE(sol.diagnostics.converged);
  CHECK(sol.diagnostics.iterations == 5);
  CHECK(std::isfinite(sol.diagnostics.primal_res));
  CHECK(sol.diagnostics.status.find("cap") != std::string::npos);
}

TEST_CASE("rank-1 extraction recovers the full-information process") {
  auto inst = small_instance(0.5, 4.0, 0.0, 0.5, {3.0});
  SdpOptions opts;
  opts.tol = 1e-9;
  MomentSolution sol = solve_sdp(inst.problem, opts);
  REQUIRE(sol.diagnostics.converged);
  auto reports = extract_rank1(sol);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].singleton);
  CHECK(reports[0].rank_ratio < 1e-6);
  ArrivalProcess reference = full_info_equilibrium(0.5, 0.5, 3.0, inst.grid);
  for (int i = 0; i < inst.grid.size(); ++i) {
    CHECK(reports[0].rates[static_cast<std::size_t>(i)] ==
          doctest::Approx(reference.rate(i)).epsilon(1e-5));
  }
}

TEST_CASE("extraction flags genuine mixtures as non-singleton") {
  // hand-built rank-2 moments: an even mixture of two disjoint processes
  ModelParams params(0.5, 0.5, DiscretePrior{{3.0}, {1.0}});
  TimeGrid grid(1.0, 0.5, 8);
  std::vector<double> a(8, 0.0), b(8, 0.0);
  for (int i = 0; i < 4; ++i) a[static_cast<std::size_t>(i)] = 0.5;
  for (int i = 4; i < 8; ++i) b[static_cast<std::size_t>(i)] = 0.5;

  MomentSolution sol;
  sol.grid = grid;
  MomentBlock block;
  block.tau = 3.0;
  block.window = SupportWindow{3.0, 1.0, 5.0, 0, 8};
  Eigen::VectorXd va(8), vb(8);
  for (int i = 0; i < 8; ++i) {
    va(i) = a[static_cast<std::size_t>(i)];
    vb(i) = b[static_cast<std::size_t>(i)];
  }
  block.mbar = 0.5 * (va + vb);
  block.second_moment = 0.5 * (va * va.transpose() + vb * vb.transpose());
  sol.blocks.push_back(block);

  auto reports = extract_rank1(sol);
  REQUIRE(reports.size() == 1);
  CHECK_FALSE(reports[0].singleton);
  CHECK(reports[0].rank_ratio > 0.1);
}

TEST_CASE("short-window structure verification passes on the solved program") {
  auto inst = small_instance(0.8, 2.5, 0.0, 0.25, {3.0, 3.5});
  SdpOptions opts;
  opts.tol = 1e-8;
  MomentSolution sol = solve_sdp(inst.problem, opts);
  REQUIRE(sol.diagnostics.converged);
  StructureReport report = verify_structure(sol, inst.params.mu, inst.params.c);
  CHECK(report.short_window);
  CHECK(report.pass);
  CHECK(report.max_deviation < 2e-3);
  CHECK(report.baseline == doctest::Approx(0.4));
}

TEST_CASE("deterministic: repeated solves agree bit for bit") {
  auto inst = small_instance(0.5, 4.0, 0.0, 0.5, {3.0, 3.5});
  SdpOptions opts;
  opts.tol = 1e-7;
  MomentSolution s1 = solve_sdp(inst.problem, opts);
  MomentSolution s2 = solve_sdp(inst.problem, opts);
  CHECK(s1.objective == s2.objective);
  CHECK(s1.diagnostics.iterations == s2.diagnostics.iterations);
  for (std::size_t k = 0; k < s1.blocks.size(); ++k) {
    CHECK((s1.blocks[k].mbar - s2.blocks[k].mbar).norm() == 0.0);
    CHECK((s1.blocks[k].second_moment - s2.blocks[k].second_moment).norm() == 0.0);
  }
}
