#pragma once

// First-order operator-splitting solver for the assembled moment program.
// Each iteration alternates (a) a projection-like step onto the affine
// subspace of equalities (prefactorized KKT/normal equations, so every
// iterate satisfies them exactly), (b) projection of each moment-matrix
// block onto the PSD cone by eigenvalue clipping, and (c) clipping of the
// inequality slacks. Dual variables are updated in the usual scaled form.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsched/gpm.hpp"

namespace qsched {

struct SdpOptions {
  double tol = 1e-6;        // primal and dual residual target
  long max_iter = 200000;
  double rho = 1.0;         // initial penalty
  double over_relax = 1.6;  // in [1, 2)
  bool adaptive_rho = true;
};

struct SolverDiagnostics {
  long iterations = 0;
  double primal_res = std::numeric_limits<double>::infinity();
  double dual_res = std::numeric_limits<double>::infinity();
  bool converged = false;
  double rho_final = 0.0;
  std::string status;
};

struct MomentBlock {
  double tau;
  SupportWindow window;
  Eigen::VectorXd mbar;
  Eigen::MatrixXd second_moment;
};

struct MomentSolution {
  TimeGrid grid{0.0, 1.0, 1};
  std::vector<MomentBlock> blocks;
  double objective = 0.0;
  SolverDiagnostics diagnostics;
};

// Projection of a symmetric matrix onto the PSD cone (negative eigenvalues
// clipped to zero).
inline Eigen::MatrixXd psd_project(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("eigendecomposition failed in PSD projection");
  }
  if (es.eigenvalues()(0) >= 0.0) return sym;
  Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

namespace detail {

inline constexpr double kSqrt2 = 1.4142135623730951;

struct ConeLayout {
  int ineq_count = 0;                 // leading coordinates, clipped at 0
  std::vector<int> psd_offsets;       // per block, start of its svec segment
  std::vector<int> psd_dims;          // moment-matrix dimension per block
  int total = 0;
};

// Scaled vectorization of the symmetric matrix (off-diagonals carry sqrt(2))
// so that euclidean projection in svec coordinates is the matrix projection.
inline void svec_pack(const Eigen::MatrixXd& m, double* out) {
  int d = static_cast<int>(m.rows());
  int idx = 0;
  for (int q = 0; q < d; ++q) {
    for (int p = 0; p <= q; ++p) {
      out[idx++] = (p == q) ? m(p, q) : kSqrt2 * m(p, q);
    }
  }
}

inline void svec_unpack(const double* in, Eigen::MatrixXd& m) {
  int d = static_cast<int>(m.rows());
  int idx = 0;
  for (int q = 0; q < d; ++q) {
    for (int p = 0; p <= q; ++p) {
      double v = (p == q) ? in[idx] : in[idx] / kSqrt2;
      m(p, q) = v;
      m(q, p) = v;
      ++idx;
    }
  }
}

struct SparseMat {
  // CSR-ish row storage over a fixed column dimension.
  std::vector<std::vector<std::pair<int, double>>> rows;
  int cols = 0;

  void multiply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double acc = 0.0;
      for (const auto& [j, a] : rows[r]) acc += a * x(j);
      out(static_cast<Eigen::Index>(r)) = acc;
    }
  }

  void multiply_transpose(const Eigen::VectorXd& y, Eigen::VectorXd& out) const {
    out.setZero();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double yr = y(static_cast<Eigen::Index>(r));
      if (yr == 0.0) continue;
      for (const auto& [j, a] : rows[r]) out(j) += a * yr;
    }
  }
};

}  // namespace detail

inline MomentSolution solve_sdp(const GpmProblem& problem, const SdpOptions& opts = {}) {
  MomentSolution solution;
  solution.grid = problem.grid;
  for (const auto& b : problem.blocks) {
    MomentBlock mb;
    mb.tau = b.tau;
    mb.window = b.window;
    mb.mbar = Eigen::VectorXd::Zero(b.n);
    mb.second_moment = Eigen::MatrixXd::Zero(b.n, b.n);
    solution.blocks.push_back(std::move(mb));
  }

  if (problem.infeasible) {
    solution.diagnostics.converged = false;
    solution.diagnostics.status = "infeasible: " + problem.infeasible_reason;
    return solution;
  }

  const int n = problem.num_vars;

  // ---- cone-space layout: inequalities first, then svec PSD blocks ----
  detail::ConeLayout cone;
  cone.ineq_count = static_cast<int>(problem.inequalities.size());
  cone.total = cone.ineq_count;
  for (const auto& b : problem.blocks) {
    cone.psd_offsets.push_back(cone.total);
    cone.psd_dims.push_back(b.n + 1);
    cone.total += (b.n + 1) * (b.n + 2) / 2;
  }

  detail::SparseMat W;   // cone rows
  W.cols = n;
  W.rows.resize(static_cast<std::size_t>(cone.total));
  Eigen::VectorXd w0 = Eigen::VectorXd::Zero(cone.total);

  // inequality rows, normalized: value = (row.x - rhs)/||row||
  for (std::size_t r = 0; r < problem.inequalities.size(); ++r) {
    const SparseRow& row = problem.inequalities[r];
    double norm2 = 0.0;
    for (const auto& [j, a] : row.entries) norm2 += a * a;
    double scale = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 1.0;
    for (const auto& [j, a] : row.entries) W.rows[r].emplace_back(j, a * scale);
    w0(static_cast<Eigen::Index>(r)) = -row.rhs * scale;
  }

  // svec rows of each moment matrix [[1, mbar'],[mbar, R]]
  for (std::size_t k = 0; k < problem.blocks.size(); ++k) {
    const GpmBlock& b = problem.blocks[k];
    int base = cone.psd_offsets[k];
    int idx = 0;
    int d = b.n + 1;
    for (int q = 0; q < d; ++q) {
      for (int p = 0; p <= q; ++p) {
        int r = base + idx;
        if (p == 0 && q == 0) {
          w0(r) = 1.0;  // the moment of order zero
        } else if (p == 0) {
          W.rows[static_cast<std::size_t>(r)].emplace_back(
              problem.mbar_index(static_cast<int>(k), q - 1), detail::kSqrt2);
        } else {
          double coef = (p == q) ? 1.0 : detail::kSqrt2;
          W.rows[static_cast<std::size_t>(r)].emplace_back(
              problem.tri_index(static_cast<int>(k), p - 1, q - 1), coef);
        }
        ++idx;
      }
    }
  }

  // equalities, normalized
  const int p_eq = static_cast<int>(problem.equalities.size());
  detail::SparseMat A;
  A.cols = n;
  A.rows.resize(static_cast<std::size_t>(p_eq));
  Eigen::VectorXd b_eq(p_eq);
  for (int r = 0; r < p_eq; ++r) {
    const SparseRow& row = problem.equalities[static_cast<std::size_t>(r)];
    double norm2 = 0.0;
    for (const auto& [j, a] : row.entries) norm2 += a * a;
    double scale = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 1.0;
    for (const auto& [j, a] : row.entries) {
      A.rows[static_cast<std::size_t>(r)].emplace_back(j, a * scale);
    }
    b_eq(r) = row.rhs * scale;
  }

  // objective, scaled to unit max coefficient
  double obj_scale = 0.0;
  for (double v : problem.objective) obj_scale = std::max(obj_scale, std::abs(v));
  if (obj_scale <= 0.0) obj_scale = 1.0;
  Eigen::VectorXd c_scaled(n);
  for (int j = 0; j < n; ++j) c_scaled(j) = problem.objective[static_cast<std::size_t>(j)] / obj_scale;

  // ---- prefactorizations ----
  // H = W'W (SPD: the svec rows touch every variable), S = A H^{-1} A'.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (const auto& row : W.rows) {
    for (const auto& [j1, a1] : row) {
      for (const auto& [j2, a2] : row) H(j1, j2) += a1 * a2;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> H_llt(H);
  if (H_llt.info() != Eigen::Success) {
    throw std::runtime_error("cone normal matrix is not positive definite");
  }

  Eigen::MatrixXd At = Eigen::MatrixXd::Zero(n, p_eq);
  for (int r = 0; r < p_eq; ++r) {
    for (const auto& [j, a] : A.rows[static_cast<std::size_t>(r)]) At(j, r) = a;
  }
  Eigen::MatrixXd T = H_llt.solve(At);  // H^{-1} A'
  Eigen::MatrixXd S(p_eq, p_eq);
  for (int r = 0; r < p_eq; ++r) {
    Eigen::VectorXd col = T.col(r);
    Eigen::VectorXd Acol(p_eq);
    A.multiply(col, Acol);
    S.col(r) = Acol;
  }
  S = 0.5 * (S + S.transpose().eval());
  Eigen::LLT<Eigen::MatrixXd> S_llt(S);
  if (S_llt.info() != Eigen::Success) {
    throw std::invalid_argument(
        "equality system is rank-deficient; cannot project onto the affine subspace");
  }

  // ---- iteration state ----
  double rho = opts.rho;
  const double alpha = std::clamp(opts.over_relax, 1.0, 1.95);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(cone.total);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(cone.total);
  Eigen::VectorXd z_prev(cone.total), g(n), y(n), rhs_eq(p_eq), nu(p_eq);
  Eigen::VectorXd v(cone.total), vhat(cone.total), work_cone(cone.total), work_n(n);

  Eigen::VectorXd best_x = x;
  double best_score = std::numeric_limits<double>::infinity();
  SolverDiagnostics diag;
  diag.rho_final = rho;

  std::vector<Eigen::MatrixXd> mats;
  for (int d : cone.psd_dims) mats.emplace_back(d, d);

  auto project_cone = [&](Eigen::VectorXd& vec) {
    for (int i = 0; i < cone.ineq_count; ++i) vec(i) = std::max(vec(i), 0.0);
    for (std::size_t k = 0; k < cone.psd_offsets.size(); ++k) {
      Eigen::MatrixXd& m = mats[k];
      detail::svec_unpack(vec.data() + cone.psd_offsets[k], m);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
      if (es.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition failed during cone projection");
      }
      if (es.eigenvalues()(0) >= 0.0) continue;
      Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
      m.noalias() = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
      detail::svec_pack(m, vec.data() + cone.psd_offsets[k]);
    }
  };

  long it = 0;
  for (; it < opts.max_iter; ++it) {
    // (a) equality-constrained quadratic step
    work_cone = z - u - w0;
    W.multiply_transpose(work_cone, g);
    g -= c_scaled / rho;
    y = H_llt.solve(g);
    A.multiply(y, rhs_eq);
    rhs_eq -= b_eq;
    nu = S_llt.solve(rhs_eq);
    x.noalias() = y - T * nu;

    // (b)+(c) cone projection with over-relaxation
    W.multiply(x, v);
    v += w0;
    vhat = alpha * v + (1.0 - alpha) * z;
    z_prev = z;
    z = vhat + u;
    project_cone(z);
    u += vhat - z;

    // residuals
    double prim_norm = (v - z).norm();
    double prim_den = 1.0 + std::max(v.norm(), z.norm());
    double primal = prim_norm / prim_den;

    work_cone = z - z_prev;
    W.multiply_transpose(work_cone, work_n);
    double dual_norm = rho * work_n.norm();
    W.multiply_transpose(u, work_n);
    double dual_den = 1.0 + rho * work_n.norm();
    double dual = dual_norm / dual_den;

    double score = std::max(primal, dual);
    if (score < best_score) {
      best_score = score;
      best_x = x;
      diag.primal_res = primal;
      diag.dual_res = dual;
    }
    if (primal < opts.tol && dual < opts.tol) {
      best_x = x;
      diag.primal_res = primal;
      diag.dual_res = dual;
      diag.converged = true;
      ++it;
      break;
    }

    if (opts.adaptive_rho && it > 0 && it % 200 == 0) {
      if (primal > 10.0 * dual && rho < 1e6) {
        rho *= 2.0;
        u *= 0.5;
      } else if (dual > 10.0 * primal && rho > 1e-6) {
        rho *= 0.5;
        u *= 2.0;
      }
    }
  }

  diag.iterations = it;
  diag.rho_final = rho;
  diag.status = diag.converged ? "converged" : "iteration cap reached";

  // unpack the best iterate (equalities hold exactly on every x iterate)
  std::vector<double> xv(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) xv[static_cast<std::size_t>(j)] = best_x(j);
  solution.objective = problem.objective_value(xv);
  for (std::size_t k = 0; k < problem.blocks.size(); ++k) {
    const GpmBlock& b = problem.blocks[k];
    MomentBlock& mb = solution.blocks[k];
    for (int i = 0; i < b.n; ++i) {
      mb.mbar(i) = best_x(problem.mbar_index(static_cast<int>(k), i));
      for (int j = i; j < b.n; ++j) {
        double vv = best_x(problem.tri_index(static_cast<int>(k), i, j));
        mb.second_moment(i, j) = vv;
        mb.second_moment(j, i) = vv;
      }
    }
  }
  solution.diagnostics = diag;
  return solution;
}

}  // namespace qsched
