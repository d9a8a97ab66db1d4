#pragma once

// Degree-2 moment program for the signaling problem: per start time tau_k the
// variables are the first moments mbar_k over the window and the second
// moments R_k, tied together by the PSD moment matrix [[1, mbar'],[mbar, R]].
// Objective and constraints are linear in these moments.

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsched/model.hpp"
#include "qsched/windows.hpp"

namespace qsched {

struct SparseRow {
  std::vector<std::pair<int, double>> entries;
  double rhs = 0.0;

  double dot(const std::vector<double>& x) const {
    double v = 0.0;
    for (const auto& [j, a] : entries) v += a * x[static_cast<std::size_t>(j)];
    return v;
  }
};

struct GpmBlock {
  double tau;
  double weight;  // prior mass f_k
  SupportWindow window;
  int n;            // window size
  int mbar_offset;  // n first-moment variables
  int tri_offset;   // n(n+1)/2 packed upper-triangle second moments
};

struct GpmProblem {
  double mu = 0.0;
  double c = 0.0;
  TimeGrid grid{0.0, 1.0, 1};
  std::vector<GpmBlock> blocks;
  int num_vars = 0;

  std::vector<double> objective;  // linear coefficients over the variables
  double objective_constant = 0.0;

  std::vector<SparseRow> equalities;    // row . x = rhs
  std::vector<SparseRow> inequalities;  // row . x >= rhs
  int structural_equalities = 0;  // leading mass + consistency rows; the rest
                                  // are obedience rows (when slack == 0)
  double obedience_slack = 0.0;

  // set when the mass constraint provably cannot be met (window capacity)
  bool infeasible = false;
  std::string infeasible_reason;

  int mbar_index(int k, int local_i) const {
    return blocks[static_cast<std::size_t>(k)].mbar_offset + local_i;
  }

  // Packed index of the second moment R(local_i, local_j); order-free.
  int tri_index(int k, int local_i, int local_j) const {
    const GpmBlock& b = blocks[static_cast<std::size_t>(k)];
    int i = std::min(local_i, local_j);
    int j = std::max(local_i, local_j);
    return b.tri_offset + i * b.n - i * (i - 1) / 2 + (j - i);
  }

  double objective_value(const std::vector<double>& x) const {
    double v = objective_constant;
    for (int j = 0; j < num_vars; ++j) {
      v += objective[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    }
    return v;
  }

  double max_equality_violation(const std::vector<double>& x) const {
    double worst = 0.0;
    for (const auto& row : equalities) {
      worst = std::max(worst, std::abs(row.dot(x) - row.rhs));
    }
    return worst;
  }

  // violation over the mass/consistency rows only (any unit-mass lift
  // satisfies these; obedience rows need an obedient policy)
  double max_structural_violation(const std::vector<double>& x) const {
    double worst = 0.0;
    for (int r = 0; r < structural_equalities; ++r) {
      const auto& row = equalities[static_cast<std::size_t>(r)];
      worst = std::max(worst, std::abs(row.dot(x) - row.rhs));
    }
    return worst;
  }

  // Most negative inequality slack (0 if all satisfied).
  double min_inequality_slack(const std::vector<double>& x) const {
    double worst = 0.0;
    for (const auto& row : inequalities) {
      worst = std::min(worst, row.dot(x) - row.rhs);
    }
    return worst;
  }
};

struct GpmOptions {
  // Turns the pointwise obedience identities |row| = 0 into |row| <= slack.
  double obedience_slack = 0.0;
};

inline GpmProblem assemble_gpm(const ModelParams& params,
                               const std::vector<SupportWindow>& windows,
                               const TimeGrid& grid, const GpmOptions& options = {}) {
  const DiscretePrior& prior = params.discrete_prior();
  if (windows.empty()) throw std::invalid_argument("no support windows given");
  if (windows.size() != prior.points.size()) {
    throw std::invalid_argument("need exactly one window per prior point");
  }

  GpmProblem p;
  p.mu = params.mu;
  p.c = params.c;
  p.grid = grid;
  p.obedience_slack = options.obedience_slack;

  const double dt = grid.dt();
  const double mu = params.mu;
  const double c = params.c;

  int offset = 0;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const SupportWindow& w = windows[k];
    if (std::abs(w.tau - prior.points[k]) > 1e-9) {
      throw std::invalid_argument("window order must match the prior points");
    }
    if (w.count < 1) throw std::invalid_argument("empty window");
    GpmBlock b;
    b.tau = w.tau;
    b.weight = prior.weights[k];
    b.window = w;
    b.n = w.count;
    b.mbar_offset = offset;
    offset += b.n;
    b.tri_offset = offset;
    offset += b.n * (b.n + 1) / 2;
    p.blocks.push_back(b);

    // Unit mass needs some rate above mu when the window is too short; the
    // rate cap makes that provably infeasible.
    if (static_cast<double>(b.n) * mu * dt < 1.0 - 1e-9) {
      p.infeasible = true;
      std::ostringstream msg;
      msg << "window for tau=" << w.tau << " holds at most mu*span="
          << static_cast<double>(b.n) * mu * dt << " mass < 1";
      p.infeasible_reason = msg.str();
    }
  }
  p.num_vars = offset;
  p.objective.assign(static_cast<std::size_t>(p.num_vars), 0.0);

  // Objective: (1/mu) sum_k f_k [ int_{s<t} (R_k(t,s) - mu c mbar_k(t)) + mu c (tau_k - t_first) ].
  // The triangular region takes full weight strictly below the diagonal and
  // half weight on it, for both the R term and the mbar term.
  for (std::size_t k = 0; k < p.blocks.size(); ++k) {
    const GpmBlock& b = p.blocks[k];
    const double f = b.weight;
    for (int i = 0; i < b.n; ++i) {
      for (int j = 0; j < i; ++j) {
        p.objective[static_cast<std::size_t>(p.tri_index(static_cast<int>(k), j, i))] +=
            f * dt * dt / mu;
      }
      p.objective[static_cast<std::size_t>(p.tri_index(static_cast<int>(k), i, i))] +=
          f * dt * dt / (2.0 * mu);
      p.objective[static_cast<std::size_t>(p.mbar_index(static_cast<int>(k), i))] -=
          f * c * dt * dt * (static_cast<double>(i) + 0.5);
    }
    double t_first = grid.point(b.window.first_index);
    p.objective_constant += f * c * (b.tau - t_first);
  }

  // Mass: sum_i mbar_k(i) dt = 1 per block.
  for (std::size_t k = 0; k < p.blocks.size(); ++k) {
    const GpmBlock& b = p.blocks[k];
    SparseRow row;
    row.rhs = 1.0;
    for (int i = 0; i < b.n; ++i) {
      row.entries.emplace_back(p.mbar_index(static_cast<int>(k), i), dt);
    }
    p.equalities.push_back(std::move(row));
  }

  // Second-moment mass consistency: sum_j R_k(i,j) dt = mbar_k(i) per (k,i).
  for (std::size_t k = 0; k < p.blocks.size(); ++k) {
    const GpmBlock& b = p.blocks[k];
    for (int i = 0; i < b.n; ++i) {
      SparseRow row;
      row.rhs = 0.0;
      for (int j = 0; j < b.n; ++j) {
        row.entries.emplace_back(p.tri_index(static_cast<int>(k), i, j), dt);
      }
      row.entries.emplace_back(p.mbar_index(static_cast<int>(k), i), -1.0);
      p.equalities.push_back(std::move(row));
    }
  }

  p.structural_equalities = static_cast<int>(p.equalities.size());

  // Obedience at every covered grid point: sum over covering k of
  // f_k [R_k(t,t) - mu c mbar_k(t)], an exact identity or within +-slack.
  for (int gi = 0; gi < grid.size(); ++gi) {
    std::vector<int> ks = covering_windows(windows, gi);
    if (ks.empty()) continue;
    SparseRow row;
    row.rhs = 0.0;
    for (int k : ks) {
      const GpmBlock& b = p.blocks[static_cast<std::size_t>(k)];
      int li = gi - b.window.first_index;
      row.entries.emplace_back(p.tri_index(k, li, li), b.weight);
      row.entries.emplace_back(p.mbar_index(k, li), -b.weight * mu * c);
    }
    if (options.obedience_slack > 0.0) {
      SparseRow upper = row;  // row >= -slack
      upper.rhs = -options.obedience_slack;
      p.inequalities.push_back(std::move(upper));
      SparseRow lower;        // -row >= -slack
      lower.rhs = -options.obedience_slack;
      for (const auto& [j, a] : row.entries) lower.entries.emplace_back(j, -a);
      p.inequalities.push_back(std::move(lower));
    } else {
      p.equalities.push_back(std::move(row));
    }
  }

  // Localizers: R >= 0 elementwise and mu mbar(i) - R(i,i) >= 0.
  for (std::size_t k = 0; k < p.blocks.size(); ++k) {
    const GpmBlock& b = p.blocks[k];
    for (int i = 0; i < b.n; ++i) {
      for (int j = i; j < b.n; ++j) {
        SparseRow row;
        row.entries.emplace_back(p.tri_index(static_cast<int>(k), i, j), 1.0);
        p.inequalities.push_back(std::move(row));
      }
      SparseRow loc;
      loc.entries.emplace_back(p.mbar_index(static_cast<int>(k), i), mu);
      loc.entries.emplace_back(p.tri_index(static_cast<int>(k), i, i), -1.0);
      p.inequalities.push_back(std::move(loc));
    }
  }

  return p;
}

// Moment lift of a policy: mbar_k = E[m], R_k = E[m m'] under pi(.|tau_k),
// restricted to window k. Throws if any component carries mass outside its
// window.
inline std::vector<double> lift_policy(const GpmProblem& p, const SignalingPolicy& policy,
                                       const DiscretePrior& prior) {
  policy.require_covers(prior);
  std::vector<double> x(static_cast<std::size_t>(p.num_vars), 0.0);
  for (std::size_t k = 0; k < p.blocks.size(); ++k) {
    const GpmBlock& b = p.blocks[k];
    const Mixture& mix = policy.mixture_for_index(policy.is_keyed() ? k : 0);
    for (const auto& comp : mix) {
      const TimeGrid& g = comp.process.grid();
      std::vector<double> local(static_cast<std::size_t>(b.n), 0.0);
      for (int gi = 0; gi < g.size(); ++gi) {
        double r = comp.process.rate(gi);
        if (r == 0.0) continue;
        int pi = p.grid.atom_index(g.point(gi));
        int li = pi - b.window.first_index;
        if (pi < 0 || li < 0 || li >= b.n) {
          throw std::invalid_argument("policy component has mass outside its window");
        }
        local[static_cast<std::size_t>(li)] = r;
      }
      for (int i = 0; i < b.n; ++i) {
        if (local[static_cast<std::size_t>(i)] == 0.0) continue;
        x[static_cast<std::size_t>(p.mbar_index(static_cast<int>(k), i))] +=
            comp.weight * local[static_cast<std::size_t>(i)];
        for (int j = i; j < b.n; ++j) {
          x[static_cast<std::size_t>(p.tri_index(static_cast<int>(k), i, j))] +=
              comp.weight * local[static_cast<std::size_t>(i)] *
              local[static_cast<std::size_t>(j)];
        }
      }
    }
  }
  return x;
}

}  // namespace qsched
