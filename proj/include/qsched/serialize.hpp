#pragma once

// JSON schemas for assembled problems and moment solutions (debugging and
// cross-implementation comparison) and the policy CSV format used by the
// command-line tools.
//
// Policy CSV: header "tau,t,m", one row per (tau, grid point), values fixed
// to 6 decimals. A density-only CSV ("t,m") covers start-time-independent
// processes.

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qsched/gpm.hpp"
#include "qsched/sdp.hpp"

namespace qsched {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON: assembled problem
// ---------------------------------------------------------------------------

inline json sparse_rows_to_json(const std::vector<SparseRow>& rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json entries = json::array();
    for (const auto& [j, a] : row.entries) entries.push_back({j, a});
    out.push_back({{"entries", entries}, {"rhs", row.rhs}});
  }
  return out;
}

inline std::vector<SparseRow> sparse_rows_from_json(const json& j) {
  std::vector<SparseRow> rows;
  for (const auto& rj : j) {
    SparseRow row;
    row.rhs = rj.at("rhs").get<double>();
    for (const auto& e : rj.at("entries")) {
      row.entries.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json grid_to_json(const TimeGrid& grid) {
  return {{"t0", grid.t0()}, {"dt", grid.dt()}, {"n", grid.size()}};
}

inline TimeGrid grid_from_json(const json& j) {
  return TimeGrid(j.at("t0").get<double>(), j.at("dt").get<double>(), j.at("n").get<int>());
}

inline json window_to_json(const SupportWindow& w) {
  return {{"tau", w.tau},
          {"lower", w.lower},
          {"upper", w.upper},
          {"first_index", w.first_index},
          {"count", w.count}};
}

inline SupportWindow window_from_json(const json& j) {
  return SupportWindow{j.at("tau").get<double>(), j.at("lower").get<double>(),
                       j.at("upper").get<double>(), j.at("first_index").get<int>(),
                       j.at("count").get<int>()};
}

inline json problem_to_json(const GpmProblem& p) {
  json blocks = json::array();
  for (const auto& b : p.blocks) {
    blocks.push_back({{"tau", b.tau},
                      {"weight", b.weight},
                      {"window", window_to_json(b.window)},
                      {"n", b.n},
                      {"mbar_offset", b.mbar_offset},
                      {"tri_offset", b.tri_offset}});
  }
  json objective = json::array();
  for (std::size_t j = 0; j < p.objective.size(); ++j) {
    if (p.objective[j] != 0.0) objective.push_back({static_cast<int>(j), p.objective[j]});
  }
  return {{"mu", p.mu},
          {"c", p.c},
          {"grid", grid_to_json(p.grid)},
          {"blocks", blocks},
          {"num_vars", p.num_vars},
          {"objective", objective},
          {"objective_constant", p.objective_constant},
          {"equalities", sparse_rows_to_json(p.equalities)},
          {"inequalities", sparse_rows_to_json(p.inequalities)},
          {"obedience_slack", p.obedience_slack},
          {"infeasible", p.infeasible},
          {"infeasible_reason", p.infeasible_reason}};
}

inline GpmProblem problem_from_json(const json& j) {
  GpmProblem p;
  p.mu = j.at("mu").get<double>();
  p.c = j.at("c").get<double>();
  p.grid = grid_from_json(j.at("grid"));
  for (const auto& bj : j.at("blocks")) {
    GpmBlock b;
    b.tau = bj.at("tau").get<double>();
    b.weight = bj.at("weight").get<double>();
    b.window = window_from_json(bj.at("window"));
    b.n = bj.at("n").get<int>();
    b.mbar_offset = bj.at("mbar_offset").get<int>();
    b.tri_offset = bj.at("tri_offset").get<int>();
    p.blocks.push_back(b);
  }
  p.num_vars = j.at("num_vars").get<int>();
  p.objective.assign(static_cast<std::size_t>(p.num_vars), 0.0);
  for (const auto& e : j.at("objective")) {
    p.objective[static_cast<std::size_t>(e.at(0).get<int>())] = e.at(1).get<double>();
  }
  p.objective_constant = j.at("objective_constant").get<double>();
  p.equalities = sparse_rows_from_json(j.at("equalities"));
  p.inequalities = sparse_rows_from_json(j.at("inequalities"));
  p.obedience_slack = j.at("obedience_slack").get<double>();
  p.infeasible = j.at("infeasible").get<bool>();
  p.infeasible_reason = j.at("infeasible_reason").get<std::string>();
  return p;
}

// ---------------------------------------------------------------------------
// JSON: moment solution
// ---------------------------------------------------------------------------

inline json solution_to_json(const MomentSolution& s) {
  json blocks = json::array();
  for (const auto& b : s.blocks) {
    json mbar = json::array();
    for (int i = 0; i < b.mbar.size(); ++i) mbar.push_back(b.mbar(i));
    json R = json::array();
    for (int i = 0; i < b.second_moment.rows(); ++i) {
      json row = json::array();
      for (int jcol = 0; jcol < b.second_moment.cols(); ++jcol) {
        row.push_back(b.second_moment(i, jcol));
      }
      R.push_back(row);
    }
    blocks.push_back({{"tau", b.tau},
                      {"window", window_to_json(b.window)},
                      {"mbar", mbar},
                      {"R", R}});
  }
  return {{"grid", grid_to_json(s.grid)},
          {"blocks", blocks},
          {"objective", s.objective},
          {"diagnostics",
           {{"iterations", s.diagnostics.iterations},
            {"primal_res", s.diagnostics.primal_res},
            {"dual_res", s.diagnostics.dual_res},
            {"converged", s.diagnostics.converged},
            {"status", s.diagnostics.status}}}};
}

inline MomentSolution solution_from_json(const json& j) {
  MomentSolution s;
  s.grid = grid_from_json(j.at("grid"));
  for (const auto& bj : j.at("blocks")) {
    MomentBlock b;
    b.tau = bj.at("tau").get<double>();
    b.window = window_from_json(bj.at("window"));
    const auto& mbar = bj.at("mbar");
    b.mbar = Eigen::VectorXd(mbar.size());
    for (std::size_t i = 0; i < mbar.size(); ++i) {
      b.mbar(static_cast<Eigen::Index>(i)) = mbar[i].get<double>();
    }
    const auto& R = bj.at("R");
    b.second_moment = Eigen::MatrixXd(R.size(), R.size());
    for (std::size_t i = 0; i < R.size(); ++i) {
      for (std::size_t jcol = 0; jcol < R[i].size(); ++jcol) {
        b.second_moment(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jcol)) =
            R[i][jcol].get<double>();
      }
    }
    s.blocks.push_back(std::move(b));
  }
  s.objective = j.at("objective").get<double>();
  const auto& d = j.at("diagnostics");
  s.diagnostics.iterations = d.at("iterations").get<long>();
  s.diagnostics.primal_res = d.at("primal_res").get<double>();
  s.diagnostics.dual_res = d.at("dual_res").get<double>();
  s.diagnostics.converged = d.at("converged").get<bool>();
  s.diagnostics.status = d.at("status").get<std::string>();
  return s;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

// Fixed 6-decimal formatting; -0.000000 is normalized to 0.000000 so output
// is reproducible bit for bit.
inline std::string format_fixed6(double v) {
  double rounded = std::round(v * 1e6) / 1e6;
  if (rounded == 0.0) rounded = 0.0;  // fold -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", rounded);
  return std::string(buf);
}

struct PolicyCsvEntry {
  double tau;
  ArrivalProcess process;
};

inline void write_policy_csv(std::ostream& os,
                             const std::vector<PolicyCsvEntry>& entries) {
  os << "tau,t,m\n";
  for (const auto& e : entries) {
    const TimeGrid& g = e.process.grid();
    for (int i = 0; i < g.size(); ++i) {
      os << format_fixed6(e.tau) << ',' << format_fixed6(g.point(i)) << ','
         << format_fixed6(e.process.rate(i)) << '\n';
    }
  }
}

inline void write_density_csv(std::ostream& os, const ArrivalProcess& process) {
  os << "t,m\n";
  const TimeGrid& g = process.grid();
  for (int i = 0; i < g.size(); ++i) {
    os << format_fixed6(g.point(i)) << ',' << format_fixed6(process.rate(i)) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  return fields;
}

inline ArrivalProcess process_from_samples(const std::vector<double>& ts,
                                           const std::vector<double>& ms,
                                           double negative_floor) {
  if (ts.size() < 2) {
    throw std::invalid_argument("policy CSV needs at least two grid rows per process");
  }
  double dt = ts[1] - ts[0];
  if (!(dt > 0.0)) throw std::invalid_argument("policy CSV times must be increasing");
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (std::abs(ts[i] - ts[i - 1] - dt) > 1e-9) {
      throw std::invalid_argument("policy CSV times must form a uniform grid");
    }
  }
  TimeGrid grid(ts[0], dt, static_cast<int>(ts.size()));
  std::vector<double> rates = ms;
  for (double& r : rates) {
    if (r < 0.0) {
      if (r < -negative_floor) {
        throw std::invalid_argument("policy CSV has a negative rate");
      }
      r = 0.0;
    }
  }
  return ArrivalProcess(grid, std::move(rates));
}

}  // namespace detail

// Reads "tau,t,m" rows grouped by tau. Rates within negative_floor of zero
// are clamped (solver output can carry sub-tolerance negatives).
inline std::vector<PolicyCsvEntry> read_policy_csv(std::istream& is,
                                                   double negative_floor = 1e-6) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty policy CSV");
  auto header = detail::split_csv_line(line);
  if (header.size() != 3 || header[0] != "tau" || header[1] != "t" || header[2] != "m") {
    throw std::invalid_argument("policy CSV header must be 'tau,t,m'");
  }
  std::vector<PolicyCsvEntry> entries;
  std::vector<double> ts, ms;
  bool have_tau = false;
  double current_tau = 0.0;
  int line_no = 1;
  auto flush = [&]() {
    if (!have_tau) return;
    entries.push_back(PolicyCsvEntry{
        current_tau, detail::process_from_samples(ts, ms, negative_floor)});
    ts.clear();
    ms.clear();
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) {
      throw std::invalid_argument("policy CSV line " + std::to_string(line_no) +
                                  " does not have 3 fields");
    }
    double tau, t, m;
    try {
      tau = std::stod(fields[0]);
      t = std::stod(fields[1]);
      m = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw std::invalid_argument("policy CSV line " + std::to_string(line_no) +
                                  " is not numeric");
    }
    if (!have_tau || std::abs(tau - current_tau) > 1e-12) {
      flush();
      have_tau = true;
      current_tau = tau;
    }
    ts.push_back(t);
    ms.push_back(m);
  }
  flush();
  if (entries.empty()) throw std::invalid_argument("policy CSV has no data rows");
  return entries;
}

// Reads a "t,m" density table.
inline ArrivalProcess read_density_csv(std::istream& is, double negative_floor = 1e-6) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty density CSV");
  auto header = detail::split_csv_line(line);
  if (header.size() != 2 || header[0] != "t" || header[1] != "m") {
    throw std::invalid_argument("density CSV header must be 't,m'");
  }
  std::vector<double> ts, ms;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 2) {
      throw std::invalid_argument("density CSV line " + std::to_string(line_no) +
                                  " does not have 2 fields");
    }
    ts.push_back(std::stod(fields[0]));
    ms.push_back(std::stod(fields[1]));
  }
  return detail::process_from_samples(ts, ms, negative_floor);
}

}  // namespace qsched
