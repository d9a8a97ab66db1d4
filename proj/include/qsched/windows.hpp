#pragma once

// Per-start-time support windows [t_lower, t_upper), anchored a fixed offset
// left of the full-information window and monotone in tau.

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "qsched/model.hpp"

namespace qsched {

struct SupportWindow {
  double tau;
  double lower;     // t_lower
  double upper;     // t_upper, window is [lower, upper)
  int first_index;  // first grid index inside the window
  int count;        // number of grid points in [lower, upper)

  bool covers_index(int i) const { return i >= first_index && i < first_index + count; }
  double span() const { return upper - lower; }
};

struct WindowBounds {
  double tau;
  double lower;
  double upper;
};

// t_lower = tau - (1-c)/(mu c) - left_ext, t_upper = t_lower + span.
// Monotonicity in tau is inherited from the strictly increasing prior points.
inline std::vector<WindowBounds> window_bounds(const DiscretePrior& prior, double mu,
                                               double c, double span, double left_ext) {
  std::vector<WindowBounds> bounds;
  bounds.reserve(prior.points.size());
  for (double tau : prior.points) {
    double lower = tau - (1.0 - c) / (mu * c) - left_ext;
    bounds.push_back(WindowBounds{tau, lower, lower + span});
  }
  return bounds;
}

// Smallest grid on the dt-lattice through anchor covering every window.
inline TimeGrid covering_grid(const std::vector<WindowBounds>& bounds, double dt,
                              double anchor = 0.0) {
  if (bounds.empty()) throw std::invalid_argument("no windows to cover");
  double lo = bounds.front().lower;
  double hi = bounds.front().upper;
  for (const auto& b : bounds) {
    lo = std::min(lo, b.lower);
    hi = std::max(hi, b.upper);
  }
  double t0 = anchor + std::floor((lo - anchor) / dt + 1e-9) * dt;
  int n = static_cast<int>(std::ceil((hi - t0) / dt - 1e-9));
  return TimeGrid(t0, dt, std::max(n, 1));
}

inline std::vector<SupportWindow> build_windows(const DiscretePrior& prior, double mu,
                                                double c, double span, double left_ext,
                                                const TimeGrid& grid) {
  if (!(span >= grid.dt() - 1e-12)) {
    throw std::invalid_argument("window span must be at least one grid cell");
  }
  const double dt = grid.dt();
  std::vector<SupportWindow> windows;
  windows.reserve(prior.points.size());
  for (const auto& b : window_bounds(prior, mu, c, span, left_ext)) {
    int first = static_cast<int>(std::ceil((b.lower - grid.t0()) / dt - 1e-9));
    int past = static_cast<int>(std::ceil((b.upper - grid.t0()) / dt - 1e-9));
    int count = past - first;
    if (first < 0 || count < 1 || first + count > grid.size()) {
      std::ostringstream msg;
      msg << "grid [" << grid.front() << ", " << grid.back() << "] does not cover window ["
          << b.lower << ", " << b.upper << ") for tau=" << b.tau;
      throw std::invalid_argument(msg.str());
    }
    windows.push_back(SupportWindow{b.tau, b.lower, b.upper, first, count});
  }
  return windows;
}

// Indices of windows covering grid point i ({k : t_i in [lower_k, upper_k)}).
inline std::vector<int> covering_windows(const std::vector<SupportWindow>& windows,
                                         int grid_index) {
  std::vector<int> ks;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (windows[k].covers_index(grid_index)) ks.push_back(static_cast<int>(k));
  }
  return ks;
}

}  // namespace qsched
