#pragma once

#include <cmath>
#include <vector>

namespace qsched {

struct BracketedRoot {
  double x;
  double fx;
  int iterations;
};

// Scans [lo, hi] on a uniform lattice for sign changes, then bisects each
// bracket until |f| < ftol or the iteration cap. Exact lattice zeros are
// reported directly. Returns every root found, in increasing order.
template <typename Fn>
std::vector<BracketedRoot> scan_and_bisect(Fn&& f, double lo, double hi,
                                           int samples = 10000, double ftol = 1e-12,
                                           int max_iter = 200) {
  std::vector<BracketedRoot> roots;
  if (!(hi > lo) || samples < 2) return roots;
  double step = (hi - lo) / static_cast<double>(samples);
  double xa = lo;
  double fa = f(xa);
  for (int i = 1; i <= samples; ++i) {
    double xb = (i == samples) ? hi : lo + step * i;
    double fb = f(xb);
    if (fa == 0.0) {
      if (roots.empty() || roots.back().x < xa - 0.5 * step) {
        roots.push_back(BracketedRoot{xa, fa, 0});
      }
    } else if (fa * fb < 0.0) {
      double a = xa, b = xb, va = fa;
      double mid = a, vm = va;
      int it = 0;
      for (; it < max_iter; ++it) {
        mid = 0.5 * (a + b);
        vm = f(mid);
        if (std::abs(vm) < ftol) break;
        if (va * vm < 0.0) {
          b = mid;
        } else {
          a = mid;
          va = vm;
        }
      }
      roots.push_back(BracketedRoot{mid, vm, it});
    }
    xa = xb;
    fa = fb;
  }
  if (fa == 0.0 && (roots.empty() || roots.back().x < hi - 0.5 * step)) {
    roots.push_back(BracketedRoot{hi, fa, 0});
  }
  return roots;
}

}  // namespace qsched
