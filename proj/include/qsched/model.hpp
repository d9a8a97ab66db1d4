#pragma once

// Game primitives for the service-scheduling model: time grids, arrival
// processes, priors, queue dynamics, agent/social costs, and the average-cost
// machinery behind the obedience condition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace qsched {

inline constexpr double kMassTol = 1e-6;
inline constexpr double kRateTol = 1e-12;
inline constexpr double kSupportEps = 1e-12;

struct ExponentialPrior {
  double lambda = 1.0;
};

struct DiscretePrior {
  std::vector<double> points;   // strictly increasing, >= 0
  std::vector<double> weights;  // strictly positive, sum to 1
};

using TauPrior = std::variant<ExponentialPrior, DiscretePrior>;

inline void validate_prior(const TauPrior& prior) {
  if (const auto* e = std::get_if<ExponentialPrior>(&prior)) {
    if (!(e->lambda > 0.0)) {
      throw std::invalid_argument("exponential prior requires lambda > 0");
    }
    return;
  }
  const auto& d = std::get<DiscretePrior>(prior);
  if (d.points.empty() || d.points.size() != d.weights.size()) {
    throw std::invalid_argument("discrete prior needs matching nonempty points/weights");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < d.points.size(); ++k) {
    if (!(d.points[k] >= 0.0)) {
      throw std::invalid_argument("discrete prior point must be >= 0");
    }
    if (k > 0 && !(d.points[k] > d.points[k - 1])) {
      throw std::invalid_argument("discrete prior points must be strictly increasing");
    }
    if (!(d.weights[k] > 0.0)) {
      throw std::invalid_argument("discrete prior weights must be strictly positive");
    }
    sum += d.weights[k];
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("discrete prior weights must sum to 1 (got " +
                                std::to_string(sum) + ")");
  }
}

inline DiscretePrior uniform_discrete_prior(const std::vector<double>& points) {
  DiscretePrior d;
  d.points = points;
  d.weights.assign(points.size(), 1.0 / static_cast<double>(points.size()));
  // make the weights sum to 1 exactly enough for validation
  double sum = 0.0;
  for (double w : d.weights) sum += w;
  for (double& w : d.weights) w /= sum;
  return d;
}

// Service rate mu in (0,1), normalized cost weight c in (0,1], and the prior
// over the service start time.
struct ModelParams {
  double mu;
  double c;
  TauPrior prior;

  ModelParams(double mu_, double c_, TauPrior prior_)
      : mu(mu_), c(c_), prior(std::move(prior_)) {
    if (!(mu > 0.0 && mu < 1.0)) {
      throw std::invalid_argument("mu must lie in (0,1), got " + std::to_string(mu));
    }
    if (!(c > 0.0 && c <= 1.0)) {
      throw std::invalid_argument("c must lie in (0,1], got " + std::to_string(c));
    }
    validate_prior(prior);
  }

  const DiscretePrior& discrete_prior() const {
    const auto* d = std::get_if<DiscretePrior>(&prior);
    if (d == nullptr) {
      throw std::invalid_argument("operation requires a discrete prior");
    }
    return *d;
  }

  const ExponentialPrior& exponential_prior() const {
    const auto* e = std::get_if<ExponentialPrior>(&prior);
    if (e == nullptr) {
      throw std::invalid_argument("operation requires an exponential prior");
    }
    return *e;
  }
};

// Uniform grid t_i = t0 + i*dt, i = 0..n-1. t0 may be negative.
class TimeGrid {
 public:
  TimeGrid(double t0, double dt, int n) : t0_(t0), dt_(dt), n_(n) {
    if (!(dt > 0.0)) throw std::invalid_argument("grid step must be positive");
    if (n < 1) throw std::invalid_argument("grid needs at least one point");
  }

  double t0() const { return t0_; }
  double dt() const { return dt_; }
  int size() const { return n_; }
  double point(int i) const { return t0_ + static_cast<double>(i) * dt_; }
  double front() const { return t0_; }
  double back() const { return point(n_ - 1); }

  // Index of the last grid point <= t (left-endpoint rule), or -1 if t < t0.
  int floor_index(double t) const {
    if (t < t0_ - 1e-9 * dt_) return -1;
    double u = (t - t0_) / dt_ + 1e-7;
    int i = static_cast<int>(std::floor(u));
    if (i < 0) return -1;
    return std::min(i, n_ - 1);
  }

  // Index of the grid point coinciding with t, or -1. The tolerance covers
  // fixed-decimal round-tripped times without swallowing neighbours.
  int atom_index(double t) const {
    double u = (t - t0_) / dt_;
    int i = static_cast<int>(std::lround(u));
    if (i < 0 || i >= n_) return -1;
    if (std::abs(t - point(i)) > std::min(0.25 * dt_, 1e-6)) return -1;
    return i;
  }

  bool same_as(const TimeGrid& other, double tol = 1e-12) const {
    return n_ == other.n_ && std::abs(t0_ - other.t0_) <= tol &&
           std::abs(dt_ - other.dt_) <= tol;
  }

 private:
  double t0_;
  double dt_;
  int n_;
};

// A discretized arrival measure: nonnegative rate at each grid point, the
// atom at t_i carrying mass rates[i]*dt. Immutable value type; cumulative
// mass follows the left-endpoint rule sum_{t_i <= t} rates[i]*dt and is
// extended constantly outside the grid.
class ArrivalProcess {
 public:
  ArrivalProcess(TimeGrid grid, std::vector<double> rates)
      : grid_(grid), rates_(std::move(rates)) {
    if (static_cast<int>(rates_.size()) != grid_.size()) {
      throw std::invalid_argument("rate vector length must match the grid");
    }
    prefix_.resize(rates_.size());
    double acc = 0.0;
    max_rate_ = 0.0;
    max_rate_index_ = 0;
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      if (!(rates_[i] >= 0.0)) {
        throw std::invalid_argument("arrival rate must be nonnegative at grid index " +
                                    std::to_string(i));
      }
      acc += rates_[i] * grid_.dt();
      prefix_[i] = acc;
      if (rates_[i] > max_rate_) {
        max_rate_ = rates_[i];
        max_rate_index_ = static_cast<int>(i);
      }
    }
  }

  const TimeGrid& grid() const { return grid_; }
  const std::vector<double>& rates() const { return rates_; }
  double rate(int i) const { return rates_[static_cast<std::size_t>(i)]; }
  double mass() const { return prefix_.empty() ? 0.0 : prefix_.back(); }
  bool unit_mass(double tol = kMassTol) const { return std::abs(mass() - 1.0) <= tol; }

  double cumulative(double t) const {
    int i = grid_.floor_index(t);
    return i < 0 ? 0.0 : prefix_[static_cast<std::size_t>(i)];
  }

  double cumulative_at_index(int i) const {
    return i < 0 ? 0.0 : prefix_[static_cast<std::size_t>(std::min(i, grid_.size() - 1))];
  }

  double rate_at(double t) const {
    int i = grid_.atom_index(t);
    return i < 0 ? 0.0 : rates_[static_cast<std::size_t>(i)];
  }

  double max_rate() const { return max_rate_; }
  int max_rate_index() const { return max_rate_index_; }

 private:
  TimeGrid grid_;
  std::vector<double> rates_;
  std::vector<double> prefix_;
  double max_rate_;
  int max_rate_index_;
};

// q_{tau,m}(t): arrivals so far minus service delivered since tau. Raw
// formula; it may go negative on processes that leave the server idle
// (see find_assumption_c_violation).
inline double queue_length(const ArrivalProcess& m, double mu, double tau, double t) {
  return m.cumulative(t) - mu * std::max(t - tau, 0.0);
}

struct QueueViolation {
  double time;
  double value;
};

// Scans the grid for raw queue values below -tol: a busy-server violation
// (the process leaves capacity unused while agents are still to arrive).
inline std::optional<QueueViolation> find_assumption_c_violation(
    const ArrivalProcess& m, double mu, double tau, double tol = 1e-9) {
  const TimeGrid& g = m.grid();
  int last = -1;
  for (int i = g.size() - 1; i >= 0; --i) {
    if (m.rate(i) > 0.0) {
      last = i;
      break;
    }
  }
  if (last < 0) return std::nullopt;
  // Queue drains linearly between atoms, so the minimum over each cell sits
  // just before the next atom; checking atom values and pre-atom limits over
  // the arrival span covers the interval [t_0, t_last].
  for (int i = 0; i <= last; ++i) {
    double q = queue_length(m, mu, tau, g.point(i));
    if (q < -tol) return QueueViolation{g.point(i), q};
    if (i < last) {
      double t_next = g.point(i + 1);
      double q_limit = m.cumulative_at_index(i) - mu * std::max(t_next - tau, 0.0);
      if (q_limit < -tol) return QueueViolation{t_next, q_limit};
    }
  }
  return std::nullopt;
}

// Threshold start time below which the queue at t is empty; closed form
// (t - cumulative(t)/mu)^+, which also returns 0 for t < 0.
inline double tilde_tau(const ArrivalProcess& m, double mu, double t) {
  if (m.max_rate() > mu + kRateTol) {
    std::ostringstream msg;
    msg << "arrival rate exceeds service rate at grid index " << m.max_rate_index()
        << " (t=" << m.grid().point(m.max_rate_index()) << ", rate=" << m.max_rate()
        << ", mu=" << mu << ")";
    throw std::invalid_argument(msg.str());
  }
  return std::max(t - m.cumulative(t) / mu, 0.0);
}

// c_{tau,m}(t) = q/mu + (t-tau)^+ - c*(t-tau).
inline double agent_cost(const ArrivalProcess& m, double mu, double c, double tau,
                         double t) {
  return queue_length(m, mu, tau, t) / mu + std::max(t - tau, 0.0) - c * (t - tau);
}

// s(tau,m) = sum_i rates[i] * c_{tau,m}(t_i) * dt over a unit-mass process.
inline double social_cost(const ArrivalProcess& m, double mu, double c, double tau) {
  if (!m.unit_mass()) {
    throw std::invalid_argument("social_cost needs a unit-mass process (mass=" +
                                std::to_string(m.mass()) + ")");
  }
  const TimeGrid& g = m.grid();
  double total = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    if (m.rate(i) == 0.0) continue;
    total += m.rate(i) * agent_cost(m, mu, c, tau, g.point(i)) * g.dt();
  }
  return total;
}

struct PolicyComponent {
  double weight;
  ArrivalProcess process;
};

using Mixture = std::vector<PolicyComponent>;

// A direct signaling strategy. Either keyed per discrete service-start point
// (one mixture per tau_k) or uniform (a single mixture used whatever tau is,
// as in the no-information benchmark).
class SignalingPolicy {
 public:
  static SignalingPolicy uniform(ArrivalProcess m, double mass_tol = kMassTol) {
    Mixture mix;
    mix.push_back(PolicyComponent{1.0, std::move(m)});
    return SignalingPolicy({}, {std::move(mix)}, mass_tol);
  }

  static SignalingPolicy uniform_mixture(Mixture mix, double mass_tol = kMassTol) {
    return SignalingPolicy({}, {std::move(mix)}, mass_tol);
  }

  static SignalingPolicy keyed(std::vector<double> taus, std::vector<Mixture> mixtures,
                               double mass_tol = kMassTol) {
    if (taus.empty() || taus.size() != mixtures.size()) {
      throw std::invalid_argument("keyed policy needs one mixture per tau");
    }
    return SignalingPolicy(std::move(taus), std::move(mixtures), mass_tol);
  }

  static SignalingPolicy keyed_deterministic(std::vector<double> taus,
                                             std::vector<ArrivalProcess> processes,
                                             double mass_tol = kMassTol) {
    std::vector<Mixture> mixtures;
    mixtures.reserve(processes.size());
    for (auto& p : processes) {
      Mixture mix;
      mix.push_back(PolicyComponent{1.0, std::move(p)});
      mixtures.push_back(std::move(mix));
    }
    return keyed(std::move(taus), std::move(mixtures), mass_tol);
  }

  bool is_keyed() const { return !taus_.empty(); }
  const std::vector<double>& taus() const { return taus_; }
  std::size_t mixture_count() const { return mixtures_.size(); }

  const Mixture& mixture_for_index(std::size_t k) const {
    if (!is_keyed()) return mixtures_.front();
    return mixtures_.at(k);
  }

  // Matches policy keys against a discrete prior; throws naming the missing
  // point if the policy has no entry for it.
  void require_covers(const DiscretePrior& prior) const {
    if (!is_keyed()) return;
    if (taus_.size() != prior.points.size()) {
      throw std::invalid_argument("policy covers " + std::to_string(taus_.size()) +
                                  " service-start points, prior has " +
                                  std::to_string(prior.points.size()));
    }
    for (std::size_t k = 0; k < taus_.size(); ++k) {
      if (std::abs(taus_[k] - prior.points[k]) > 1e-9) {
        throw std::invalid_argument("policy has no entry for prior point tau=" +
                                    std::to_string(prior.points[k]));
      }
    }
  }

  // All atom times carrying positive suggested density, sorted and deduped.
  std::vector<double> support_times(double rate_floor = 0.0) const {
    std::vector<double> times;
    for (const auto& mix : mixtures_) {
      for (const auto& comp : mix) {
        const TimeGrid& g = comp.process.grid();
        for (int i = 0; i < g.size(); ++i) {
          if (comp.process.rate(i) > rate_floor) times.push_back(g.point(i));
        }
      }
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                times.end());
    return times;
  }

  double max_component_rate() const {
    double r = 0.0;
    for (const auto& mix : mixtures_) {
      for (const auto& comp : mix) r = std::max(r, comp.process.max_rate());
    }
    return r;
  }

 private:
  SignalingPolicy(std::vector<double> taus, std::vector<Mixture> mixtures,
                  double mass_tol)
      : taus_(std::move(taus)), mixtures_(std::move(mixtures)) {
    if (mixtures_.empty()) throw std::invalid_argument("policy needs at least one mixture");
    for (const auto& mix : mixtures_) {
      if (mix.empty()) throw std::invalid_argument("empty mixture in policy");
      double wsum = 0.0;
      for (const auto& comp : mix) {
        if (!(comp.weight >= 0.0)) {
          throw std::invalid_argument("mixture weights must be nonnegative");
        }
        if (!comp.process.unit_mass(mass_tol)) {
          throw std::invalid_argument(
              "policy component must carry unit mass (mass=" +
              std::to_string(comp.process.mass()) + ")");
        }
        wsum += comp.weight;
      }
      if (std::abs(wsum - 1.0) > 1e-9) {
        throw std::invalid_argument("mixture weights must sum to 1");
      }
    }
  }

  std::vector<double> taus_;       // empty => uniform policy
  std::vector<Mixture> mixtures_;  // size 1 when uniform
};

namespace detail {

// Weight of the posterior numerator f(tau_k) * pi(m_j|tau_k) * m_j(t),
// enumerated over the discrete prior.
template <typename Fn>
void for_each_component(const SignalingPolicy& policy, const DiscretePrior& prior,
                        Fn&& fn) {
  policy.require_covers(prior);
  for (std::size_t k = 0; k < prior.points.size(); ++k) {
    const Mixture& mix = policy.mixture_for_index(policy.is_keyed() ? k : 0);
    for (const auto& comp : mix) {
      fn(prior.weights[k], prior.points[k], comp.weight, comp.process);
    }
  }
}

inline double suggested_density(const SignalingPolicy& policy, const ModelParams& params,
                                double t) {
  double mbar = 0.0;
  if (const auto* d = std::get_if<DiscretePrior>(&params.prior)) {
    for_each_component(policy, *d, [&](double f, double, double w, const ArrivalProcess& m) {
      mbar += f * w * m.rate_at(t);
    });
  } else {
    if (policy.is_keyed()) {
      throw std::invalid_argument("exponential prior requires a uniform policy");
    }
    for (const auto& comp : policy.mixture_for_index(0)) {
      mbar += comp.weight * comp.process.rate_at(t);
    }
  }
  return mbar;
}

inline void require_supported(double mbar, double t) {
  if (mbar <= 1e-12) {
    throw std::invalid_argument("unsupported suggestion: no density at t=" +
                                std::to_string(t));
  }
}

}  // namespace detail

// Average density of suggestion t under the policy, \bar m(t).
inline double mean_suggested_rate(const SignalingPolicy& policy, const ModelParams& params,
                                  double t) {
  return detail::suggested_density(policy, params, t);
}

// Average cost of deviating to s after being suggested t. Splits the
// start-time integral at tilde_tau per component: starts at or below it mean
// an empty queue at s, later starts keep the queue formula.
inline double average_cost(const SignalingPolicy& policy, const ModelParams& params,
                           double t, double s) {
  const double mu = params.mu;
  const double c = params.c;
  double mbar = detail::suggested_density(policy, params, t);
  detail::require_supported(mbar, t);

  double acc = 0.0;
  double tau_mean_acc = 0.0;
  if (const auto* d = std::get_if<DiscretePrior>(&params.prior)) {
    detail::for_each_component(
        policy, *d, [&](double f, double tau, double w, const ArrivalProcess& m) {
          double weight = f * w * m.rate_at(t);
          if (weight == 0.0) return;
          double tt = tilde_tau(m, mu, s);
          if (tau <= tt) {
            acc += weight * ((1.0 - c) * s - tau);
          } else {
            acc += weight * (m.cumulative(s) - mu * c * s) / mu;
          }
          tau_mean_acc += weight * tau;
        });
  } else {
    const double lambda = params.exponential_prior().lambda;
    if (policy.is_keyed()) {
      throw std::invalid_argument("exponential prior requires a uniform policy");
    }
    for (const auto& comp : policy.mixture_for_index(0)) {
      double weight = comp.weight * comp.process.rate_at(t);
      if (weight == 0.0) continue;
      double tt = tilde_tau(comp.process, mu, s);
      double tail = std::exp(-lambda * tt);  // P(tau > tilde)
      double queue_branch = (comp.process.cumulative(s) - mu * c * s) / mu;
      // E[tau ; tau <= tilde] = (1 - e^{-lambda tilde}(1 + lambda tilde))/lambda
      double tau_below = (1.0 - tail * (1.0 + lambda * tt)) / lambda;
      acc += weight * (tail * queue_branch + (1.0 - c) * s * (1.0 - tail) - tau_below);
      tau_mean_acc += weight / lambda;
    }
  }
  return acc / mbar + c * (tau_mean_acc / mbar);
}

// d/ds of average_cost: (1/mbar)[sum_{tau<=tilde} w + sum_{tau>tilde} w m(s)/mu] - c.
inline double average_cost_derivative(const SignalingPolicy& policy,
                                      const ModelParams& params, double t, double s) {
  const double mu = params.mu;
  const double c = params.c;
  double mbar = detail::suggested_density(policy, params, t);
  detail::require_supported(mbar, t);

  double acc = 0.0;
  if (const auto* d = std::get_if<DiscretePrior>(&params.prior)) {
    detail::for_each_component(
        policy, *d, [&](double f, double tau, double w, const ArrivalProcess& m) {
          double weight = f * w * m.rate_at(t);
          if (weight == 0.0) return;
          double tt = tilde_tau(m, mu, s);
          acc += (tau <= tt) ? weight : weight * m.rate_at(s) / mu;
        });
  } else {
    const double lambda = params.exponential_prior().lambda;
    if (policy.is_keyed()) {
      throw std::invalid_argument("exponential prior requires a uniform policy");
    }
    for (const auto& comp : policy.mixture_for_index(0)) {
      double weight = comp.weight * comp.process.rate_at(t);
      if (weight == 0.0) continue;
      double tt = tilde_tau(comp.process, mu, s);
      double tail = std::exp(-lambda * tt);
      acc += weight * ((1.0 - tail) + tail * comp.process.rate_at(s) / mu);
    }
  }
  return acc / mbar - c;
}

// Prior-averaged social cost of a signaling policy. Discrete priors only;
// the policy must cover every prior point.
inline double expected_social_cost(const SignalingPolicy& policy,
                                   const ModelParams& params) {
  const DiscretePrior& prior = params.discrete_prior();
  policy.require_covers(prior);
  double total = 0.0;
  for (std::size_t k = 0; k < prior.points.size(); ++k) {
    const Mixture& mix = policy.mixture_for_index(policy.is_keyed() ? k : 0);
    for (const auto& comp : mix) {
      total += prior.weights[k] * comp.weight *
               social_cost(comp.process, params.mu, params.c, prior.points[k]);
    }
  }
  return total;
}

}  // namespace qsched
