#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "scalelab/error.hpp"
#include "scalelab/estimator.hpp"
#include "scalelab/normal.hpp"

namespace scalelab {

/// Practical scaling restrictions: decisions every h minutes, one scaling
/// batch of up to s nodes every tau minutes, node count kept in
/// [x_min, x_max]. The per-interval ramp limit is R = floor(h/tau)*s.
struct ScalingLimits {
  int h = 30;
  int tau = 5;
  int s = 4;
  int x_min = 1;
  int x_max = 1;

  int ramp() const { return (h / tau) * s; }

  void validate() const {
    if (h < 1 || tau < 1 || s < 1) throw ConfigError("limits: h, tau, s must be >= 1");
    if (x_min > x_max) throw ConfigError("limits: x_min > x_max");
    if (ramp() < 1) throw ConfigError("limits: ramp (h/tau)*s must be >= 1");
  }
};

/// One receding-horizon planning instance: initial node count, per-interval
/// workload peak forecasts (D+1 of them), the target utilization, the
/// chance level, and a snapshot of the CPU estimator.
struct MpcProblem {
  int x0 = 1;
  int horizon = 1;                         // D
  std::vector<std::vector<double>> peaks;  // y^1..y^{D+1}, each R^N
  double c_star = 0.5;
  double alpha = 0.95;
  CpuEstimator estimator;

  void validate(const ScalingLimits& limits) const {
    limits.validate();
    if (horizon < 1) throw ConfigError("mpc: horizon must be >= 1");
    if (x0 < limits.x_min || x0 > limits.x_max) throw ConfigError("mpc: x0 outside node bounds");
    if (!(c_star > 0.0 && c_star < 1.0)) throw ConfigError("mpc: c_star must be in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("mpc: alpha must be in (0,1)");
    if (peaks.size() != static_cast<std::size_t>(horizon) + 1) {
      throw ConfigError("mpc: need D+1 peak vectors");
    }
    for (const auto& y : peaks) {
      if (y.size() != estimator.n_lras()) throw ConfigError("mpc: peak dimension mismatch");
      for (double v : y) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("mpc: peaks must be non-negative and finite");
      }
    }
    estimator.validate();
    const double denom = c_star - estimator.w_b - normal_quantile(alpha) * estimator.sigma_b;
    if (denom <= 0.0) {
      throw ConfigError("mpc: c_star must exceed w_b + psi^-1(alpha)*sigma_b (denominator positivity)");
    }
  }
};

/// Solved schedule. x and u are real-valued: only the rounded first action
/// is deployed. `softened_intervals` (1-based) marks intervals whose
/// chance-constraint lower bound was unreachable under the ramp limit and
/// was served best-effort at maximum scaling speed; `feasible` is false
/// when a bound exceeds x_max outright.
struct MpcPlan {
  std::vector<double> x;  // x^1..x^D
  std::vector<double> u;  // u^1..u^D
  std::vector<double> m;  // combined-load scalars m^1..m^D
  std::vector<double> lower;  // L^1..L^D
  bool feasible = true;
  std::set<int> softened_intervals;

  double objective() const {
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) acc += m[d] / x[d];
    return acc;
  }
};

/// m^d = max_{j in {d, d+1}} (psi^-1(alpha)*sigma_k + w_k)' y^j.
/// Indexing: peaks[0] is y^1. The max over the adjacent interval makes the
/// provisioned count cover the next interval's peak while a scaling action
/// is still in flight.
inline std::vector<double> compute_m(const CpuEstimator& est,
                                     const std::vector<std::vector<double>>& peaks,
                                     double alpha) {
  if (peaks.size() < 2) throw ConfigError("compute_m: need at least 2 peak vectors");
  const double psi = normal_quantile(alpha);
  const std::size_t D = peaks.size() - 1;
  std::vector<double> m(D);
  auto load = [&](const std::vector<double>& y) {
    if (y.size() != est.w_k.size()) throw ConfigError("compute_m: peak dimension mismatch");
    double acc = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) acc += (psi * est.sigma_k[n] + est.w_k[n]) * y[n];
    return acc;
  };
  for (std::size_t d = 0; d < D; ++d) m[d] = std::max(load(peaks[d]), load(peaks[d + 1]));
  return m;
}

/// L^d = m^d / (c_star - w_b - psi^-1(alpha)*sigma_b): the node count below
/// which the chance constraint P(c <= c_star) >= alpha cannot hold.
inline std::vector<double> lower_bounds(const std::vector<double>& m, double c_star,
                                        const CpuEstimator& est, double alpha) {
  const double denom = c_star - est.w_b - normal_quantile(alpha) * est.sigma_b;
  if (denom <= 0.0) {
    throw ConfigError("lower_bounds: non-positive denominator; raise c_star or fix estimator");
  }
  std::vector<double> L(m.size());
  for (std::size_t d = 0; d < m.size(); ++d) L[d] = m[d] / denom;
  return L;
}

/// Exact structured solver. The reformulated problem maximizes
/// sum_d m^d / x^d with every term non-increasing in x^d, so the
/// componentwise-minimal feasible schedule is optimal. It is found by a
/// backward pass building effective bounds
///   Lambda^d = max(L^d, x_min, min(Lambda^{d+1}, x_max) - R)
/// and a forward pass x^d = max(Lambda^d, x^{d-1} - R). The propagated
/// requirement is capped at x_max: a later interval can never sit above
/// x_max, so earlier intervals only need to keep it reachable. A forward
/// step that cannot reach its bound under the up-ramp is softened to
/// x^d = min(x_max, x^{d-1} + R) and flagged; a bound above x_max marks
/// the plan infeasible while still returning the best-effort schedule.
inline MpcPlan solve_mpc(const MpcProblem& problem, const ScalingLimits& limits) {
  problem.validate(limits);
  const int D = problem.horizon;
  const double R = limits.ramp();
  const double x_min = limits.x_min;
  const double x_max = limits.x_max;

  MpcPlan plan;
  plan.m = compute_m(problem.estimator, problem.peaks, problem.alpha);
  plan.lower = lower_bounds(plan.m, problem.c_star, problem.estimator, problem.alpha);

  std::vector<double> bound(static_cast<std::size_t>(D));
  for (int d = D - 1; d >= 0; --d) {
    double lam = std::max(plan.lower[static_cast<std::size_t>(d)], x_min);
    if (d + 1 < D) lam = std::max(lam, std::min(bound[static_cast<std::size_t>(d) + 1], x_max) - R);
    bound[static_cast<std::size_t>(d)] = lam;
  }

  plan.x.resize(static_cast<std::size_t>(D));
  plan.u.resize(static_cast<std::size_t>(D));
  double prev = problem.x0;
  for (int d = 0; d < D; ++d) {
    double x = std::max(bound[static_cast<std::size_t>(d)], prev - R);
    if (x > std::min(x_max, prev + R)) {
      x = std::min(x_max, prev + R);
      plan.softened_intervals.insert(d + 1);
      if (plan.lower[static_cast<std::size_t>(d)] > x_max) plan.feasible = false;
    }
    plan.x[static_cast<std::size_t>(d)] = x;
    plan.u[static_cast<std::size_t>(d)] = x - prev;
    prev = x;
  }
  return plan;
}

/// Deployable first action: ceil the planned x^1 (never dipping below the
/// chance-constraint bound), then clamp the delta to the ramp and the
/// resulting count to the node bounds.
inline int round_first_action(const MpcPlan& plan, int x0, const ScalingLimits& limits) {
  if (plan.x.empty()) throw InvariantError("round_first_action: empty plan");
  const int R = limits.ramp();
  int target = static_cast<int>(std::ceil(plan.x.front()));
  int u = std::clamp(target - x0, -R, R);
  const int landed = std::clamp(x0 + u, limits.x_min, limits.x_max);
  return landed - x0;
}

/// Exhaustive integer DP oracle for small instances. Independent of
/// solve_mpc: it enumerates node counts in [x_min, x_max] maximizing the
/// lexicographic value (minimal total bound shortfall, maximal
/// sum m^d/x^d, componentwise-smallest schedule), which is the same
/// soft-tier comparison rule solve_mpc realizes. Guarded to D <= 4 and a
/// node range of <= 80 for tractability.
inline MpcPlan brute_force_oracle(const MpcProblem& problem, const ScalingLimits& limits) {
  problem.validate(limits);
  const int D = problem.horizon;
  const int range = limits.x_max - limits.x_min;
  if (D > 4 || range > 80) throw ConfigError("brute_force_oracle: guard exceeded (D <= 4, range <= 80)");

  MpcPlan plan;
  plan.m = compute_m(problem.estimator, problem.peaks, problem.alpha);
  plan.lower = lower_bounds(plan.m, problem.c_star, problem.estimator, problem.alpha);

  const int R = limits.ramp();
  const int n_states = range + 1;
  const double kInf = std::numeric_limits<double>::infinity();

  struct Cell {
    double shortfall = 0.0;
    double objective = 0.0;
    int next = -1;  // chosen state index at the following stage
  };
  // value[d][i]: best suffix starting at interval d+1 given x^d = x_min + i.
  std::vector<std::vector<Cell>> value(static_cast<std::size_t>(D) + 1,
                                       std::vector<Cell>(static_cast<std::size_t>(n_states)));

  for (int d = D - 1; d >= 0; --d) {
    for (int i = 0; i < n_states; ++i) {
      // i indexes the PREVIOUS count x^{d} ... at stage d it is x^{d-1}.
      Cell best;
      best.shortfall = kInf;
      best.objective = -kInf;
      const int prev_x = limits.x_min + i;
      for (int j = std::max(0, i - R); j < n_states && j <= i + R; ++j) {
        const int x = limits.x_min + j;
        const double need = plan.lower[static_cast<std::size_t>(d)];
        const double short_here = std::max(0.0, std::ceil(need) - static_cast<double>(x));
        const double obj_here = plan.m[static_cast<std::size_t>(d)] / static_cast<double>(x);
        const Cell& suffix = value[static_cast<std::size_t>(d) + 1][static_cast<std::size_t>(j)];
        const double sf = short_here + suffix.shortfall;
        const double ob = obj_here + suffix.objective;
        // Lexicographic: min shortfall, then max objective, then smallest x.
        const bool better = sf < best.shortfall - 1e-12 ||
                            (std::abs(sf - best.shortfall) <= 1e-12 && ob > best.objective + 1e-12);
        if (better) {
          best.shortfall = sf;
          best.objective = ob;
          best.next = j;
        }
      }
      (void)prev_x;
      value[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)] = best;
    }
  }

  plan.x.resize(static_cast<std::size_t>(D));
  plan.u.resize(static_cast<std::size_t>(D));
  int state = problem.x0 - limits.x_min;
  double prev_x = problem.x0;
  for (int d = 0; d < D; ++d) {
    state = value[static_cast<std::size_t>(d)][static_cast<std::size_t>(state)].next;
    const double x = limits.x_min + state;
    plan.x[static_cast<std::size_t>(d)] = x;
    plan.u[static_cast<std::size_t>(d)] = x - prev_x;
    if (x + 1e-9 < std::ceil(plan.lower[static_cast<std::size_t>(d)])) {
      plan.softened_intervals.insert(d + 1);
      if (plan.lower[static_cast<std::size_t>(d)] > limits.x_max) plan.feasible = false;
    }
    prev_x = x;
  }
  return plan;
}

}  // namespace scalelab
