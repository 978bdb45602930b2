#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "scalelab/estimator.hpp"
#include "scalelab/io_util.hpp"
#include "scalelab/rng.hpp"
#include "scalelab/scalers.hpp"
#include "scalelab/trace.hpp"

namespace scalelab {

struct DriftSpec {
  double gamma = 0.0;             // relative amplitude on the slopes, < 1
  double period_minutes = 2880.0; // T_drift
};

/// Configurable generator of "true" CPU utilization feedback. The paper's
/// feedback source is internal to its platform; this makes it explicit:
/// the same linear mean/std family as the estimator, an optional sinusoidal
/// drift on the slopes, and seeded Gaussian noise that is a pure function
/// of (seed, t).
struct GroundTruth {
  CpuEstimator params;  // w_b*, w_k*, sigma_b*, sigma_k*
  DriftSpec drift;
  std::int64_t clock_zero = 0;  // minute offset where the drift phase is 0
  std::uint64_t seed = 0;

  void validate() const {
    params.validate();
    if (std::abs(drift.gamma) >= 1.0) throw ConfigError("ground truth: |gamma| must be < 1");
    if (drift.period_minutes <= 0.0) throw ConfigError("ground truth: drift period must be > 0");
  }

  /// Slope snapshot at minute t: w_k*(t) = w_k*(0) (1 + gamma sin(2pi t/T)).
  CpuEstimator at(std::int64_t t) const {
    CpuEstimator snap = params;
    if (drift.gamma != 0.0) {
      const double phase = 2.0 * M_PI * static_cast<double>(t - clock_zero) / drift.period_minutes;
      const double f = 1.0 + drift.gamma * std::sin(phase);
      for (double& w : snap.w_k) w *= f;
    }
    return snap;
  }
};

/// True CPU utilization for one minute: drifted linear mean plus Gaussian
/// noise with the heteroscedastic std, clamped to [0,1]. Deterministic in
/// (gt.seed, t) regardless of call order.
inline double sample_cpu(const GroundTruth& gt, const std::vector<double>& y, int x, std::int64_t t) {
  if (x < 1) throw InvariantError("sample_cpu: node count must be >= 1");
  const CpuEstimator snap = gt.at(t);
  const double mean = predict_mean(snap, y, x);
  const double sd = predict_std(snap, y, x);
  double c = mean;
  if (sd > 0.0) c += sd * gaussian_at(gt.seed, t);
  return std::clamp(c, 0.0, 1.0);
}

/// A scaling action in flight: every tau minutes after `decided_minute`,
/// up to s nodes move toward `target` (staircase ramp).
struct StagedChange {
  int target = 0;
  std::int64_t decided_minute = 0;
};

struct ClusterState {
  std::int64_t minute = 0;  // offset clock
  int nodes = 1;
  std::optional<StagedChange> staged;

  void validate(const ScalingLimits& limits) const {
    if (nodes < limits.x_min || nodes > limits.x_max) {
      throw InvariantError("cluster state: node count outside bounds");
    }
  }
};

/// Apply any batch due at `state.minute`. New decisions preempt: staging a
/// new change replaces the queue and re-targets from the current count.
inline void apply_staged(ClusterState& state, const ScalingLimits& limits) {
  if (!state.staged) return;
  const std::int64_t since = state.minute - state.staged->decided_minute;
  if (since <= 0 || since % limits.tau != 0) return;
  const int remaining = state.staged->target - state.nodes;
  if (remaining == 0) {
    state.staged.reset();
    return;
  }
  const int step = std::clamp(remaining, -limits.s, limits.s);
  state.nodes += step;
  if (state.nodes == state.staged->target) state.staged.reset();
}

struct MinuteRecord {
  std::int64_t minute = 0;  // absolute epoch minute
  int nodes = 0;
  std::vector<double> workload;
  double cpu = 0.0;
  bool violation = false;
  int decision_u = 0;      // governing decision's delta
  Provenance provenance = Provenance::kCollaborative;
  bool softened = false;   // governing decision was softened or held
  double cpu_hat = std::numeric_limits<double>::quiet_NaN();  // estimator view
};

struct SimResult {
  std::vector<MinuteRecord> records;
  int decision_count = 0;
  std::uint64_t seed = 0;
  double c_star = 0.5;

  /// Cumulative squared one-step-ahead CPU prediction error of the scaler's
  /// estimator (NaN-skipping); the online-learning benefit metric.
  double cumulative_sq_prediction_error() const {
    double acc = 0.0;
    for (const auto& r : records) {
      if (std::isfinite(r.cpu_hat)) {
        const double e = r.cpu_hat - r.cpu;
        acc += e * e;
      }
    }
    return acc;
  }
};

struct ExperimentSpec {
  ScalingLimits limits;
  double c_star = 0.5;
  int x0 = 1;
  std::size_t eval_start = 0;    // offset into the trace where control begins
  std::size_t eval_minutes = 0;  // simulated minutes
  std::uint64_t seed = 0;        // echoed into the result
};

/// Closed-loop minute simulation: at every interval start the scaler sees
/// the last interval's feedback and stages one action; nodes then ramp in
/// batches of s every tau minutes while true CPU is sampled each minute.
/// Fully deterministic given (traces, scaler, gt, spec).
inline SimResult run_experiment(const TraceSet& ts, Scaler& scaler, const GroundTruth& gt,
                                const ExperimentSpec& spec) {
  ts.validate();
  gt.validate();
  spec.limits.validate();
  if (spec.eval_minutes == 0) throw ConfigError("run_experiment: zero eval window");
  if (spec.eval_start + spec.eval_minutes > ts.length()) {
    throw ConfigError("run_experiment: eval window exceeds the trace");
  }
  if (gt.params.n_lras() != ts.count()) throw ConfigError("run_experiment: model/trace mismatch");
  if (spec.x0 < spec.limits.x_min || spec.x0 > spec.limits.x_max) {
    throw ConfigError("run_experiment: x0 outside node bounds");
  }

  const int fb_window = std::max(1, scaler.feedback_need(spec.limits.h));
  SimResult result;
  result.seed = spec.seed;
  result.c_star = spec.c_star;
  result.records.reserve(spec.eval_minutes);

  ClusterState state;
  state.nodes = spec.x0;

  std::vector<FeedbackSample> feedback;  // rolling, newest last
  int current_u = 0;
  Provenance current_prov = Provenance::kReactive;
  bool current_soft = true;  // minutes before the first decision count as uncovered

  for (std::size_t k = 0; k < spec.eval_minutes; ++k) {
    const std::size_t offset = spec.eval_start + k;
    state.minute = static_cast<std::int64_t>(offset);
    apply_staged(state, spec.limits);

    if (k % static_cast<std::size_t>(spec.limits.h) == 0) {
      std::vector<FeedbackSample> batch;
      const std::size_t take = std::min<std::size_t>(feedback.size(), static_cast<std::size_t>(fb_window));
      batch.assign(feedback.end() - static_cast<std::ptrdiff_t>(take), feedback.end());
      const std::int64_t abs_minute = ts.start_minute() + static_cast<std::int64_t>(offset);
      ScalerDecision d = scaler.decide(abs_minute, offset, ts, batch, state.nodes);
      if (d.target < spec.limits.x_min || d.target > spec.limits.x_max ||
          std::abs(d.delta) > spec.limits.ramp()) {
        throw InvariantError("scaler decision violates ramp or bounds");
      }
      if (d.delta != 0) {
        state.staged = StagedChange{d.target, state.minute};
      } else {
        state.staged.reset();
      }
      current_u = d.delta;
      current_prov = d.provenance;
      current_soft = d.softened || d.error_hold;
      ++result.decision_count;
    }

    MinuteRecord rec;
    rec.minute = ts.start_minute() + static_cast<std::int64_t>(offset);
    rec.workload = ts.workload_at(offset);
    rec.nodes = state.nodes;
    rec.cpu = sample_cpu(gt, rec.workload, state.nodes, static_cast<std::int64_t>(offset));
    rec.violation = rec.cpu > spec.c_star;
    rec.decision_u = current_u;
    rec.provenance = current_prov;
    rec.softened = current_soft;
    if (auto chat = scaler.predict_cpu(rec.workload, state.nodes)) rec.cpu_hat = *chat;
    state.validate(spec.limits);

    FeedbackSample fb;
    fb.minute = static_cast<std::int64_t>(offset);
    fb.workload = rec.workload;
    fb.nodes = rec.nodes;
    fb.cpu = rec.cpu;
    feedback.push_back(std::move(fb));
    if (feedback.size() > static_cast<std::size_t>(std::max(fb_window, spec.limits.h)) + 4) {
      feedback.erase(feedback.begin());
    }

    result.records.push_back(std::move(rec));
  }
  return result;
}

/// Open-loop warm-up at a fixed node count: collects one FeedbackSample per
/// minute from the (un-perturbed) ground truth, for estimator initialization.
inline std::vector<FeedbackSample> warmup_feedback(const TraceSet& ts, const GroundTruth& gt,
                                                   std::size_t begin, std::size_t end, int x_fixed) {
  ts.validate();
  if (end > ts.length() || begin >= end) throw ConfigError("warmup_feedback: bad range");
  if (x_fixed < 1) throw ConfigError("warmup_feedback: node count must be >= 1");
  std::vector<FeedbackSample> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    FeedbackSample s;
    s.minute = static_cast<std::int64_t>(i);
    s.workload = ts.workload_at(i);
    s.nodes = x_fixed;
    s.cpu = sample_cpu(gt, s.workload, x_fixed, static_cast<std::int64_t>(i));
    out.push_back(std::move(s));
  }
  return out;
}

/// SimResult CSV export: `minute,x,cpu,violation,decision_u,provenance`.
inline std::string sim_result_csv(const SimResult& result) {
  std::string out = "minute,x,cpu,violation,decision_u,provenance\n";
  for (const auto& r : result.records) {
    out += std::to_string(r.minute);
    out += ',';
    out += std::to_string(r.nodes);
    out += ',';
    out += format_double(r.cpu);
    out += ',';
    out += r.violation ? '1' : '0';
    out += ',';
    out += std::to_string(r.decision_u);
    out += ',';
    out += to_string(r.provenance);
    out += '\n';
  }
  return out;
}

}  // namespace scalelab
