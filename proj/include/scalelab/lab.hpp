#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scalelab/config.hpp"
#include "scalelab/eval.hpp"
#include "scalelab/sim.hpp"

namespace scalelab {

/// Everything one seeded run needs: the (possibly spiked) traces, the model
/// trained on the training span only, the MLE-initialized estimator, and
/// the perturbed-and-drifting ground truth for the eval span.
struct BenchContext {
  TraceSet traces;
  std::size_t eval_start = 0;
  std::size_t eval_minutes = 0;
  ForecastModel model;
  CpuEstimator estimator0;
  GroundTruth gt_eval;
  std::uint64_t run_seed = 0;
};

inline std::uint64_t run_seed_of(const ExperimentConfig& cfg, int run_index) {
  return derive_seed(cfg.root_seed, "run/" + std::to_string(run_index));
}

inline TraceSet build_traces(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  if (cfg.trace.source == "file") return load_traces(cfg.trace.path);
  TraceSet ts;
  for (const auto& lc : cfg.trace.synthetic) {
    SynthSpec spec;
    spec.lra_id = lc.lra_id;
    spec.start_minute = cfg.trace.start_minute;
    spec.length_minutes = static_cast<std::size_t>(cfg.trace.total_days) * kMinutesPerDay;
    spec.base = lc.base;
    spec.daily_amplitude = lc.daily_amplitude;
    spec.weekly_amplitude = lc.weekly_amplitude;
    spec.noise_std = lc.noise_std;
    spec.noise_ar1 = lc.noise_ar1;
    spec.daily_phase = lc.daily_phase;
    spec.weekly_phase = lc.weekly_phase;
    spec.seed = derive_seed(run_seed, "trace/" + lc.lra_id);
    ts.traces.push_back(synthesize_trace(spec).trace);
  }
  ts.validate();
  return ts;
}

inline TraceSet truncate_traces(const TraceSet& ts, std::size_t length) {
  TraceSet out = ts;
  for (auto& tr : out.traces) tr.values.resize(std::min(tr.values.size(), length));
  return out;
}

/// Decisions with horizon D need (D+1)*h minutes of forecast; the eval
/// window is truncated so the last decision still has them inside the
/// trace, using the largest configured D so every scaler sees an identical
/// window.
inline std::size_t eval_window_minutes(const ExperimentConfig& cfg) {
  int d_max = 1;
  for (const auto& sc : cfg.scalers) d_max = std::max(d_max, sc.horizon_intervals);
  const std::size_t raw = static_cast<std::size_t>(cfg.trace.eval_days) * kMinutesPerDay;
  const std::size_t lookahead = static_cast<std::size_t>((d_max + 1) * cfg.limits.h);
  if (raw <= lookahead) throw ConfigError("eval window shorter than one full horizon");
  std::size_t usable = raw - lookahead;
  usable -= usable % static_cast<std::size_t>(cfg.limits.h);  // whole intervals
  return usable;
}

inline GroundTruth make_ground_truth(const ExperimentConfig& cfg, std::uint64_t run_seed,
                                     bool eval_phase, std::size_t eval_start) {
  GroundTruth gt;
  gt.params.w_b = cfg.ground_truth.w_b;
  gt.params.w_k = cfg.ground_truth.w_k;
  gt.params.sigma_b = cfg.ground_truth.sigma_b;
  gt.params.sigma_k = cfg.ground_truth.sigma_k;
  gt.seed = derive_seed(run_seed, "gt");
  if (eval_phase) {
    for (double& w : gt.params.w_k) w *= cfg.ground_truth.perturb_w_k;
    gt.drift.gamma = cfg.ground_truth.drift_gamma;
    gt.drift.period_minutes = cfg.ground_truth.drift_period;
    gt.clock_zero = static_cast<std::int64_t>(eval_start);
  }
  gt.validate();
  return gt;
}

/// Assemble one seeded run: synthesize/load traces, train the model on the
/// training span, collect warm-up feedback from the un-perturbed ground
/// truth at a fixed node count and fit the estimator, then switch the
/// ground truth to its perturbed, drifting eval-phase form.
inline BenchContext prepare_bench(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  cfg.validate();
  BenchContext bench;
  bench.run_seed = run_seed;
  bench.traces = build_traces(cfg, run_seed);

  const std::size_t train_len =
      static_cast<std::size_t>(cfg.trace.total_days - cfg.trace.eval_days) * kMinutesPerDay;
  if (bench.traces.length() < train_len + static_cast<std::size_t>(cfg.limits.h)) {
    throw ConfigError("trace shorter than the configured training span");
  }
  bench.eval_start = train_len;
  bench.eval_minutes = std::min(eval_window_minutes(cfg), bench.traces.length() - train_len);

  TrainConfig tc = cfg.forecast;
  tc.seed = derive_seed(run_seed, "train");
  bench.model = train(truncate_traces(bench.traces, train_len), tc);

  const GroundTruth gt_warm = make_ground_truth(cfg, run_seed, false, bench.eval_start);
  const std::size_t warm_begin =
      train_len - static_cast<std::size_t>(cfg.sim.warmup_days) * kMinutesPerDay;
  const auto samples = warmup_feedback(bench.traces, gt_warm, warm_begin, train_len, cfg.sim.warmup_x);
  bench.estimator0 = init_mle(samples);

  bench.gt_eval = make_ground_truth(cfg, run_seed, true, bench.eval_start);
  return bench;
}

inline SimResult run_scaler(const ExperimentConfig& cfg, const BenchContext& bench,
                            ScalerConfig scaler_cfg, std::optional<ScalingLimits> limits = {}) {
  scaler_cfg.c_star = cfg.c_star;
  scaler_cfg.alpha = cfg.alpha;
  const ScalingLimits lims = limits.value_or(cfg.limits);
  auto scaler = make_scaler(scaler_cfg, lims, &bench.model, bench.estimator0);
  ExperimentSpec spec;
  spec.limits = lims;
  spec.c_star = cfg.c_star;
  spec.x0 = cfg.sim.x0;
  spec.eval_start = bench.eval_start;
  spec.eval_minutes = bench.eval_minutes;
  spec.seed = bench.run_seed;
  return run_experiment(bench.traces, *scaler, bench.gt_eval, spec);
}

// ---------------------------------------------------------------------------
// compare: every configured scaler on identical seeds and traces
// ---------------------------------------------------------------------------

struct CompareRow {
  ScalerConfig scaler;
  SloMetrics metrics;  // averaged over runs
};

struct CompareReport {
  std::vector<CompareRow> rows;
  int runs = 0;
  /// S_vr reduction of OptScaler vs HAS at the largest shared horizon,
  /// in percent; NaN when either row is missing.
  double opt_vs_has_svr_reduction = std::numeric_limits<double>::quiet_NaN();
};

inline std::string scaler_param_label(const ScalerConfig& sc) {
  if (sc.kind == ScalerKind::kAutopilot) {
    return "S=" + format_double(100.0 * sc.percentile) + "%";
  }
  return "D=" + std::to_string(sc.horizon_intervals);
}

inline CompareReport compare_scalers(const ExperimentConfig& cfg) {
  CompareReport report;
  report.runs = cfg.runs;
  report.rows.reserve(cfg.scalers.size());
  for (const auto& sc : cfg.scalers) {
    CompareRow row;
    row.scaler = sc;
    report.rows.push_back(row);
  }

  for (int r = 0; r < cfg.runs; ++r) {
    const BenchContext bench = prepare_bench(cfg, run_seed_of(cfg, r));
    for (std::size_t i = 0; i < cfg.scalers.size(); ++i) {
      const SimResult result = run_scaler(cfg, bench, cfg.scalers[i]);
      const SloMetrics m = slo_metrics(result, cfg.c_star);
      report.rows[i].metrics.s_vr += m.s_vr / cfg.runs;
      report.rows[i].metrics.v_sum += m.v_sum / cfg.runs;
      report.rows[i].metrics.r_avg += m.r_avg / cfg.runs;
    }
  }

  const CompareRow* opt = nullptr;
  const CompareRow* has = nullptr;
  for (const auto& row : report.rows) {
    if (row.scaler.kind == ScalerKind::kOptScaler &&
        (!opt || row.scaler.horizon_intervals > opt->scaler.horizon_intervals)) {
      opt = &row;
    }
    if (row.scaler.kind == ScalerKind::kHas &&
        (!has || row.scaler.horizon_intervals > has->scaler.horizon_intervals)) {
      has = &row;
    }
  }
  if (opt && has && has->metrics.s_vr > 0.0) {
    report.opt_vs_has_svr_reduction = 100.0 * (1.0 - opt->metrics.s_vr / has->metrics.s_vr);
  }
  return report;
}

inline std::string compare_csv(const CompareReport& report) {
  std::string out = "scaler,param,runs,s_vr,v_sum,r_avg\n";
  for (const auto& row : report.rows) {
    out += to_string(row.scaler.kind);
    out += ',' + scaler_param_label(row.scaler);
    out += ',' + std::to_string(report.runs);
    out += ',' + format_double(row.metrics.s_vr);
    out += ',' + format_double(row.metrics.v_sum);
    out += ',' + format_double(row.metrics.r_avg);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// sweeps: one axis, metrics per value averaged over the configured runs
// ---------------------------------------------------------------------------

enum class SweepAxis { kEta, kHorizon, kInterval, kSpike, kPercentile };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "eta") return SweepAxis::kEta;
  if (s == "D" || s == "d") return SweepAxis::kHorizon;
  if (s == "h") return SweepAxis::kInterval;
  if (s == "spike") return SweepAxis::kSpike;
  if (s == "percentile") return SweepAxis::kPercentile;
  throw ConfigError("unknown sweep axis '" + s + "' (eta | D | h | spike | percentile)");
}

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kEta: return "eta";
    case SweepAxis::kHorizon: return "D";
    case SweepAxis::kInterval: return "h";
    case SweepAxis::kSpike: return "spike";
    case SweepAxis::kPercentile: return "percentile";
  }
  return "?";
}

/// Base scaler for sweeps: the first OptScaler entry (Autopilot for the
/// percentile axis).
inline ScalerConfig sweep_base_scaler(const ExperimentConfig& cfg, SweepAxis axis) {
  const ScalerKind want = axis == SweepAxis::kPercentile ? ScalerKind::kAutopilot : ScalerKind::kOptScaler;
  ScalerConfig best;
  bool found = false;
  for (const auto& sc : cfg.scalers) {
    if (sc.kind == want && (!found || sc.horizon_intervals > best.horizon_intervals)) {
      best = sc;
      found = true;
    }
  }
  if (!found) {
    best = ScalerConfig{};
    best.kind = want;
    best.c_star = cfg.c_star;
    best.alpha = cfg.alpha;
  }
  return best;
}

inline double sweep_reference_value(const ExperimentConfig& cfg, SweepAxis axis,
                                    const std::vector<double>& values) {
  const ScalerConfig base = sweep_base_scaler(cfg, axis);
  double ref = values.front();
  switch (axis) {
    case SweepAxis::kEta: ref = base.eta; break;
    case SweepAxis::kHorizon: ref = base.horizon_intervals; break;
    case SweepAxis::kInterval: ref = cfg.limits.h; break;
    case SweepAxis::kSpike: ref = cfg.spike.duration_minutes; break;
    case SweepAxis::kPercentile: ref = base.percentile; break;
  }
  for (double v : values) {
    if (v == ref) return ref;
  }
  return values.front();  // reference must be a swept value
}

/// Sensitivity driver. Benches are prepared once per seed and reused
/// across values wherever the axis does not change the data (eta, D,
/// percentile); the spike axis re-injects workloads per value and the
/// interval axis re-times the control loop.
inline SweepTable run_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no values");
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < cfg.runs; ++r) seeds.push_back(run_seed_of(cfg, r));

  std::map<std::uint64_t, BenchContext> benches;
  for (std::uint64_t s : seeds) benches.emplace(s, prepare_bench(cfg, s));

  const ScalerConfig base = sweep_base_scaler(cfg, axis);
  auto runner = [&](double value, std::uint64_t seed) -> SloMetrics {
    const BenchContext& bench = benches.at(seed);
    ScalerConfig sc = base;
    ScalingLimits limits = cfg.limits;
    switch (axis) {
      case SweepAxis::kEta:
        sc.eta = value;
        break;
      case SweepAxis::kHorizon:
        sc.horizon_intervals = static_cast<int>(value);
        break;
      case SweepAxis::kInterval:
        limits.h = static_cast<int>(value);
        break;
      case SweepAxis::kPercentile:
        sc.percentile = value;
        break;
      case SweepAxis::kSpike: {
        const std::int64_t start = bench.traces.start_minute() +
                                   static_cast<std::int64_t>(bench.eval_start) + cfg.spike.start_into_eval;
        BenchContext spiked = bench;  // traces copied, model/estimator shared state reused
        spiked.traces = inject_spike(bench.traces, start, static_cast<std::int64_t>(value), cfg.spike.factor);
        const SimResult res = run_scaler(cfg, spiked, sc);
        return slo_metrics(res, cfg.c_star);
      }
    }
    if (axis == SweepAxis::kInterval) {
      // keep the horizon inside the model: (D+1)*h must fit
      const int need = (sc.horizon_intervals + 1) * limits.h;
      if (need > bench.model.local.horizon) {
        throw ConfigError("sweep h: (D+1)*h exceeds the model horizon; lower D or retrain");
      }
      const SimResult res = run_scaler(cfg, bench, sc, limits);
      return slo_metrics(res, cfg.c_star);
    }
    const SimResult res = run_scaler(cfg, bench, sc);
    return slo_metrics(res, cfg.c_star);
  };

  return sweep(to_string(axis), values, seeds, sweep_reference_value(cfg, axis, values), runner);
}

}  // namespace scalelab
