#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "scalelab/error.hpp"
#include "scalelab/forecast.hpp"
#include "scalelab/io_util.hpp"
#include "scalelab/sim.hpp"

namespace scalelab {

/// Weighted absolute percentage error, averaged over series:
///   mean_n ( sum |y - yhat| / sum |y| ).
/// Series with a zero denominator are excluded and reported via `excluded`.
inline double wape(const std::vector<std::vector<double>>& actuals,
                   const std::vector<std::vector<double>>& predictions,
                   std::vector<std::size_t>* excluded = nullptr) {
  if (actuals.size() != predictions.size() || actuals.empty()) {
    throw InvariantError("wape: series count mismatch");
  }
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t n = 0; n < actuals.size(); ++n) {
    if (actuals[n].size() != predictions[n].size() || actuals[n].empty()) {
      throw InvariantError("wape: series length mismatch");
    }
    double abs_err = 0.0, abs_y = 0.0;
    for (std::size_t i = 0; i < actuals[n].size(); ++i) {
      abs_err += std::abs(actuals[n][i] - predictions[n][i]);
      abs_y += std::abs(actuals[n][i]);
    }
    if (abs_y <= 0.0) {
      if (excluded) excluded->push_back(n);
      continue;
    }
    acc += abs_err / abs_y;
    ++used;
  }
  if (used == 0) throw InvariantError("wape: all series have zero denominators");
  return acc / static_cast<double>(used);
}

/// Per-series peaks over consecutive h-minute blocks.
inline std::vector<std::vector<double>> block_peaks(const std::vector<std::vector<double>>& series, int h) {
  if (h < 1) throw ConfigError("block_peaks: h must be >= 1");
  std::vector<std::vector<double>> out(series.size());
  for (std::size_t n = 0; n < series.size(); ++n) {
    const std::size_t blocks = series[n].size() / static_cast<std::size_t>(h);
    if (blocks == 0) throw InvariantError("block_peaks: series shorter than one block");
    out[n].resize(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      double mx = series[n][b * static_cast<std::size_t>(h)];
      for (int k = 1; k < h; ++k) mx = std::max(mx, series[n][b * static_cast<std::size_t>(h) + static_cast<std::size_t>(k)]);
      out[n][b] = mx;
    }
  }
  return out;
}

/// WAPE of interval-peak sequences: peaks of actuals vs peaks of predictions.
inline double interval_peak_wape(const std::vector<std::vector<double>>& actuals,
                                 const std::vector<std::vector<double>>& predictions, int h,
                                 std::vector<std::size_t>* excluded = nullptr) {
  return wape(block_peaks(actuals, h), block_peaks(predictions, h), excluded);
}

/// SLO violation rate (percent of minutes), accumulated violation magnitude
/// and mean node count of a run.
struct SloMetrics {
  double s_vr = 0.0;   // percent
  double v_sum = 0.0;  // sum of max(c - c_star, 0)
  double r_avg = 0.0;  // mean node count
};

inline SloMetrics slo_metrics(const SimResult& result, double c_star) {
  if (result.records.empty()) throw InvariantError("slo_metrics: empty result");
  SloMetrics m;
  double nodes = 0.0;
  std::size_t violations = 0;
  for (const auto& r : result.records) {
    if (r.cpu > c_star) ++violations;
    m.v_sum += std::max(r.cpu - c_star, 0.0);
    nodes += r.nodes;
  }
  m.s_vr = 100.0 * static_cast<double>(violations) / static_cast<double>(result.records.size());
  m.r_avg = nodes / static_cast<double>(result.records.size());
  return m;
}

/// ECDF of the normalized absolute error pooled across series: each series'
/// errors are divided by that series' maximum absolute error. Returns
/// sorted (value, cumulative fraction) pairs; a degenerate single point
/// (0,1) when every error is zero.
inline std::vector<std::pair<double, double>> ecdf_ae_norm(
    const std::vector<std::vector<double>>& actuals,
    const std::vector<std::vector<double>>& predictions) {
  if (actuals.size() != predictions.size() || actuals.empty()) {
    throw InvariantError("ecdf_ae_norm: series count mismatch");
  }
  std::vector<double> pooled;
  for (std::size_t n = 0; n < actuals.size(); ++n) {
    if (actuals[n].size() != predictions[n].size()) throw InvariantError("ecdf_ae_norm: length mismatch");
    double mx = 0.0;
    std::vector<double> err(actuals[n].size());
    for (std::size_t i = 0; i < actuals[n].size(); ++i) {
      err[i] = std::abs(actuals[n][i] - predictions[n][i]);
      mx = std::max(mx, err[i]);
    }
    if (mx <= 0.0) continue;  // series contributes nothing to the pool
    for (double e : err) pooled.push_back(e / mx);
  }
  if (pooled.empty()) return {{0.0, 1.0}};
  std::sort(pooled.begin(), pooled.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    out.emplace_back(pooled[i], static_cast<double>(i + 1) / static_cast<double>(pooled.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rolling-window forecast evaluation
// ---------------------------------------------------------------------------

struct ForecastEvalResult {
  double minute_wape = 0.0;
  double peak_wape = 0.0;
  std::size_t window_count = 0;
  std::vector<std::vector<double>> actual;     // pooled per series
  std::vector<std::vector<double>> predicted;  // pooled per series
};

/// The rolling protocol: every h minutes inside [eval_start, eval_end),
/// predict the next `horizon` minutes; pool all (window, step) pairs and
/// report minute-level WAPE plus WAPE of the per-interval peak sequences.
/// Windows whose horizon would run past the trace end are skipped, so the
/// last decision still sees a full horizon.
inline ForecastEvalResult rolling_forecast_eval(const ForecastModel& model, const TraceSet& ts,
                                                std::size_t eval_start, std::size_t eval_end,
                                                int h, int horizon) {
  ts.validate();
  if (horizon < 1 || h < 1) throw ConfigError("rolling_forecast_eval: bad h/horizon");
  ForecastEvalResult res;
  res.actual.resize(ts.count());
  res.predicted.resize(ts.count());

  for (std::size_t t = eval_start; t < eval_end; t += static_cast<std::size_t>(h)) {
    if (t < static_cast<std::size_t>(model.local.context)) continue;
    if (t + static_cast<std::size_t>(horizon) >= ts.length()) break;
    const auto forecast = predict(model, ts, t, horizon);
    for (std::size_t n = 0; n < ts.count(); ++n) {
      for (int k = 0; k < horizon; ++k) {
        res.actual[n].push_back(ts.at(n).values[t + 1 + static_cast<std::size_t>(k)]);
        res.predicted[n].push_back(forecast[n][static_cast<std::size_t>(k)]);
      }
    }
    ++res.window_count;
  }
  if (res.window_count == 0) throw InvariantError("rolling_forecast_eval: no complete windows");
  res.minute_wape = wape(res.actual, res.predicted);
  res.peak_wape = interval_peak_wape(res.actual, res.predicted, h);
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
  double axis_value = 0.0;
  int seed_count = 0;
  SloMetrics metrics;       // seed-averaged
  double s_vr_norm = 0.0;   // percent of the reference row's value
  double v_sum_norm = 0.0;
  double r_avg_norm = 0.0;
};

struct SweepTable {
  std::string axis;
  double reference_value = 0.0;
  std::vector<SweepRow> rows;
};

/// Run `runner` for every (value, seed), average the metrics over seeds and
/// normalize each column against the row at `reference_value` (the way
/// sensitivity results are reported against the default configuration).
inline SweepTable sweep(const std::string& axis, const std::vector<double>& values,
                        const std::vector<std::uint64_t>& seeds, double reference_value,
                        const std::function<SloMetrics(double, std::uint64_t)>& runner) {
  if (values.empty()) throw ConfigError("sweep: no axis values");
  if (seeds.empty()) throw ConfigError("sweep: no seeds");
  SweepTable table;
  table.axis = axis;
  table.reference_value = reference_value;

  for (double v : values) {
    SweepRow row;
    row.axis_value = v;
    row.seed_count = static_cast<int>(seeds.size());
    for (std::uint64_t s : seeds) {
      const SloMetrics m = runner(v, s);
      row.metrics.s_vr += m.s_vr;
      row.metrics.v_sum += m.v_sum;
      row.metrics.r_avg += m.r_avg;
    }
    row.metrics.s_vr /= static_cast<double>(seeds.size());
    row.metrics.v_sum /= static_cast<double>(seeds.size());
    row.metrics.r_avg /= static_cast<double>(seeds.size());
    table.rows.push_back(row);
  }

  const SweepRow* ref = nullptr;
  for (const auto& r : table.rows) {
    if (r.axis_value == reference_value) ref = &r;
  }
  if (ref == nullptr) throw ConfigError("sweep: reference value is not among the axis values");
  auto norm = [](double v, double r) {
    if (r == 0.0) return v == 0.0 ? 100.0 : std::numeric_limits<double>::infinity();
    return 100.0 * v / r;
  };
  for (auto& r : table.rows) {
    r.s_vr_norm = norm(r.metrics.s_vr, ref->metrics.s_vr);
    r.v_sum_norm = norm(r.metrics.v_sum, ref->metrics.v_sum);
    r.r_avg_norm = norm(r.metrics.r_avg, ref->metrics.r_avg);
  }
  return table;
}

inline std::string sweep_csv(const SweepTable& table) {
  std::string out = "axis_value,seed_count,s_vr,v_sum,r_avg,s_vr_norm,r_avg_norm\n";
  for (const auto& r : table.rows) {
    out += format_double(r.axis_value);
    out += ',' + std::to_string(r.seed_count);
    out += ',' + format_double(r.metrics.s_vr);
    out += ',' + format_double(r.metrics.v_sum);
    out += ',' + format_double(r.metrics.r_avg);
    out += ',' + format_double(r.s_vr_norm);
    out += ',' + format_double(r.r_avg_norm);
    out += '\n';
  }
  return out;
}

}  // namespace scalelab
