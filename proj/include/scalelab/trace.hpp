#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "scalelab/error.hpp"
#include "scalelab/io_util.hpp"
#include "scalelab/rng.hpp"

namespace scalelab {

constexpr int kMinutesPerDay = 1440;
constexpr int kMinutesPerWeek = 10080;

/// One LRA's workload series at fixed 1-minute resolution.
struct WorkloadTrace {
  std::string lra_id;
  std::int64_t start_minute = 0;  // epoch minutes
  std::vector<double> values;     // QPS, non-negative

  std::size_t length() const { return values.size(); }
  std::int64_t end_minute() const { return start_minute + static_cast<std::int64_t>(values.size()); }

  void validate() const {
    if (values.empty()) throw InvariantError("trace '" + lra_id + "' is empty");
    for (double v : values) {
      if (!std::isfinite(v) || v < 0.0) {
        throw InvariantError("trace '" + lra_id + "' has a negative or non-finite value");
      }
    }
  }
};

/// Aligned collection of traces: shared start minute and length, unique ids.
struct TraceSet {
  std::vector<WorkloadTrace> traces;

  std::size_t count() const { return traces.size(); }
  std::size_t length() const { return traces.empty() ? 0 : traces.front().length(); }
  std::int64_t start_minute() const { return traces.empty() ? 0 : traces.front().start_minute; }

  const WorkloadTrace& at(std::size_t n) const { return traces.at(n); }

  /// Workload vector across LRAs at a given offset from start.
  std::vector<double> workload_at(std::size_t offset) const {
    std::vector<double> y(traces.size());
    for (std::size_t n = 0; n < traces.size(); ++n) y[n] = traces[n].values.at(offset);
    return y;
  }

  void validate() const {
    if (traces.empty()) throw InvariantError("trace set is empty");
    for (const auto& t : traces) t.validate();
    for (std::size_t i = 1; i < traces.size(); ++i) {
      if (traces[i].start_minute != traces[0].start_minute || traces[i].length() != traces[0].length()) {
        throw InvariantError("trace set is not aligned");
      }
    }
    for (std::size_t i = 0; i < traces.size(); ++i) {
      for (std::size_t j = i + 1; j < traces.size(); ++j) {
        if (traces[i].lra_id == traces[j].lra_id) {
          throw InvariantError("duplicate lra_id '" + traces[i].lra_id + "'");
        }
      }
    }
  }
};

/// Per-series pattern statistics: dispersion of daily peaks, daily/weekly
/// autocorrelation, and 1 - normalized spectral entropy. Higher values mean
/// stronger structure (easier prediction); `degenerate` marks series where
/// the statistics are undefined (constant input) and reported as 0.
struct TraceStats {
  double sigma_daily_peak = 0.0;
  double daily_ar = 0.0;
  std::optional<double> weekly_ar;
  double entropy_score = 0.0;
  bool degenerate = false;
};

enum class AlignPolicy { kIntersect, kStrict };

namespace detail {

inline double pearson_autocorr(const std::vector<double>& x, std::size_t lag, bool& degenerate) {
  if (x.size() < lag + 2) {
    degenerate = true;
    return 0.0;
  }
  const std::size_t n = x.size() - lag;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += x[i];
    mb += x[i + lag];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x[i] - ma;
    const double b = x[i + lag] - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    degenerate = true;
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

/// Pattern statistics of one trace. The series is min-max normalized for the
/// daily-peak dispersion; autocorrelations are scale invariant by definition.
/// weekly_ar requires at least two weeks of data and is absent otherwise.
inline TraceStats compute_stats(const WorkloadTrace& trace) {
  trace.validate();
  TraceStats st;
  const std::vector<double>& x = trace.values;
  const std::size_t n = x.size();

  const double lo = *std::min_element(x.begin(), x.end());
  const double hi = *std::max_element(x.begin(), x.end());
  if (hi - lo <= 0.0) {
    st.degenerate = true;
    return st;  // constant series: everything reported as 0
  }

  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) norm[i] = (x[i] - lo) / (hi - lo);

  // Std of per-day maxima of the normalized series (complete days only).
  const std::size_t days = n / kMinutesPerDay;
  if (days >= 1) {
    std::vector<double> peaks(days);
    for (std::size_t d = 0; d < days; ++d) {
      peaks[d] = *std::max_element(norm.begin() + d * kMinutesPerDay,
                                   norm.begin() + (d + 1) * kMinutesPerDay);
    }
    double mean = 0.0;
    for (double p : peaks) mean += p;
    mean /= static_cast<double>(days);
    double var = 0.0;
    for (double p : peaks) var += (p - mean) * (p - mean);
    st.sigma_daily_peak = std::sqrt(var / static_cast<double>(days));
  }

  st.daily_ar = detail::pearson_autocorr(x, kMinutesPerDay, st.degenerate);
  if (n >= 2 * static_cast<std::size_t>(kMinutesPerWeek)) {
    bool deg = false;
    const double w = detail::pearson_autocorr(x, kMinutesPerWeek, deg);
    if (!deg) st.weekly_ar = w;
    st.degenerate = st.degenerate || deg;
  }

  // Spectral entropy over the single full-length periodogram, K = n/2 bins.
  const std::size_t k_bins = n / 2;
  if (k_bins >= 2) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = x[i] - mean;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, centered);

    std::vector<double> power(k_bins);
    double total = 0.0;
    for (std::size_t k = 1; k <= k_bins; ++k) {
      power[k - 1] = std::norm(spec[k]);
      total += power[k - 1];
    }
    if (total > 0.0) {
      double entropy = 0.0;
      for (double p : power) {
        if (p > 0.0) {
          const double q = p / total;
          entropy -= q * std::log(q);
        }
      }
      st.entropy_score = std::clamp(1.0 - entropy / std::log(static_cast<double>(k_bins)), 0.0, 1.0);
    } else {
      st.degenerate = true;
    }
  }
  return st;
}

struct SpikeSpec {
  std::int64_t start_minute = 0;  // epoch minutes
  std::int64_t duration_minutes = 0;
  double factor = 1.0;
};

/// Generator parameters for a synthetic LRA workload:
///   value(t) = max(0, base * (1 + A_d sin(2pi (t+phi_d)/1440))
///                        * (1 + A_w sin(2pi (t+phi_w)/10080)) + noise(t))
/// Noise is Gaussian, optionally AR(1)-correlated (rho), with stationary
/// std `noise_std`. Spikes multiply the finished value inside their window.
struct SynthSpec {
  std::string lra_id = "lra";
  std::int64_t start_minute = 0;
  std::size_t length_minutes = 0;
  double base = 1.0;
  double daily_amplitude = 0.0;
  double weekly_amplitude = 0.0;
  double noise_std = 0.0;
  double noise_ar1 = 0.0;  // [0, 1)
  double daily_phase = 0.0;
  double weekly_phase = 0.0;
  std::vector<SpikeSpec> spikes;
  std::uint64_t seed = 0;
};

struct SynthResult {
  WorkloadTrace trace;
  bool all_zero = false;  // warning: parameters produced an all-zero signal
};

inline SynthResult synthesize_trace(const SynthSpec& spec) {
  if (spec.base <= 0.0) throw ConfigError("synthesize_trace: base level must be > 0");
  if (spec.length_minutes == 0) throw ConfigError("synthesize_trace: zero length");
  if (spec.noise_ar1 < 0.0 || spec.noise_ar1 >= 1.0) {
    throw ConfigError("synthesize_trace: noise_ar1 must be in [0,1)");
  }

  SynthResult out;
  out.trace.lra_id = spec.lra_id;
  out.trace.start_minute = spec.start_minute;
  out.trace.values.resize(spec.length_minutes);

  Rng rng(spec.seed);
  const double rho = spec.noise_ar1;
  const double innov = spec.noise_std * std::sqrt(1.0 - rho * rho);
  double noise = 0.0;
  bool any_positive = false;

  for (std::size_t i = 0; i < spec.length_minutes; ++i) {
    const double t = static_cast<double>(spec.start_minute + static_cast<std::int64_t>(i));
    const double daily = 1.0 + spec.daily_amplitude * std::sin(2.0 * M_PI * (t + spec.daily_phase) / kMinutesPerDay);
    const double weekly = 1.0 + spec.weekly_amplitude * std::sin(2.0 * M_PI * (t + spec.weekly_phase) / kMinutesPerWeek);
    if (spec.noise_std > 0.0) {
      noise = rho * noise + innov * rng.normal();
    }
    double v = std::max(0.0, spec.base * daily * weekly + noise);
    for (const auto& sp : spec.spikes) {
      const std::int64_t tm = spec.start_minute + static_cast<std::int64_t>(i);
      if (tm >= sp.start_minute && tm < sp.start_minute + sp.duration_minutes) v *= sp.factor;
    }
    out.trace.values[i] = v;
    any_positive = any_positive || v > 0.0;
  }
  out.all_zero = !any_positive;
  return out;
}

/// Multiply every value inside [start_minute, start_minute+duration) by
/// `factor`, across all LRAs. The window must lie inside the trace range.
inline TraceSet inject_spike(const TraceSet& ts, std::int64_t start_minute,
                             std::int64_t duration_minutes, double factor) {
  ts.validate();
  if (factor <= 0.0) throw ConfigError("inject_spike: factor must be > 0");
  if (duration_minutes <= 0) throw ConfigError("inject_spike: duration must be > 0");
  const std::int64_t lo = ts.start_minute();
  const std::int64_t hi = lo + static_cast<std::int64_t>(ts.length());
  if (start_minute < lo || start_minute + duration_minutes > hi) {
    throw ConfigError("inject_spike: window out of trace range");
  }
  TraceSet out = ts;
  const std::size_t first = static_cast<std::size_t>(start_minute - lo);
  for (auto& tr : out.traces) {
    for (std::int64_t k = 0; k < duration_minutes; ++k) tr.values[first + static_cast<std::size_t>(k)] *= factor;
  }
  return out;
}

/// Load aligned traces from CSV `epoch_minute,lra_id,qps` (header required).
/// Traces are cut to the intersection of per-LRA time ranges; missing
/// minutes inside an LRA's own range are filled by linear interpolation.
/// Values are never extrapolated outside an LRA's observed range.
inline TraceSet load_traces(const std::filesystem::path& path,
                            AlignPolicy policy = AlignPolicy::kIntersect) {
  const std::string content = read_file(path);

  struct Series {
    std::map<std::int64_t, double> samples;
  };
  std::map<std::string, Series> by_lra;

  std::size_t row = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string line = content.substr(pos, eol - pos);
    pos = eol + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line != "epoch_minute,lra_id,qps") {
        throw ParseError("row 1: expected header 'epoch_minute,lra_id,qps', got '" + line + "'");
      }
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) throw ParseError("row " + std::to_string(row) + ": expected 3 fields");
    const std::string ctx = "row " + std::to_string(row);
    const std::int64_t minute = parse_int(fields[0], ctx);
    const std::string& lra = fields[1];
    const double qps = parse_double(fields[2], ctx);
    if (!std::isfinite(qps)) throw ParseError(ctx + ": non-finite qps");
    if (qps < 0.0) throw ParseError(ctx + ": negative workload");
    auto [it, inserted] = by_lra[lra].samples.emplace(minute, qps);
    if (!inserted) throw ParseError(ctx + ": duplicate sample for lra '" + lra + "' at minute " + std::to_string(minute));
  }
  if (by_lra.empty()) throw ParseError("no data rows in " + path.string());

  std::int64_t lo = std::numeric_limits<std::int64_t>::min();
  std::int64_t hi = std::numeric_limits<std::int64_t>::max();
  for (const auto& [id, s] : by_lra) {
    lo = std::max(lo, s.samples.begin()->first);
    hi = std::min(hi, s.samples.rbegin()->first);
  }
  if (lo > hi) throw ParseError("empty intersection of trace time ranges");

  TraceSet out;
  for (const auto& [id, s] : by_lra) {
    WorkloadTrace tr;
    tr.lra_id = id;
    tr.start_minute = lo;
    tr.values.resize(static_cast<std::size_t>(hi - lo + 1));
    auto it = s.samples.begin();
    for (std::int64_t m = lo; m <= hi; ++m) {
      while (it != s.samples.end() && it->first < m) ++it;
      if (it != s.samples.end() && it->first == m) {
        tr.values[static_cast<std::size_t>(m - lo)] = it->second;
        continue;
      }
      if (policy == AlignPolicy::kStrict) {
        throw ParseError("lra '" + id + "' missing minute " + std::to_string(m));
      }
      // Interpolate between the nearest samples around m (both exist:
      // m is strictly inside this LRA's observed range).
      const auto after = it;
      const auto before = std::prev(it);
      const double t0 = static_cast<double>(before->first);
      const double t1 = static_cast<double>(after->first);
      const double w = (static_cast<double>(m) - t0) / (t1 - t0);
      tr.values[static_cast<std::size_t>(m - lo)] = before->second * (1.0 - w) + after->second * w;
    }
    out.traces.push_back(std::move(tr));
  }
  out.validate();
  return out;
}

/// Inverse of load_traces for aligned sets; numbers round-trip exactly.
inline void save_traces(const TraceSet& ts, const std::filesystem::path& path) {
  ts.validate();
  std::string out = "epoch_minute,lra_id,qps\n";
  for (const auto& tr : ts.traces) {
    for (std::size_t i = 0; i < tr.values.size(); ++i) {
      out += std::to_string(tr.start_minute + static_cast<std::int64_t>(i));
      out += ',';
      out += tr.lra_id;
      out += ',';
      out += format_double(tr.values[i]);
      out += '\n';
    }
  }
  write_file(path, out);
}

}  // namespace scalelab
