#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "scalelab/error.hpp"
#include "scalelab/estimator.hpp"
#include "scalelab/forecast.hpp"
#include "scalelab/io_util.hpp"
#include "scalelab/mpc.hpp"
#include "scalelab/normal.hpp"
#include "scalelab/scalers.hpp"
#include "scalelab/sim.hpp"
#include "scalelab/trace.hpp"

namespace scalelab {

struct SyntheticLraConfig {
  std::string lra_id;
  double base = 100.0;
  double daily_amplitude = 0.4;
  double weekly_amplitude = 0.0;
  double noise_std = 0.0;
  double noise_ar1 = 0.0;
  double daily_phase = 0.0;
  double weekly_phase = 0.0;
};

struct TraceSourceConfig {
  std::string source = "synthetic";  // synthetic | file
  std::string path;                  // when source == file
  std::vector<SyntheticLraConfig> synthetic;
  std::int64_t start_minute = 0;
  int total_days = 14;
  int eval_days = 2;
};

struct GroundTruthConfig {
  double w_b = 0.08;
  std::vector<double> w_k = {0.10, 0.07};
  double sigma_b = 0.008;
  std::vector<double> sigma_k = {0.0012, 0.0008};
  double perturb_w_k = 1.10;     // applied to the true slopes at eval start
  double drift_gamma = 0.10;     // sinusoidal drift of the true slopes
  double drift_period = 2880.0;  // minutes
};

struct SpikeConfig {
  double factor = 10.0;
  int duration_minutes = 30;
  int start_into_eval = 1200;  // minutes after the eval window opens
};

struct SimSetupConfig {
  int x0 = 100;
  int warmup_x = 150;          // fixed node count while collecting MLE feedback
  int warmup_days = 4;         // trailing days of the training span used for MLE
};

/// One experiment file drives every command. Defaults reproduce the
/// standard protocol: h=30, tau=5, s=4 (ramp 24), bounds [80,400],
/// c*=0.5, alpha=0.95, eta=2e-4, horizons D in {1,11}, metrics averaged
/// over five seeded runs on a two-week synthetic two-LRA workload.
struct ExperimentConfig {
  TraceSourceConfig trace;
  TrainConfig forecast;
  ScalingLimits limits;  // defaults set in default_config()
  double c_star = 0.5;
  double alpha = 0.95;
  std::vector<ScalerConfig> scalers;
  GroundTruthConfig ground_truth;
  SpikeConfig spike;
  SimSetupConfig sim;
  std::uint64_t root_seed = 1;
  int runs = 5;
  std::string out_dir = "out";

  void validate() const;
};

inline ExperimentConfig default_config() {
  ExperimentConfig cfg;

  cfg.trace.synthetic = {
      {"alpha", 420.0, 0.45, 0.08, 18.0, 0.80, 0.0, 0.0},
      {"beta", 260.0, 0.35, 0.15, 12.0, 0.75, -240.0, 0.0},
  };

  cfg.forecast.periods = {kMinutesPerDay, kMinutesPerWeek};
  cfg.forecast.fourier_order = 6;
  cfg.forecast.context = 288;
  cfg.forecast.horizon = 360;
  cfg.forecast.d_model = 16;
  cfg.forecast.quantile = 0.5;
  cfg.forecast.epochs = 25;
  cfg.forecast.windows_per_epoch = 48;
  cfg.forecast.batch_size = 8;
  cfg.forecast.step_size = 1e-3;

  cfg.limits.h = 30;
  cfg.limits.tau = 5;
  cfg.limits.s = 4;
  cfg.limits.x_min = 80;
  cfg.limits.x_max = 400;

  auto scaler = [&](ScalerKind kind, int d, double eta, double s_pct) {
    ScalerConfig sc;
    sc.kind = kind;
    sc.horizon_intervals = d;
    sc.alpha = cfg.alpha;
    sc.c_star = cfg.c_star;
    sc.eta = eta;
    sc.percentile = s_pct;
    return sc;
  };
  cfg.scalers = {
      scaler(ScalerKind::kAutopilot, 1, 0.0, 0.90),
      scaler(ScalerKind::kAutopilot, 1, 0.0, 0.95),
      scaler(ScalerKind::kMadu, 1, 0.0, 0.95),
      scaler(ScalerKind::kMadu, 11, 0.0, 0.95),
      scaler(ScalerKind::kHas, 1, 0.0, 0.95),
      scaler(ScalerKind::kHas, 11, 0.0, 0.95),
      scaler(ScalerKind::kOptScaler, 1, 2e-4, 0.95),
      scaler(ScalerKind::kOptScaler, 11, 2e-4, 0.95),
  };
  return cfg;
}

inline void ExperimentConfig::validate() const {
  limits.validate();
  if (!(c_star > 0.0 && c_star < 1.0)) throw ConfigError("config: c_star must be in (0,1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("config: alpha must be in (0,1)");
  if (trace.source != "synthetic" && trace.source != "file") {
    throw ConfigError("config: trace.source must be 'synthetic' or 'file'");
  }
  if (trace.source == "synthetic" && trace.synthetic.empty()) {
    throw ConfigError("config: synthetic trace list is empty");
  }
  if (trace.source == "file" && trace.path.empty()) {
    throw ConfigError("config: trace.path required for file source");
  }
  if (trace.total_days <= trace.eval_days || trace.eval_days < 1) {
    throw ConfigError("config: need total_days > eval_days >= 1");
  }
  if (scalers.empty()) throw ConfigError("config: no scalers configured");
  for (const auto& sc : scalers) sc.validate();
  if (runs < 1) throw ConfigError("config: runs must be >= 1");

  CpuEstimator gt;
  gt.w_b = ground_truth.w_b;
  gt.w_k = ground_truth.w_k;
  gt.sigma_b = ground_truth.sigma_b;
  gt.sigma_k = ground_truth.sigma_k;
  gt.validate();
  if (trace.source == "synthetic" && gt.w_k.size() != trace.synthetic.size()) {
    throw ConfigError("config: ground truth slope count must match the LRA count");
  }
  if (std::abs(ground_truth.drift_gamma) >= 1.0) throw ConfigError("config: |drift gamma| must be < 1");
  if (ground_truth.perturb_w_k <= 0.0) throw ConfigError("config: perturb factor must be > 0");
  // denominator positivity, checked eagerly against the configured ground
  // truth before any computation starts
  if (c_star <= gt.w_b + normal_quantile(alpha) * gt.sigma_b) {
    throw ConfigError("config: c_star must exceed w_b + psi^-1(alpha)*sigma_b");
  }
  if (sim.x0 < limits.x_min || sim.x0 > limits.x_max) {
    throw ConfigError("config: sim.x0 outside node bounds");
  }
  if (sim.warmup_x < 1) throw ConfigError("config: warmup_x must be >= 1");
  if (sim.warmup_days < 1 || sim.warmup_days > trace.total_days - trace.eval_days) {
    throw ConfigError("config: warmup_days must fit inside the training span");
  }
  if (spike.factor <= 0.0 || spike.duration_minutes < 1) throw ConfigError("config: bad spike");
}

// ---------------------------------------------------------------------------
// JSON binding (partial documents override defaults)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg = default_config();

  if (j.contains("trace")) {
    const auto& t = j.at("trace");
    detail::maybe(t, "source", cfg.trace.source);
    detail::maybe(t, "path", cfg.trace.path);
    detail::maybe(t, "start_minute", cfg.trace.start_minute);
    detail::maybe(t, "total_days", cfg.trace.total_days);
    detail::maybe(t, "eval_days", cfg.trace.eval_days);
    if (t.contains("synthetic")) {
      cfg.trace.synthetic.clear();
      for (const auto& s : t.at("synthetic")) {
        SyntheticLraConfig lc;
        lc.lra_id = s.at("lra_id").get<std::string>();
        detail::maybe(s, "base", lc.base);
        detail::maybe(s, "daily_amplitude", lc.daily_amplitude);
        detail::maybe(s, "weekly_amplitude", lc.weekly_amplitude);
        detail::maybe(s, "noise_std", lc.noise_std);
        detail::maybe(s, "noise_ar1", lc.noise_ar1);
        detail::maybe(s, "daily_phase", lc.daily_phase);
        detail::maybe(s, "weekly_phase", lc.weekly_phase);
        cfg.trace.synthetic.push_back(std::move(lc));
      }
    }
  }
  if (j.contains("forecast")) {
    const auto& f = j.at("forecast");
    detail::maybe(f, "periods", cfg.forecast.periods);
    detail::maybe(f, "order", cfg.forecast.fourier_order);
    detail::maybe(f, "context", cfg.forecast.context);
    detail::maybe(f, "horizon", cfg.forecast.horizon);
    detail::maybe(f, "d_model", cfg.forecast.d_model);
    detail::maybe(f, "quantile", cfg.forecast.quantile);
    detail::maybe(f, "epochs", cfg.forecast.epochs);
    detail::maybe(f, "windows_per_epoch", cfg.forecast.windows_per_epoch);
    detail::maybe(f, "batch_size", cfg.forecast.batch_size);
    detail::maybe(f, "step_size", cfg.forecast.step_size);
  }
  if (j.contains("limits")) {
    const auto& l = j.at("limits");
    detail::maybe(l, "h", cfg.limits.h);
    detail::maybe(l, "tau", cfg.limits.tau);
    detail::maybe(l, "s", cfg.limits.s);
    detail::maybe(l, "x_min", cfg.limits.x_min);
    detail::maybe(l, "x_max", cfg.limits.x_max);
  }
  detail::maybe(j, "c_star", cfg.c_star);
  detail::maybe(j, "alpha", cfg.alpha);
  if (j.contains("scalers")) {
    cfg.scalers.clear();
    for (const auto& s : j.at("scalers")) {
      ScalerConfig sc;
      sc.kind = scaler_kind_from_string(s.at("kind").get<std::string>());
      sc.c_star = cfg.c_star;
      sc.alpha = cfg.alpha;
      detail::maybe(s, "d", sc.horizon_intervals);
      detail::maybe(s, "eta", sc.eta);
      detail::maybe(s, "olr_batch", sc.olr_batch);
      detail::maybe(s, "percentile", sc.percentile);
      detail::maybe(s, "percentile_window", sc.percentile_window);
      detail::maybe(s, "override_bound_factor", sc.override_bound_factor);
      if (sc.kind != ScalerKind::kOptScaler) sc.eta = sc.kind == ScalerKind::kHas ? 0.0 : sc.eta;
      cfg.scalers.push_back(sc);
    }
  } else {
    for (auto& sc : cfg.scalers) {
      sc.c_star = cfg.c_star;
      sc.alpha = cfg.alpha;
    }
  }
  if (j.contains("ground_truth")) {
    const auto& g = j.at("ground_truth");
    detail::maybe(g, "w_b", cfg.ground_truth.w_b);
    detail::maybe(g, "w_k", cfg.ground_truth.w_k);
    detail::maybe(g, "sigma_b", cfg.ground_truth.sigma_b);
    detail::maybe(g, "sigma_k", cfg.ground_truth.sigma_k);
    detail::maybe(g, "perturb_w_k", cfg.ground_truth.perturb_w_k);
    detail::maybe(g, "drift_gamma", cfg.ground_truth.drift_gamma);
    detail::maybe(g, "drift_period", cfg.ground_truth.drift_period);
  }
  if (j.contains("spike")) {
    const auto& s = j.at("spike");
    detail::maybe(s, "factor", cfg.spike.factor);
    detail::maybe(s, "duration_minutes", cfg.spike.duration_minutes);
    detail::maybe(s, "start_into_eval", cfg.spike.start_into_eval);
  }
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    detail::maybe(s, "x0", cfg.sim.x0);
    detail::maybe(s, "warmup_x", cfg.sim.warmup_x);
    detail::maybe(s, "warmup_days", cfg.sim.warmup_days);
  }
  detail::maybe(j, "root_seed", cfg.root_seed);
  detail::maybe(j, "runs", cfg.runs);
  detail::maybe(j, "out_dir", cfg.out_dir);

  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// Echo of the effective configuration, written next to every result so a
/// run can be reproduced from its outputs alone.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["trace"]["source"] = cfg.trace.source;
  j["trace"]["path"] = cfg.trace.path;
  j["trace"]["start_minute"] = cfg.trace.start_minute;
  j["trace"]["total_days"] = cfg.trace.total_days;
  j["trace"]["eval_days"] = cfg.trace.eval_days;
  j["trace"]["synthetic"] = nlohmann::json::array();
  for (const auto& s : cfg.trace.synthetic) {
    j["trace"]["synthetic"].push_back(nlohmann::json{{"lra_id", s.lra_id},
                                                     {"base", s.base},
                                                     {"daily_amplitude", s.daily_amplitude},
                                                     {"weekly_amplitude", s.weekly_amplitude},
                                                     {"noise_std", s.noise_std},
                                                     {"noise_ar1", s.noise_ar1},
                                                     {"daily_phase", s.daily_phase},
                                                     {"weekly_phase", s.weekly_phase}});
  }
  j["forecast"] = {{"periods", cfg.forecast.periods},
                   {"order", cfg.forecast.fourier_order},
                   {"context", cfg.forecast.context},
                   {"horizon", cfg.forecast.horizon},
                   {"d_model", cfg.forecast.d_model},
                   {"quantile", cfg.forecast.quantile},
                   {"epochs", cfg.forecast.epochs},
                   {"windows_per_epoch", cfg.forecast.windows_per_epoch},
                   {"batch_size", cfg.forecast.batch_size},
                   {"step_size", cfg.forecast.step_size}};
  j["limits"] = {{"h", cfg.limits.h},
                 {"tau", cfg.limits.tau},
                 {"s", cfg.limits.s},
                 {"x_min", cfg.limits.x_min},
                 {"x_max", cfg.limits.x_max}};
  j["c_star"] = cfg.c_star;
  j["alpha"] = cfg.alpha;
  j["scalers"] = nlohmann::json::array();
  for (const auto& sc : cfg.scalers) {
    j["scalers"].push_back(nlohmann::json{{"kind", to_string(sc.kind)},
                                          {"d", sc.horizon_intervals},
                                          {"eta", sc.eta},
                                          {"percentile", sc.percentile},
                                          {"percentile_window", sc.percentile_window},
                                          {"override_bound_factor", sc.override_bound_factor}});
  }
  j["ground_truth"] = {{"w_b", cfg.ground_truth.w_b},
                       {"w_k", cfg.ground_truth.w_k},
                       {"sigma_b", cfg.ground_truth.sigma_b},
                       {"sigma_k", cfg.ground_truth.sigma_k},
                       {"perturb_w_k", cfg.ground_truth.perturb_w_k},
                       {"drift_gamma", cfg.ground_truth.drift_gamma},
                       {"drift_period", cfg.ground_truth.drift_period}};
  j["spike"] = {{"factor", cfg.spike.factor},
                {"duration_minutes", cfg.spike.duration_minutes},
                {"start_into_eval", cfg.spike.start_into_eval}};
  j["sim"] = {{"x0", cfg.sim.x0}, {"warmup_x", cfg.sim.warmup_x}, {"warmup_days", cfg.sim.warmup_days}};
  j["root_seed"] = cfg.root_seed;
  j["runs"] = cfg.runs;
  j["out_dir"] = cfg.out_dir;
  return j;
}

}  // namespace scalelab
