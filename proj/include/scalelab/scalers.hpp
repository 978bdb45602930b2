#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scalelab/estimator.hpp"
#include "scalelab/forecast.hpp"
#include "scalelab/mpc.hpp"
#include "scalelab/trace.hpp"

namespace scalelab {

enum class ScalerKind { kOptScaler, kMadu, kHas, kAutopilot };

inline std::string to_string(ScalerKind k) {
  switch (k) {
    case ScalerKind::kOptScaler: return "optscaler";
    case ScalerKind::kMadu: return "madu";
    case ScalerKind::kHas: return "has";
    case ScalerKind::kAutopilot: return "autopilot";
  }
  return "?";
}

inline ScalerKind scaler_kind_from_string(const std::string& s) {
  if (s == "optscaler") return ScalerKind::kOptScaler;
  if (s == "madu") return ScalerKind::kMadu;
  if (s == "has") return ScalerKind::kHas;
  if (s == "autopilot") return ScalerKind::kAutopilot;
  throw ConfigError("unknown scaler kind '" + s + "'");
}

enum class Provenance { kProactive, kReactive, kCollaborative };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kProactive: return "proactive";
    case Provenance::kReactive: return "reactive";
    case Provenance::kCollaborative: return "collaborative";
  }
  return "?";
}

struct ScalerConfig {
  ScalerKind kind = ScalerKind::kOptScaler;
  int horizon_intervals = 11;  // D
  double alpha = 0.95;
  double c_star = 0.5;
  double eta = 2e-4;                   // OLR feedback strength
  int olr_batch = 0;                   // T samples per OLR refresh; 0 = whole interval
  double percentile = 0.95;            // Autopilot S
  int percentile_window = 60;          // Autopilot trailing window, minutes
  double override_bound_factor = 0.9;  // HAS reactive-override threshold on c_star

  void validate() const {
    if (horizon_intervals < 1) throw ConfigError("scaler: D must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("scaler: alpha must be in (0,1)");
    if (!(c_star > 0.0 && c_star < 1.0)) throw ConfigError("scaler: c_star must be in (0,1)");
    if (eta < 0.0) throw ConfigError("scaler: eta must be >= 0");
    if (!(percentile > 0.0 && percentile < 1.0)) throw ConfigError("scaler: percentile S must be in (0,1)");
    if (percentile_window < 1) throw ConfigError("scaler: percentile window must be >= 1");
    if (!(override_bound_factor > 0.0 && override_bound_factor <= 1.0)) {
      throw ConfigError("scaler: override bound factor must be in (0,1]");
    }
  }
};

struct ScalerDecision {
  std::int64_t minute = 0;
  int delta = 0;   // u, nodes
  int target = 0;  // resulting node count
  Provenance provenance = Provenance::kCollaborative;
  bool error_hold = false;  // insufficient history: held at u = 0
  bool softened = false;    // the governing plan interval was softened
  bool infeasible = false;
  std::optional<MpcPlan> plan;  // solver audit record where one was solved
};

/// Strategy interface. One instance per simulated cluster; decisions are
/// strictly sequential. `t_offset` indexes the decision minute inside
/// `observed`; implementations must not read past it.
class Scaler {
 public:
  virtual ~Scaler() = default;

  virtual ScalerDecision decide(std::int64_t minute, std::size_t t_offset, const TraceSet& observed,
                                const std::vector<FeedbackSample>& feedback, int current_x) = 0;

  /// Current CPU estimate for feedback-error accounting; nullopt when the
  /// strategy has no estimator (Autopilot).
  virtual std::optional<double> predict_cpu(const std::vector<double>& y, int x) const {
    (void)y;
    (void)x;
    return std::nullopt;
  }

  virtual const CpuEstimator* estimator() const { return nullptr; }
  virtual ScalerKind kind() const = 0;

  /// How many trailing feedback samples decide() wants, given the control
  /// interval length h.
  virtual int feedback_need(int h) const { return h; }
};

/// The shared proactive->optimization pipeline behind OptScaler, Madu and
/// HAS: refresh the estimator by OLR (strength eta; 0 freezes it), forecast
/// (D+1)*h minutes, reduce to interval peaks, solve the chance-constrained
/// plan and round the first action. Madu is exactly this pipeline with
/// eta = 0; HAS adds a reactive override on top of the frozen pipeline.
class PipelineScaler : public Scaler {
 public:
  PipelineScaler(ScalerConfig cfg, ScalingLimits limits, const ForecastModel* model, CpuEstimator est)
      : cfg_(std::move(cfg)), limits_(limits), model_(model), estimator_(std::move(est)) {
    cfg_.validate();
    limits_.validate();
    if (model_ == nullptr) throw ConfigError("pipeline scaler requires a trained forecast model");
    estimator_.validate();
  }

  ScalerDecision decide(std::int64_t minute, std::size_t t_offset, const TraceSet& observed,
                        const std::vector<FeedbackSample>& feedback, int current_x) override {
    const double eta = cfg_.kind == ScalerKind::kOptScaler ? cfg_.eta : 0.0;
    estimator_ = olr_update(estimator_, feedback, eta);

    ScalerDecision out;
    out.minute = minute;
    out.provenance = provenance_();

    const int need = (cfg_.horizon_intervals + 1) * limits_.h;
    if (t_offset < static_cast<std::size_t>(model_->local.context) || need > model_->local.horizon) {
      out.error_hold = true;
      out.softened = true;
      out.delta = 0;
      out.target = current_x;
      return out;
    }

    const auto forecast = predict(*model_, observed, t_offset, need);
    MpcProblem problem;
    problem.x0 = current_x;
    problem.horizon = cfg_.horizon_intervals;
    problem.peaks = interval_peaks(forecast, limits_.h, cfg_.horizon_intervals);
    problem.c_star = cfg_.c_star;
    problem.alpha = cfg_.alpha;
    problem.estimator = estimator_;

    MpcPlan plan = solve_mpc(problem, limits_);
    out.delta = round_first_action(plan, current_x, limits_);
    out.target = current_x + out.delta;
    out.softened = plan.softened_intervals.count(1) > 0;
    out.infeasible = !plan.feasible;
    out.plan = std::move(plan);

    if (cfg_.kind == ScalerKind::kHas && !feedback.empty()) {
      const double c_prev = feedback.back().cpu;
      if (c_prev > cfg_.override_bound_factor * cfg_.c_star) {
        // reactive override:
        //   u = max(X_min - x, min((c/c* - 1) x, h s / tau, X_max - x))
        const double raw = (c_prev / cfg_.c_star - 1.0) * current_x;
        const double bounded = std::max(static_cast<double>(limits_.x_min - current_x),
                                        std::min({raw, static_cast<double>(limits_.ramp()),
                                                  static_cast<double>(limits_.x_max - current_x)}));
        out.delta = static_cast<int>(std::llround(bounded));
        out.target = current_x + out.delta;
        out.provenance = Provenance::kReactive;
        out.softened = false;
        out.infeasible = false;
      }
    }
    return out;
  }

  std::optional<double> predict_cpu(const std::vector<double>& y, int x) const override {
    return predict_mean(estimator_, y, x);
  }

  const CpuEstimator* estimator() const override { return &estimator_; }
  ScalerKind kind() const override { return cfg_.kind; }
  int feedback_need(int h) const override { return cfg_.olr_batch > 0 ? cfg_.olr_batch : h; }

 private:
  Provenance provenance_() const {
    switch (cfg_.kind) {
      case ScalerKind::kOptScaler: return Provenance::kCollaborative;
      case ScalerKind::kMadu:
      case ScalerKind::kHas: return Provenance::kProactive;
      default: return Provenance::kReactive;
    }
  }

  ScalerConfig cfg_;
  ScalingLimits limits_;
  const ForecastModel* model_;
  CpuEstimator estimator_;
};

/// Nearest-rank percentile: the ceil(S*n)-th smallest sample (1-indexed).
inline double nearest_rank_percentile(std::vector<double> samples, double s) {
  if (samples.empty()) throw InvariantError("percentile of an empty window");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(s * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return samples[rank - 1];
}

/// Reactive percentile scaler: take the S-th percentile of the trailing CPU
/// window and retarget x so that level would sit at c_star.
class AutopilotScaler : public Scaler {
 public:
  AutopilotScaler(ScalerConfig cfg, ScalingLimits limits) : cfg_(std::move(cfg)), limits_(limits) {
    cfg_.validate();
    limits_.validate();
  }

  ScalerDecision decide(std::int64_t minute, std::size_t /*t_offset*/, const TraceSet& /*observed*/,
                        const std::vector<FeedbackSample>& feedback, int current_x) override {
    ScalerDecision out;
    out.minute = minute;
    out.provenance = Provenance::kReactive;
    if (feedback.empty()) {
      out.error_hold = true;
      out.delta = 0;
      out.target = current_x;
      return out;
    }
    std::vector<double> window;
    const std::size_t take = std::min<std::size_t>(feedback.size(), static_cast<std::size_t>(cfg_.percentile_window));
    for (std::size_t i = feedback.size() - take; i < feedback.size(); ++i) window.push_back(feedback[i].cpu);
    const double c_hat = nearest_rank_percentile(std::move(window), cfg_.percentile);

    const int target = static_cast<int>(std::ceil(current_x * c_hat / cfg_.c_star));
    const int ramp = limits_.ramp();
    int u = std::clamp(target - current_x, -ramp, ramp);
    const int landed = std::clamp(current_x + u, limits_.x_min, limits_.x_max);
    out.delta = landed - current_x;
    out.target = landed;
    return out;
  }

  ScalerKind kind() const override { return ScalerKind::kAutopilot; }
  int feedback_need(int h) const override { return std::max(h, cfg_.percentile_window); }

 private:
  ScalerConfig cfg_;
  ScalingLimits limits_;
};

inline std::unique_ptr<Scaler> make_scaler(const ScalerConfig& cfg, const ScalingLimits& limits,
                                           const ForecastModel* model, const CpuEstimator& est) {
  if (cfg.kind == ScalerKind::kAutopilot) return std::make_unique<AutopilotScaler>(cfg, limits);
  return std::make_unique<PipelineScaler>(cfg, limits, model, est);
}

}  // namespace scalelab
