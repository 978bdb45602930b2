#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "scalelab/error.hpp"
#include "scalelab/linalg.hpp"
#include "scalelab/normal.hpp"

namespace scalelab {

constexpr double kSigmaFloor = 1e-6;

/// One minute of cluster feedback: the workload vector, the node count it
/// ran on, and the observed mean CPU utilization.
struct FeedbackSample {
  std::int64_t minute = 0;
  std::vector<double> workload;  // y^t, QPS per LRA
  int nodes = 1;                 // x^t >= 1
  double cpu = 0.0;              // c^t in [0, 1]
};

/// Heteroscedastic linear CPU model:
///   mean(y, x) = w_b + y' w_k / x
///   std(y, x)  = sigma_b + y' sigma_k / x
/// Slopes and std parameters are non-negative, so both maps are monotone in
/// the unit workload and the predicted std is valid for any y >= 0, x >= 1.
struct CpuEstimator {
  double w_b = 0.0;
  std::vector<double> w_k;
  double sigma_b = 0.0;
  std::vector<double> sigma_k;

  std::size_t n_lras() const { return w_k.size(); }

  void validate() const {
    if (w_k.size() != sigma_k.size()) throw InvariantError("estimator: slope size mismatch");
    if (sigma_b < 0.0) throw InvariantError("estimator: sigma_b < 0");
    for (double v : w_k) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvariantError("estimator: w_k must be >= 0 and finite");
    }
    for (double v : sigma_k) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvariantError("estimator: sigma_k must be >= 0 and finite");
    }
  }
};

inline double predict_mean(const CpuEstimator& est, const std::vector<double>& y, int x) {
  if (x < 1) throw InvariantError("predict_mean: node count must be >= 1");
  if (y.size() != est.w_k.size()) throw InvariantError("predict_mean: workload dimension mismatch");
  double acc = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) acc += y[n] * est.w_k[n];
  return est.w_b + acc / static_cast<double>(x);
}

inline double predict_std(const CpuEstimator& est, const std::vector<double>& y, int x) {
  if (x < 1) throw InvariantError("predict_std: node count must be >= 1");
  if (y.size() != est.sigma_k.size()) throw InvariantError("predict_std: workload dimension mismatch");
  double acc = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) acc += y[n] * est.sigma_k[n];
  return est.sigma_b + acc / static_cast<double>(x);
}

/// alpha-quantile of the predicted CPU distribution: mean + psi^-1(alpha)*std.
inline double upper_quantile(const CpuEstimator& est, const std::vector<double>& y, int x, double alpha) {
  return predict_mean(est, y, x) + normal_quantile(alpha) * predict_std(est, y, x);
}

/// Widrow-Hoff online update of the slopes from a batch of feedback,
/// processed in time order:
///   e = mean(y,x) - c_observed;  w_k <- max(0, w_k - eta * e * y/x)
/// Intercept and std parameters stay fixed. eta = 0 leaves the estimator
/// untouched (frozen mode).
inline CpuEstimator olr_update(const CpuEstimator& est, const std::vector<FeedbackSample>& batch, double eta) {
  if (eta < 0.0) throw ConfigError("olr_update: eta must be >= 0");
  CpuEstimator out = est;
  if (eta == 0.0) return out;
  for (const auto& s : batch) {
    if (s.nodes < 1) throw InvariantError("olr_update: sample with node count < 1");
    const double err = predict_mean(out, s.workload, s.nodes) - s.cpu;
    const double inv_x = 1.0 / static_cast<double>(s.nodes);
    for (std::size_t n = 0; n < out.w_k.size(); ++n) {
      out.w_k[n] = std::max(0.0, out.w_k[n] - eta * err * s.workload[n] * inv_x);
    }
  }
  return out;
}

namespace detail {

/// Gaussian log-likelihood of residuals with std linear in unit workload.
inline double sigma_loglik(const Eigen::MatrixXd& U, const Eigen::VectorXd& r,
                           double sigma_b, const Eigen::VectorXd& sigma_k) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double s = std::max(sigma_b + U.row(i).dot(sigma_k), kSigmaFloor);
    ll += -std::log(s) - r[i] * r[i] / (2.0 * s * s);
  }
  return ll;
}

}  // namespace detail

/// Initialize the estimator from historical feedback by constrained maximum
/// likelihood, in two stages:
///  1. mean parameters: least squares of c on unit workload, slopes held
///     non-negative (intercept free, clamped at zero afterwards if negative);
///  2. std parameters: Gaussian likelihood of the stage-1 residuals with
///     sigma linear in the unit workload, maximized by projected gradient
///     ascent from an absolute-residual regression scaled by sqrt(pi/2).
inline CpuEstimator init_mle(const std::vector<FeedbackSample>& samples) {
  if (samples.empty()) throw InvariantError("init_mle: no samples");
  const std::size_t n_lras = samples.front().workload.size();
  const std::size_t m = samples.size();
  if (m < n_lras + 2) throw InvariantError("init_mle: need at least N+2 samples");

  Eigen::MatrixXd U(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_lras));
  Eigen::VectorXd c(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& s = samples[i];
    if (s.workload.size() != n_lras) throw InvariantError("init_mle: inconsistent workload dimension");
    if (s.nodes < 1) throw InvariantError("init_mle: sample with node count < 1");
    for (std::size_t n = 0; n < n_lras; ++n) {
      U(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = s.workload[n] / static_cast<double>(s.nodes);
    }
    c[static_cast<Eigen::Index>(i)] = s.cpu;
  }

  // Distinct unit-workload rows are required for an identifiable design.
  {
    bool distinct = false;
    for (std::size_t i = 1; i < m && !distinct; ++i) {
      if ((U.row(static_cast<Eigen::Index>(i)) - U.row(0)).cwiseAbs().maxCoeff() > 0.0) distinct = true;
    }
    if (!distinct && n_lras > 0 && U.cwiseAbs().maxCoeff() > 0.0) {
      throw InvariantError("init_mle: degenerate design (identical unit workloads)");
    }
  }

  // Stage 1: split the free intercept into a positive and a negative part so
  // plain NNLS solves the mixed-sign problem exactly.
  Eigen::MatrixXd A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_lras) + 2);
  A.col(0).setOnes();
  A.col(1).setConstant(-1.0);
  A.rightCols(static_cast<Eigen::Index>(n_lras)) = U;
  Eigen::VectorXd sol = nnls(A, c);
  double w_b = sol[0] - sol[1];
  Eigen::VectorXd w_k = sol.tail(static_cast<Eigen::Index>(n_lras));
  if (w_b < 0.0) {
    w_b = 0.0;
    w_k = nnls(U, c);
  }

  CpuEstimator est;
  est.w_b = w_b;
  est.w_k.assign(w_k.data(), w_k.data() + w_k.size());

  // Stage 2: heteroscedastic std on stage-1 residuals.
  Eigen::VectorXd resid = c - (Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), w_b) + U * w_k);
  const double max_abs_resid = resid.cwiseAbs().maxCoeff();
  est.sigma_b = kSigmaFloor;
  est.sigma_k.assign(n_lras, 0.0);
  if (max_abs_resid <= 1e-12) return est;  // in-class noiseless data

  // Init from E|eps| = sigma * sqrt(2/pi).
  Eigen::MatrixXd As(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_lras) + 1);
  As.col(0).setOnes();
  As.rightCols(static_cast<Eigen::Index>(n_lras)) = U;
  Eigen::VectorXd abs_fit = nnls(As, resid.cwiseAbs());
  const double scale = std::sqrt(M_PI / 2.0);
  double sigma_b = std::max(abs_fit[0] * scale, kSigmaFloor);
  Eigen::VectorXd sigma_k = abs_fit.tail(static_cast<Eigen::Index>(n_lras)) * scale;

  // Projected gradient ascent with backtracking on the log-likelihood.
  double ll = detail::sigma_loglik(U, resid, sigma_b, sigma_k);
  double step = 1.0 / static_cast<double>(m);
  for (int iter = 0; iter < 200; ++iter) {
    double g_b = 0.0;
    Eigen::VectorXd g_k = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_lras));
    for (Eigen::Index i = 0; i < resid.size(); ++i) {
      const double s = std::max(sigma_b + U.row(i).dot(sigma_k), kSigmaFloor);
      const double g = -1.0 / s + resid[i] * resid[i] / (s * s * s);
      g_b += g;
      g_k += g * U.row(i).transpose();
    }
    bool improved = false;
    for (int bt = 0; bt < 40; ++bt) {
      const double nb = std::max(sigma_b + step * g_b, 0.0);
      Eigen::VectorXd nk = (sigma_k + step * g_k).cwiseMax(0.0);
      const double nll = detail::sigma_loglik(U, resid, nb, nk);
      if (nll > ll + 1e-12) {
        sigma_b = nb;
        sigma_k = nk;
        ll = nll;
        improved = true;
        step *= 1.5;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }

  est.sigma_b = std::max(sigma_b, kSigmaFloor);
  est.sigma_k.assign(sigma_k.data(), sigma_k.data() + sigma_k.size());
  est.validate();
  return est;
}

}  // namespace scalelab
