#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scalelab/error.hpp"
#include "scalelab/linalg.hpp"
#include "scalelab/rng.hpp"
#include "scalelab/trace.hpp"

namespace scalelab {

// ---------------------------------------------------------------------------
// Long-term periodic block
// ---------------------------------------------------------------------------

/// Truncated Fourier series per LRA over a set of periods. The intercept is
/// shared across periods (kept in a[0][0] of the first period; the n=0
/// terms of the other periods are fixed at zero so the joint fit stays
/// full-rank). b[p][0] multiplies sin(0) and is always zero.
struct FourierBlock {
  std::vector<double> periods;  // e.g. {1440, 10080}
  int order = 0;                // N-hat per period

  struct Coefficients {
    // a[p][n], b[p][n] for n in 0..order
    std::vector<std::vector<double>> a;
    std::vector<std::vector<double>> b;
  };
  std::vector<Coefficients> per_lra;

  std::size_t n_lras() const { return per_lra.size(); }
};

inline double eval_fourier_at(const FourierBlock& block, std::size_t lra, double t) {
  if (lra >= block.per_lra.size()) throw InvariantError("eval_fourier: unknown LRA index");
  const auto& co = block.per_lra[lra];
  double acc = 0.0;
  for (std::size_t p = 0; p < block.periods.size(); ++p) {
    const double period = block.periods[p];
    for (int n = 0; n <= block.order; ++n) {
      const double w = 2.0 * M_PI * static_cast<double>(n) * t / period;
      acc += co.a[p][static_cast<std::size_t>(n)] * std::cos(w) +
             co.b[p][static_cast<std::size_t>(n)] * std::sin(w);
    }
  }
  return acc;
}

/// Evaluate the periodic component for minutes [t_begin, t_end).
inline std::vector<double> eval_fourier(const FourierBlock& block, std::size_t lra,
                                        std::int64_t t_begin, std::int64_t t_end) {
  if (t_end < t_begin) throw ConfigError("eval_fourier: empty range");
  std::vector<double> out(static_cast<std::size_t>(t_end - t_begin));
  for (std::int64_t t = t_begin; t < t_end; ++t) {
    out[static_cast<std::size_t>(t - t_begin)] = eval_fourier_at(block, lra, static_cast<double>(t));
  }
  return out;
}

/// Per-LRA least-squares fit of the truncated Fourier series on the full
/// trace, all periods jointly. Time is the absolute epoch minute, so the
/// learned phases carry over to any future evaluation range.
inline FourierBlock fit_fourier(const TraceSet& ts, const std::vector<double>& periods, int order) {
  ts.validate();
  if (periods.empty()) throw ConfigError("fit_fourier: need at least one period");
  for (double p : periods) {
    if (p <= 0.0) throw ConfigError("fit_fourier: periods must be > 0");
  }
  if (order < 0) throw ConfigError("fit_fourier: order must be >= 0");
  const double max_period = *std::max_element(periods.begin(), periods.end());
  const std::size_t len = ts.length();
  if (static_cast<double>(len) < max_period) {
    throw InvariantError("fit_fourier: trace shorter than the largest period");
  }

  const std::size_t n_cols = 1 + periods.size() * 2 * static_cast<std::size_t>(order);
  if (len < n_cols) throw InvariantError("fit_fourier: rank-deficient design (trace too short)");

  Eigen::MatrixXd X(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(n_cols));
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(ts.start_minute() + static_cast<std::int64_t>(i));
    Eigen::Index col = 0;
    X(static_cast<Eigen::Index>(i), col++) = 1.0;
    for (double period : periods) {
      for (int n = 1; n <= order; ++n) {
        const double w = 2.0 * M_PI * static_cast<double>(n) * t / period;
        X(static_cast<Eigen::Index>(i), col++) = std::cos(w);
        X(static_cast<Eigen::Index>(i), col++) = std::sin(w);
      }
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < static_cast<Eigen::Index>(n_cols)) {
    throw InvariantError("fit_fourier: rank-deficient design");
  }

  FourierBlock block;
  block.periods = periods;
  block.order = order;
  block.per_lra.resize(ts.count());
  for (std::size_t lra = 0; lra < ts.count(); ++lra) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(len));
    for (std::size_t i = 0; i < len; ++i) y[static_cast<Eigen::Index>(i)] = ts.at(lra).values[i];
    Eigen::VectorXd beta = qr.solve(y);

    auto& co = block.per_lra[lra];
    co.a.assign(periods.size(), std::vector<double>(static_cast<std::size_t>(order) + 1, 0.0));
    co.b.assign(periods.size(), std::vector<double>(static_cast<std::size_t>(order) + 1, 0.0));
    Eigen::Index col = 0;
    co.a[0][0] = beta[col++];
    for (std::size_t p = 0; p < periods.size(); ++p) {
      for (int n = 1; n <= order; ++n) {
        co.a[p][static_cast<std::size_t>(n)] = beta[col++];
        co.b[p][static_cast<std::size_t>(n)] = beta[col++];
      }
    }
  }
  return block;
}

// ---------------------------------------------------------------------------
// Covariates
// ---------------------------------------------------------------------------

/// Known calendar + identity features for one minute: sin/cos of
/// minute-of-day, sin/cos of minute-of-week, day-of-week one-hot, LRA
/// one-hot. Dimension 4 + 7 + n_lras.
inline Eigen::VectorXd covariates(std::int64_t minute, std::size_t lra, std::size_t n_lras) {
  Eigen::VectorXd z(4 + 7 + static_cast<Eigen::Index>(n_lras));
  z.setZero();
  const double mod_day = static_cast<double>(((minute % kMinutesPerDay) + kMinutesPerDay) % kMinutesPerDay);
  const double mod_week = static_cast<double>(((minute % kMinutesPerWeek) + kMinutesPerWeek) % kMinutesPerWeek);
  z[0] = std::sin(2.0 * M_PI * mod_day / kMinutesPerDay);
  z[1] = std::cos(2.0 * M_PI * mod_day / kMinutesPerDay);
  z[2] = std::sin(2.0 * M_PI * mod_week / kMinutesPerWeek);
  z[3] = std::cos(2.0 * M_PI * mod_week / kMinutesPerWeek);
  const std::int64_t day = ((minute / kMinutesPerDay) % 7 + 7) % 7;
  z[4 + day] = 1.0;
  z[11 + static_cast<Eigen::Index>(lra)] = 1.0;
  return z;
}

inline Eigen::Index covariate_dim(std::size_t n_lras) { return 11 + static_cast<Eigen::Index>(n_lras); }

// ---------------------------------------------------------------------------
// Flow-normalized linear attention
// ---------------------------------------------------------------------------

struct FlowAttentionResult {
  Eigen::MatrixXd aggregated;  // pre-allocation output (rows are convex
                               // combinations of the competed value rows)
  Eigen::MatrixXd allocated;   // final output, rows scaled by sigmoid(i)
};

namespace detail {

inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

/// Forward intermediates kept for the hand-derived backward pass.
struct FlowAttnCache {
  Eigen::MatrixXd Qs, Ks;  // sigmoid of inputs
  Eigen::MatrixXd V;
  Eigen::VectorXd ksum, qsum;  // column sums of Ks / Qs
  Eigen::VectorXd incoming;    // i = Qs * ksum          (n)
  Eigen::VectorXd outgoing;    // o = Ks * qsum          (m)
  Eigen::VectorXd competition; // softmax(o)             (m)
  Eigen::MatrixXd Vt;          // diag(m * softmax(o)) V
  Eigen::MatrixXd A;           // Ks' Vt                 (d x v)
  Eigen::MatrixXd B;           // Qs A                   (n x v)
  Eigen::MatrixXd Out;         // diag(1/i) B
  Eigen::MatrixXd Outp;        // diag(sigmoid(i)) Out
};

inline void flow_attention_forward(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& K,
                                   const Eigen::MatrixXd& V, FlowAttnCache& c) {
  const Eigen::Index m = K.rows();
  c.Qs = sigmoid(Q);
  c.Ks = sigmoid(K);
  c.V = V;
  c.ksum = c.Ks.colwise().sum().transpose();
  c.qsum = c.Qs.colwise().sum().transpose();
  c.incoming = c.Qs * c.ksum;
  c.outgoing = c.Ks * c.qsum;

  const double omax = c.outgoing.maxCoeff();
  Eigen::VectorXd ex = (c.outgoing.array() - omax).exp();
  c.competition = ex / ex.sum();

  c.Vt = (static_cast<double>(m) * c.competition).asDiagonal() * V;
  c.A = c.Ks.transpose() * c.Vt;
  c.B = c.Qs * c.A;
  c.Out = c.incoming.cwiseInverse().asDiagonal() * c.B;
  c.Outp = sigmoid(c.incoming).asDiagonal() * c.Out;
}

struct FlowAttnGrads {
  Eigen::MatrixXd dQ, dK, dV;
};

/// Backward pass of flow_attention_forward given dL/dOutp.
inline FlowAttnGrads flow_attention_backward(const FlowAttnCache& c, const Eigen::MatrixXd& g_outp) {
  const Eigen::Index n = c.Qs.rows();
  const Eigen::Index m = c.Ks.rows();

  const Eigen::VectorXd si = sigmoid(c.incoming);
  Eigen::MatrixXd g_out = si.asDiagonal() * g_outp;

  Eigen::VectorXd g_i(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    // allocation: d(sigmoid(i_r) * Out_r) / d i_r
    g_i[r] = si[r] * (1.0 - si[r]) * g_outp.row(r).dot(c.Out.row(r));
    // aggregation: Out_r = B_r / i_r
    g_i[r] += -g_out.row(r).dot(c.B.row(r)) / (c.incoming[r] * c.incoming[r]);
  }
  Eigen::MatrixXd g_B = c.incoming.cwiseInverse().asDiagonal() * g_out;

  Eigen::MatrixXd g_Qs = g_B * c.A.transpose();
  Eigen::MatrixXd g_A = c.Qs.transpose() * g_B;

  Eigen::MatrixXd g_Ks = c.Vt * g_A.transpose();
  Eigen::MatrixXd g_Vt = c.Ks * g_A;

  FlowAttnGrads g;
  g.dV = (static_cast<double>(m) * c.competition).asDiagonal() * g_Vt;
  Eigen::VectorXd g_p(m);
  for (Eigen::Index j = 0; j < m; ++j) g_p[j] = static_cast<double>(m) * g_Vt.row(j).dot(c.V.row(j));

  // softmax backward
  const double inner = c.competition.dot(g_p);
  Eigen::VectorXd g_o = c.competition.cwiseProduct(g_p.array().matrix() - Eigen::VectorXd::Constant(m, inner));

  g_Ks += g_o * c.qsum.transpose();
  Eigen::VectorXd g_qsum = c.Ks.transpose() * g_o;
  g_Qs += Eigen::VectorXd::Ones(n) * g_qsum.transpose();

  g_Qs += g_i * c.ksum.transpose();
  Eigen::VectorXd g_ksum = c.Qs.transpose() * g_i;
  g_Ks += Eigen::VectorXd::Ones(m) * g_ksum.transpose();

  g.dQ = g_Qs.cwiseProduct(c.Qs.cwiseProduct((1.0 - c.Qs.array()).matrix()));
  g.dK = g_Ks.cwiseProduct(c.Ks.cwiseProduct((1.0 - c.Ks.array()).matrix()));
  return g;
}

}  // namespace detail

/// Linear-complexity attention: logistic nonlinearities on queries/keys,
/// value competition through a softmax over outgoing flow, aggregation
/// normalized by incoming flow, allocation scaled by sigmoid(incoming).
/// Cost O((n+m) d v); no n x m matrix is formed.
inline FlowAttentionResult flow_attention_full(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& K,
                                               const Eigen::MatrixXd& V) {
  if (Q.cols() != K.cols()) throw InvariantError("flow_attention: Q/K width mismatch");
  if (K.rows() != V.rows()) throw InvariantError("flow_attention: K/V row mismatch");
  if (Q.rows() < 1 || K.rows() < 1) throw InvariantError("flow_attention: empty inputs");
  detail::FlowAttnCache c;
  detail::flow_attention_forward(Q, K, V, c);
  return FlowAttentionResult{c.Out, c.Outp};
}

inline Eigen::MatrixXd flow_attention(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& K,
                                      const Eigen::MatrixXd& V) {
  return flow_attention_full(Q, K, V).allocated;
}

// ---------------------------------------------------------------------------
// Short-term local block
// ---------------------------------------------------------------------------

/// One encoder + one decoder layer of the flow-normalized attention over
/// the residual series:
///   E     = [y_l | Z_hist] W_in + b_in
///   H_enc = FA(E W_eq, E W_ek, E W_ev)
///   D     = FA(Z_fut W_dq, Z_hist W_dk, H_enc W_dv)
///   y_hat = D w_out + b_out
/// The decoder queries are the future covariates, so the output has one row
/// per future step and is non-autoregressive.
struct LocalBlock {
  int context = 1440;  // C
  int horizon = 360;   // H
  int d_model = 32;    // d_m

  Eigen::MatrixXd w_in;     // (1+dz) x d_m
  Eigen::RowVectorXd b_in;  // d_m
  Eigen::MatrixXd w_eq, w_ek, w_ev;  // d_m x d_m
  Eigen::MatrixXd w_dq, w_dk;        // dz x d_m
  Eigen::MatrixXd w_dv;              // d_m x d_m
  Eigen::VectorXd w_out;             // d_m
  double b_out = 0.0;

  Eigen::Index dz() const { return w_dq.rows(); }

  void init_zero(std::size_t n_lras) {
    const Eigen::Index z = covariate_dim(n_lras);
    w_in = Eigen::MatrixXd::Zero(1 + z, d_model);
    b_in = Eigen::RowVectorXd::Zero(d_model);
    w_eq = Eigen::MatrixXd::Zero(d_model, d_model);
    w_ek = Eigen::MatrixXd::Zero(d_model, d_model);
    w_ev = Eigen::MatrixXd::Zero(d_model, d_model);
    w_dq = Eigen::MatrixXd::Zero(z, d_model);
    w_dk = Eigen::MatrixXd::Zero(z, d_model);
    w_dv = Eigen::MatrixXd::Zero(d_model, d_model);
    w_out = Eigen::VectorXd::Zero(d_model);
    b_out = 0.0;
  }

  void init_random(std::size_t n_lras, Rng& rng) {
    init_zero(n_lras);
    const double r = 1.0 / std::sqrt(static_cast<double>(d_model));
    auto fill = [&](Eigen::MatrixXd& w) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-r, r);
      }
    };
    fill(w_in);
    fill(w_eq);
    fill(w_ek);
    fill(w_ev);
    fill(w_dq);
    fill(w_dk);
    fill(w_dv);
    for (Eigen::Index j = 0; j < w_out.size(); ++j) w_out[j] = rng.uniform(-r, r);
  }
};

namespace detail {

struct LocalForwardCache {
  Eigen::MatrixXd X;       // (C+1) x (1+dz)
  Eigen::MatrixXd Z_hist;  // (C+1) x dz
  Eigen::MatrixXd Z_fut;   // H x dz
  Eigen::MatrixXd E;       // (C+1) x d_m
  FlowAttnCache enc;
  Eigen::MatrixXd Henc;    // == enc.Outp
  FlowAttnCache dec;
  Eigen::MatrixXd Dout;    // H x d_m
  Eigen::VectorXd yhat;    // H
};

inline void local_forward_cached(const LocalBlock& lb, const Eigen::VectorXd& resid_hist,
                                 const Eigen::MatrixXd& z_hist, const Eigen::MatrixXd& z_fut,
                                 LocalForwardCache& c) {
  const Eigen::Index ctx = lb.context + 1;
  if (resid_hist.size() != ctx) throw InvariantError("local_forward: history length must be C+1");
  if (z_hist.rows() != ctx || z_fut.rows() != lb.horizon) {
    throw InvariantError("local_forward: covariate shape mismatch");
  }
  if (z_hist.cols() != lb.dz() || z_fut.cols() != lb.dz()) {
    throw InvariantError("local_forward: covariate dimension mismatch");
  }

  c.Z_hist = z_hist;
  c.Z_fut = z_fut;
  c.X.resize(ctx, 1 + lb.dz());
  c.X.col(0) = resid_hist;
  c.X.rightCols(lb.dz()) = z_hist;

  c.E = c.X * lb.w_in;
  c.E.rowwise() += lb.b_in;

  flow_attention_forward(c.E * lb.w_eq, c.E * lb.w_ek, c.E * lb.w_ev, c.enc);
  c.Henc = c.enc.Outp;

  flow_attention_forward(z_fut * lb.w_dq, z_hist * lb.w_dk, c.Henc * lb.w_dv, c.dec);
  c.Dout = c.dec.Outp;
  c.yhat = c.Dout * lb.w_out + Eigen::VectorXd::Constant(lb.horizon, lb.b_out);
}

/// Parameter gradients, same shapes as the LocalBlock parameters.
struct LocalGrads {
  Eigen::MatrixXd w_in;
  Eigen::RowVectorXd b_in;
  Eigen::MatrixXd w_eq, w_ek, w_ev;
  Eigen::MatrixXd w_dq, w_dk, w_dv;
  Eigen::VectorXd w_out;
  double b_out = 0.0;

  void init_like(const LocalBlock& lb) {
    w_in = Eigen::MatrixXd::Zero(lb.w_in.rows(), lb.w_in.cols());
    b_in = Eigen::RowVectorXd::Zero(lb.b_in.cols());
    w_eq = Eigen::MatrixXd::Zero(lb.w_eq.rows(), lb.w_eq.cols());
    w_ek = Eigen::MatrixXd::Zero(lb.w_ek.rows(), lb.w_ek.cols());
    w_ev = Eigen::MatrixXd::Zero(lb.w_ev.rows(), lb.w_ev.cols());
    w_dq = Eigen::MatrixXd::Zero(lb.w_dq.rows(), lb.w_dq.cols());
    w_dk = Eigen::MatrixXd::Zero(lb.w_dk.rows(), lb.w_dk.cols());
    w_dv = Eigen::MatrixXd::Zero(lb.w_dv.rows(), lb.w_dv.cols());
    w_out = Eigen::VectorXd::Zero(lb.w_out.size());
    b_out = 0.0;
  }

  void accumulate(const LocalGrads& o) {
    w_in += o.w_in;
    b_in += o.b_in;
    w_eq += o.w_eq;
    w_ek += o.w_ek;
    w_ev += o.w_ev;
    w_dq += o.w_dq;
    w_dk += o.w_dk;
    w_dv += o.w_dv;
    w_out += o.w_out;
    b_out += o.b_out;
  }

  void scale(double f) {
    w_in *= f;
    b_in *= f;
    w_eq *= f;
    w_ek *= f;
    w_ev *= f;
    w_dq *= f;
    w_dk *= f;
    w_dv *= f;
    w_out *= f;
    b_out *= f;
  }

  double squared_norm() const {
    return w_in.squaredNorm() + b_in.squaredNorm() + w_eq.squaredNorm() + w_ek.squaredNorm() +
           w_ev.squaredNorm() + w_dq.squaredNorm() + w_dk.squaredNorm() + w_dv.squaredNorm() +
           w_out.squaredNorm() + b_out * b_out;
  }
};

/// Backpropagation through the whole local block given dL/dyhat.
inline LocalGrads local_backward(const LocalBlock& lb, const LocalForwardCache& c,
                                 const Eigen::VectorXd& g_yhat) {
  LocalGrads g;
  g.init_like(lb);

  g.w_out = c.Dout.transpose() * g_yhat;
  g.b_out = g_yhat.sum();
  Eigen::MatrixXd g_dout = g_yhat * lb.w_out.transpose();

  FlowAttnGrads gd = flow_attention_backward(c.dec, g_dout);
  g.w_dq = c.Z_fut.transpose() * gd.dQ;
  g.w_dk = c.Z_hist.transpose() * gd.dK;
  g.w_dv = c.Henc.transpose() * gd.dV;
  Eigen::MatrixXd g_henc = gd.dV * lb.w_dv.transpose();

  FlowAttnGrads ge = flow_attention_backward(c.enc, g_henc);
  g.w_eq = c.E.transpose() * ge.dQ;
  g.w_ek = c.E.transpose() * ge.dK;
  g.w_ev = c.E.transpose() * ge.dV;
  Eigen::MatrixXd g_e = ge.dQ * lb.w_eq.transpose() + ge.dK * lb.w_ek.transpose() +
                        ge.dV * lb.w_ev.transpose();

  g.w_in = c.X.transpose() * g_e;
  g.b_in = g_e.colwise().sum();
  return g;
}

}  // namespace detail

/// Residual forecast over the next H minutes from the residual history
/// y_l^{t-C..t} and covariates covering t-C..t+H.
inline Eigen::VectorXd local_forward(const LocalBlock& lb, const Eigen::VectorXd& resid_hist,
                                     const Eigen::MatrixXd& z_hist, const Eigen::MatrixXd& z_fut) {
  detail::LocalForwardCache c;
  detail::local_forward_cached(lb, resid_hist, z_hist, z_fut, c);
  return c.yhat;
}

// ---------------------------------------------------------------------------
// Quantile loss
// ---------------------------------------------------------------------------

/// Mean over elements of max(q (y - yhat), (q - 1)(y - yhat)).
inline double quantile_loss(const std::vector<double>& y, const std::vector<double>& yhat, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile_loss: q must be in (0,1)");
  if (y.size() != yhat.size() || y.empty()) throw InvariantError("quantile_loss: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    acc += std::max(q * d, (q - 1.0) * d);
  }
  return acc / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct ForecastModel {
  FourierBlock fourier;
  LocalBlock local;
  double quantile = 0.5;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;

  std::size_t n_lras() const { return fourier.n_lras(); }
};

struct TrainConfig {
  std::vector<double> periods = {kMinutesPerDay, kMinutesPerWeek};
  int fourier_order = 6;
  int context = 1440;
  int horizon = 360;
  int d_model = 32;
  double quantile = 0.5;
  int epochs = 30;
  int windows_per_epoch = 64;
  int batch_size = 8;
  double step_size = 1e-3;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
};

namespace detail {

/// Cached residual series + covariates for training windows.
struct ResidualPanel {
  std::vector<std::vector<double>> resid;  // [lra][minute offset]
  std::int64_t start_minute = 0;
};

inline ResidualPanel residual_panel(const TraceSet& ts, const FourierBlock& block) {
  ResidualPanel panel;
  panel.start_minute = ts.start_minute();
  panel.resid.resize(ts.count());
  for (std::size_t n = 0; n < ts.count(); ++n) {
    const auto fitted = eval_fourier(block, n, ts.start_minute(), ts.start_minute() + static_cast<std::int64_t>(ts.length()));
    panel.resid[n].resize(ts.length());
    for (std::size_t i = 0; i < ts.length(); ++i) panel.resid[n][i] = ts.at(n).values[i] - fitted[i];
  }
  return panel;
}

struct WindowData {
  Eigen::VectorXd resid_hist;
  Eigen::MatrixXd z_hist;
  Eigen::MatrixXd z_fut;
  std::vector<double> target;  // residual targets over the horizon
};

inline WindowData make_window(const ResidualPanel& panel, std::size_t lra, std::size_t n_lras,
                              std::size_t t_offset, int C, int H) {
  WindowData w;
  w.resid_hist.resize(C + 1);
  w.z_hist.resize(C + 1, covariate_dim(n_lras));
  w.z_fut.resize(H, covariate_dim(n_lras));
  for (int k = 0; k <= C; ++k) {
    const std::size_t idx = t_offset - static_cast<std::size_t>(C) + static_cast<std::size_t>(k);
    w.resid_hist[k] = panel.resid[lra][idx];
    w.z_hist.row(k) = covariates(panel.start_minute + static_cast<std::int64_t>(idx), lra, n_lras).transpose();
  }
  for (int k = 0; k < H; ++k) {
    const std::size_t idx = t_offset + 1 + static_cast<std::size_t>(k);
    w.z_fut.row(k) = covariates(panel.start_minute + static_cast<std::int64_t>(idx), lra, n_lras).transpose();
    w.target.push_back(panel.resid[lra][idx]);
  }
  return w;
}

/// dL/dyhat of the quantile loss (mean over the horizon).
inline Eigen::VectorXd quantile_loss_grad(const std::vector<double>& y, const Eigen::VectorXd& yhat, double q) {
  Eigen::VectorXd g(yhat.size());
  const double inv = 1.0 / static_cast<double>(yhat.size());
  for (Eigen::Index i = 0; i < yhat.size(); ++i) {
    const double d = y[static_cast<std::size_t>(i)] - yhat[i];
    if (d > 0.0) {
      g[i] = -q * inv;
    } else if (d < 0.0) {
      g[i] = (1.0 - q) * inv;
    } else {
      g[i] = 0.0;
    }
  }
  return g;
}

}  // namespace detail

struct TrainReport {
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Proactive model training: least-squares Fourier fit first, then plain
/// SGD with hand-derived gradients on the residual windows under the
/// quantile loss. Deterministic for a fixed seed: window sampling, batch
/// order and gradient reduction order are all fixed.
inline ForecastModel train(const TraceSet& ts, const TrainConfig& cfg, TrainReport* report = nullptr) {
  ts.validate();
  if (cfg.context < cfg.horizon || cfg.horizon < 1) {
    throw ConfigError("train: need context >= horizon >= 1");
  }
  const std::size_t need = static_cast<std::size_t>(cfg.context) + static_cast<std::size_t>(cfg.horizon) + 1;
  if (ts.length() < need) throw InvariantError("train: trace too short for one (C,H) window");

  ForecastModel model;
  model.quantile = cfg.quantile;
  model.seed = cfg.seed;
  model.fourier = fit_fourier(ts, cfg.periods, cfg.fourier_order);
  model.local.context = cfg.context;
  model.local.horizon = cfg.horizon;
  model.local.d_model = cfg.d_model;

  Rng rng(derive_seed(cfg.seed, "forecast/train"));
  model.local.init_random(ts.count(), rng);

  const detail::ResidualPanel panel = detail::residual_panel(ts, model.fourier);
  const std::size_t t_lo = static_cast<std::size_t>(cfg.context);
  const std::size_t t_hi = ts.length() - static_cast<std::size_t>(cfg.horizon) - 1;

  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    int batch_count = 0;
    for (int w0 = 0; w0 < cfg.windows_per_epoch; w0 += cfg.batch_size) {
      const int batch_n = std::min(cfg.batch_size, cfg.windows_per_epoch - w0);
      detail::LocalGrads grads;
      grads.init_like(model.local);
      double batch_loss = 0.0;
      for (int b = 0; b < batch_n; ++b) {
        const std::size_t lra = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(ts.count()) - 1));
        const std::size_t t = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(t_lo), static_cast<std::int64_t>(t_hi)));
        const auto win = detail::make_window(panel, lra, ts.count(), t, cfg.context, cfg.horizon);
        detail::LocalForwardCache cache;
        detail::local_forward_cached(model.local, win.resid_hist, win.z_hist, win.z_fut, cache);
        std::vector<double> yhat(cache.yhat.data(), cache.yhat.data() + cache.yhat.size());
        batch_loss += quantile_loss(win.target, yhat, cfg.quantile);
        const Eigen::VectorXd gy = detail::quantile_loss_grad(win.target, cache.yhat, cfg.quantile);
        detail::LocalGrads g = detail::local_backward(model.local, cache, gy);
        grads.accumulate(g);
      }
      batch_loss /= batch_n;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) +
                           " (step size " + std::to_string(cfg.step_size) + ")");
      }
      grads.scale(1.0 / batch_n);
      const double gnorm = std::sqrt(grads.squared_norm());
      double step = cfg.step_size;
      if (gnorm > cfg.clip_norm) step *= cfg.clip_norm / gnorm;

      model.local.w_in -= step * grads.w_in;
      model.local.b_in -= step * grads.b_in;
      model.local.w_eq -= step * grads.w_eq;
      model.local.w_ek -= step * grads.w_ek;
      model.local.w_ev -= step * grads.w_ev;
      model.local.w_dq -= step * grads.w_dq;
      model.local.w_dk -= step * grads.w_dk;
      model.local.w_dv -= step * grads.w_dv;
      model.local.w_out -= step * grads.w_out;
      model.local.b_out -= step * grads.b_out;

      epoch_loss += batch_loss;
      ++batch_count;
    }
    last_epoch_loss = epoch_loss / std::max(batch_count, 1);
    if (report) report->epoch_loss.push_back(last_epoch_loss);
  }
  model.final_train_loss = last_epoch_loss;
  return model;
}

/// Full forecast yhat^{t+1..t+H} per LRA: Fourier evaluation plus the local
/// residual forecast, clipped below at zero. `t_offset` indexes the
/// decision minute inside `ts`; a history of `context` minutes must exist
/// before it.
inline std::vector<std::vector<double>> predict(const ForecastModel& model, const TraceSet& ts,
                                                std::size_t t_offset, int horizon) {
  ts.validate();
  if (horizon < 1 || horizon > model.local.horizon) {
    throw ConfigError("predict: horizon must be in [1, model horizon]");
  }
  const int C = model.local.context;
  if (t_offset < static_cast<std::size_t>(C) || t_offset >= ts.length()) {
    throw InvariantError("predict: insufficient history before t");
  }
  if (ts.count() != model.n_lras()) throw InvariantError("predict: trace/model LRA count mismatch");

  std::vector<std::vector<double>> out(ts.count());
  for (std::size_t n = 0; n < ts.count(); ++n) {
    const std::int64_t t_abs = ts.start_minute() + static_cast<std::int64_t>(t_offset);
    const auto fourier_hist = eval_fourier(model.fourier, n, t_abs - C, t_abs + 1);
    Eigen::VectorXd resid_hist(C + 1);
    Eigen::MatrixXd z_hist(C + 1, covariate_dim(ts.count()));
    for (int k = 0; k <= C; ++k) {
      const std::size_t idx = t_offset - static_cast<std::size_t>(C) + static_cast<std::size_t>(k);
      resid_hist[k] = ts.at(n).values[idx] - fourier_hist[static_cast<std::size_t>(k)];
      z_hist.row(k) = covariates(t_abs - C + k, n, ts.count()).transpose();
    }
    Eigen::MatrixXd z_fut(model.local.horizon, covariate_dim(ts.count()));
    for (int k = 0; k < model.local.horizon; ++k) {
      z_fut.row(k) = covariates(t_abs + 1 + k, n, ts.count()).transpose();
    }
    const Eigen::VectorXd local = local_forward(model.local, resid_hist, z_hist, z_fut);
    const auto fourier_fut = eval_fourier(model.fourier, n, t_abs + 1, t_abs + 1 + horizon);
    out[n].resize(static_cast<std::size_t>(horizon));
    for (int k = 0; k < horizon; ++k) {
      out[n][static_cast<std::size_t>(k)] = std::max(0.0, fourier_fut[static_cast<std::size_t>(k)] + local[k]);
    }
  }
  return out;
}

/// Per-interval, per-LRA maxima of a forecast: vectors y^1..y^{D+1} where
/// y^j[n] is the peak of LRA n's forecast over minutes ((j-1)h, jh].
inline std::vector<std::vector<double>> interval_peaks(const std::vector<std::vector<double>>& forecast,
                                                       int h, int D) {
  if (h < 1 || D < 1) throw ConfigError("interval_peaks: h and D must be >= 1");
  if (forecast.empty()) throw InvariantError("interval_peaks: empty forecast");
  const std::size_t need = static_cast<std::size_t>(D + 1) * static_cast<std::size_t>(h);
  for (const auto& series : forecast) {
    if (series.size() < need) throw InvariantError("interval_peaks: forecast horizon too short");
  }
  std::vector<std::vector<double>> peaks(static_cast<std::size_t>(D + 1),
                                         std::vector<double>(forecast.size(), 0.0));
  for (std::size_t n = 0; n < forecast.size(); ++n) {
    for (int j = 0; j <= D; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < h; ++k) {
        mx = std::max(mx, forecast[n][static_cast<std::size_t>(j * h + k)]);
      }
      peaks[static_cast<std::size_t>(j)][n] = mx;
    }
  }
  return peaks;
}

}  // namespace scalelab
