#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "scalelab/error.hpp"

namespace scalelab {

/// Lawson-Hanson active-set NNLS: argmin ||A x - b||  s.t.  x >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                            int max_iter = 0, double tol = 1e-12) {
  const Eigen::Index n = A.cols();
  if (max_iter == 0) max_iter = static_cast<int>(3 * n) + 30;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  Eigen::VectorXd w = A.transpose() * (b - A * x);

  auto solve_passive = [&](const std::vector<bool>& set) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (set[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(b);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[static_cast<Eigen::Index>(k)];
    return z;
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    }
    if (best < 0) break;  // KKT satisfied
    passive[static_cast<std::size_t>(best)] = true;

    Eigen::VectorXd z = solve_passive(passive);
    int inner_guard = 0;
    while (true) {
      bool all_pos = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) all_pos = false;
      }
      if (all_pos) break;
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) {
          alpha = std::min(alpha, x[j] / (x[j] - z[j]));
        }
      }
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x[j] <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          x[j] = 0.0;
        }
      }
      z = solve_passive(passive);
      if (++inner_guard > n + 2) break;
    }
    x = z;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (x[j] < 0.0) x[j] = 0.0;
    }
    w = A.transpose() * (b - A * x);
  }
  return x;
}

/// Ordinary least squares via column-pivoted QR.
inline Eigen::VectorXd lstsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return A.colPivHouseholderQr().solve(b);
}

}  // namespace scalelab
