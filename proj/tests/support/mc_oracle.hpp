#pragma once

// Monte-Carlo reference for moment propagation. Deliberately independent of
// the library's sigma-point machinery: sampling uses an eigendecomposition
// square root and draws the conditional Gaussian of the raw stochastic map at
// every step.

#include <Eigen/Dense>

#include "ecut_mppi/rng.hpp"
#include "ecut_mppi/unscented.hpp"

namespace ecut_mppi::testing {

inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

struct McSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd mean_stderr;  // per-axis standard error of the estimated mean
};

inline McSummary mc_propagate(const StochasticMap& map, const GaussianMoments& init,
                              int steps, int n_samples, Rng& rng) {
  const auto n = init.mean.size();
  const Eigen::MatrixXd s0 = sqrt_psd(init.covariance);

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd x(n), z(n);
  GaussianMoments cond;

  for (int s = 0; s < n_samples; ++s) {
    for (Eigen::Index j = 0; j < n; ++j) z(j) = rng.normal();
    x = init.mean + s0 * z;
    for (int t = 0; t < steps; ++t) {
      map(x, cond);
      const Eigen::MatrixXd st = sqrt_psd(cond.covariance);
      for (Eigen::Index j = 0; j < n; ++j) z(j) = rng.normal();
      x = cond.mean + st * z;
    }
    sum += x;
    sum_sq += x * x.transpose();
  }

  McSummary out;
  out.mean = sum / n_samples;
  out.covariance =
      (sum_sq - n_samples * out.mean * out.mean.transpose()) / (n_samples - 1.0);
  out.mean_stderr = (out.covariance.diagonal() / n_samples).cwiseSqrt();
  return out;
}

/// Random mean plus random positive-semidefinite covariance for property tests.
inline GaussianMoments random_moments(int n, Rng& rng, double spread = 1.0) {
  GaussianMoments m;
  m.mean.resize(n);
  for (int i = 0; i < n; ++i) m.mean(i) = 4.0 * (rng.uniform01() - 0.5);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = spread * 2.0 * (rng.uniform01() - 0.5);
  m.covariance = a * a.transpose();
  return m;
}

}  // namespace ecut_mppi::testing
