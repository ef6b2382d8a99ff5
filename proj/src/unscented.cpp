#include "ecut_mppi/unscented.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ecut_mppi {
namespace {

// Cholesky-Crout factorization that tolerates positive-semidefinite input.
// A zero pivot is accepted when the rest of its column is consistent with an
// exactly singular matrix; a clearly negative pivot means failure.
bool psd_cholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& l) {
  const auto n = a.rows();
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 0.0);
  const double pivot_tol = 1e-12 * std::max(scale, 1e-300);
  const double column_tol = 1e-9 * (1.0 + scale);

  l.setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d > pivot_tol) {
      l(j, j) = std::sqrt(d);
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double r = a(i, j);
        for (Eigen::Index k = 0; k < j; ++k) r -= l(i, k) * l(j, k);
        l(i, j) = r / l(j, j);
      }
    } else if (d >= -pivot_tol) {
      // Singular direction: the column must vanish as well.
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double r = a(i, j);
        for (Eigen::Index k = 0; k < j; ++k) r -= l(i, k) * l(j, k);
        if (std::abs(r) > column_tol) return false;
      }
    } else {
      return false;
    }
  }
  return true;
}

std::string matrix_to_string(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << m;
  return os.str();
}

}  // namespace

void validate(const SigmaPointSet& set) {
  if (set.points.cols() == 0 || set.points.rows() == 0)
    throw std::invalid_argument("sigma point set must contain at least one point");
  if (set.weights.size() != set.points.cols())
    throw std::invalid_argument("sigma point set has " + std::to_string(set.points.cols()) +
                                " points but " + std::to_string(set.weights.size()) + " weights");
  if (!set.points.allFinite() || !set.weights.allFinite())
    throw std::invalid_argument("sigma point set contains non-finite values");
  const double sum = set.weights.sum();
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("sigma point weights sum to " + std::to_string(sum) +
                                ", expected 1");
}

SigmaPointSet generate_ut_points(const GaussianMoments& moments, const UtParams& params) {
  const auto n = moments.mean.size();
  if (n == 0) throw std::invalid_argument("generate_ut_points: empty mean");
  if (moments.covariance.rows() != n || moments.covariance.cols() != n)
    throw std::invalid_argument("generate_ut_points: covariance shape does not match mean");
  if (!moments.mean.allFinite() || !moments.covariance.allFinite())
    throw std::invalid_argument("generate_ut_points: non-finite moments");
  const double asym =
      (moments.covariance - moments.covariance.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9)
    throw std::invalid_argument("generate_ut_points: covariance asymmetric by " +
                                std::to_string(asym));

  const double kappa = params.kappa_for(static_cast<int>(n));
  const double denom = static_cast<double>(n) + kappa;
  if (denom <= 0.0)
    throw std::invalid_argument("generate_ut_points: n + kappa must be positive, got " +
                                std::to_string(denom));

  Eigen::MatrixXd sym = 0.5 * (moments.covariance + moments.covariance.transpose());
  Eigen::MatrixXd l(n, n);
  if (!psd_cholesky(denom * sym, l)) {
    sym.diagonal().array() += 1e-9;  // one-shot jitter, then give up
    if (!psd_cholesky(denom * sym, l))
      throw std::runtime_error(
          "generate_ut_points: covariance is not positive semidefinite even "
          "after 1e-9 jitter:\n" +
          matrix_to_string(moments.covariance));
  }

  SigmaPointSet out;
  out.points.resize(n, 2 * n + 1);
  out.weights.resize(2 * n + 1);
  out.points.col(0) = moments.mean;
  out.weights(0) = kappa / denom;
  const double wi = 0.5 / denom;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.points.col(1 + i) = moments.mean + l.col(i);
    out.points.col(1 + n + i) = moments.mean - l.col(i);
    out.weights(1 + i) = wi;
    out.weights(1 + n + i) = wi;
  }
  return out;
}

GaussianMoments empirical_moments(const SigmaPointSet& set) {
  validate(set);
  GaussianMoments m;
  m.mean = set.points * set.weights;
  const Eigen::MatrixXd centered = set.points.colwise() - m.mean;
  m.covariance = centered * set.weights.asDiagonal() * centered.transpose();
  m.covariance = 0.5 * (m.covariance + m.covariance.transpose()).eval();
  return m;
}

SigmaPointSet expand_sigma_points(const StochasticMap& map, const SigmaPointSet& set,
                                  const UtParams& params) {
  validate(set);
  if (!map) throw std::invalid_argument("expand_sigma_points: empty stochastic map");
  const auto n = set.points.rows();
  const auto block = 2 * n + 1;

  SigmaPointSet out;
  out.points.resize(n, set.points.cols() * block);
  out.weights.resize(set.weights.size() * block);

  GaussianMoments cond;
  for (Eigen::Index i = 0; i < set.points.cols(); ++i) {
    map(set.points.col(i), cond);
    if (cond.mean.size() != n)
      throw std::invalid_argument(
          "expand_sigma_points: stochastic map changed state dimension from " +
          std::to_string(n) + " to " + std::to_string(cond.mean.size()));
    SigmaPointSet child;
    try {
      child = generate_ut_points(cond, params);
    } catch (const std::exception& e) {
      throw std::runtime_error("expand_sigma_points: child transform failed at parent " +
                               std::to_string(i) + ": " + e.what());
    }
    out.points.middleCols(i * block, block) = child.points;
    out.weights.segment(i * block, block) = set.weights(i) * child.weights;
  }
  return out;
}

SigmaPointSet compress(const SigmaPointSet& set, const UtParams& params) {
  return generate_ut_points(empirical_moments(set), params);
}

SigmaPointSet ecut_step(const StochasticMap& map, const SigmaPointSet& set,
                        const UtParams& params) {
  return compress(expand_sigma_points(map, set, params), params);
}

}  // namespace ecut_mppi
