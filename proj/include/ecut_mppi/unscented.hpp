#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>

namespace ecut_mppi {

/// Weighted sigma-point representation of a distribution.
///
/// Points are stored column-wise (points.col(i) is the i-th point). Weights
/// always sum to one; individual weights may be negative, which is normal for
/// the unscented transform above dimension three with the kappa = 3 - n rule.
struct SigmaPointSet {
  Eigen::MatrixXd points;   // n x N
  Eigen::VectorXd weights;  // N

  int dimension() const { return static_cast<int>(points.rows()); }
  int count() const { return static_cast<int>(points.cols()); }
};

/// First two moments of a distribution.
struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// One-step stochastic transition kernel: fills in the conditional mean and
/// covariance of the next state given a current state. Deterministic maps
/// report zero covariance. Output-parameter form so callers can reuse storage.
using StochasticMap =
    std::function<void(const Eigen::VectorXd& state, GaussianMoments& next)>;

/// Unscented transform spread parameter. When kappa is unset the classic
/// heuristic kappa = 3 - n is used, which matches fourth moments of a
/// Gaussian along each axis.
struct UtParams {
  std::optional<double> kappa;

  double kappa_for(int n) const { return kappa ? *kappa : 3.0 - n; }
};

/// Throws std::invalid_argument unless the set is structurally valid:
/// matching sizes, at least one point, and weights summing to 1 within 1e-9.
void validate(const SigmaPointSet& set);

/// Generates the 2n+1 symmetric sigma points of a Gaussian.
///
/// The covariance must be symmetric within 1e-9 and positive semidefinite;
/// a zero covariance collapses all points onto the mean. If the Cholesky
/// factorization fails, the matrix is symmetrized and given a single 1e-9
/// diagonal jitter; failure after that throws std::runtime_error.
SigmaPointSet generate_ut_points(const GaussianMoments& moments,
                                 const UtParams& params = {});

/// Weighted empirical mean and covariance of a sigma-point set.
GaussianMoments empirical_moments(const SigmaPointSet& set);

/// Pushes every point through a stochastic map and expands each conditional
/// Gaussian into its own sigma points. Child weights are the parent weight
/// times the child's transform weight, so the expanded set again sums to one.
SigmaPointSet expand_sigma_points(const StochasticMap& map,
                                  const SigmaPointSet& set,
                                  const UtParams& params = {});

/// Compresses an arbitrary sigma-point set back to the canonical 2n+1 points
/// with the same mean and covariance.
SigmaPointSet compress(const SigmaPointSet& set, const UtParams& params = {});

/// One expansion-compression step through a stochastic map: the returned set
/// always has 2n+1 points carrying the propagated mean and covariance.
SigmaPointSet ecut_step(const StochasticMap& map, const SigmaPointSet& set,
                        const UtParams& params = {});

/// Closed-form lower Cholesky factor of a 2x2 matrix assumed positive
/// semidefinite; round-off negatives under the square roots are clamped.
inline Eigen::Matrix2d cholesky_2x2_psd(const Eigen::Matrix2d& a) {
  Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
  l(0, 0) = std::sqrt(std::max(a(0, 0), 0.0));
  l(1, 0) = l(0, 0) > 0.0 ? a(1, 0) / l(0, 0) : 0.0;
  l(1, 1) = std::sqrt(std::max(a(1, 1) - l(1, 0) * l(1, 0), 0.0));
  return l;
}

}  // namespace ecut_mppi
