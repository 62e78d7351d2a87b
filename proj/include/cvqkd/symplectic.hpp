#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "cvqkd/covariance.hpp"

namespace cvqkd {

constexpr double kSymplecticTol = 1e-10;

// A 2N x 2N real matrix S with S Omega S^T = Omega, validated at
// construction. Covariances transform as gamma -> S gamma S^T.
class SymplecticTransform {
 public:
  explicit SymplecticTransform(Eigen::MatrixXd s) : s_(std::move(s)) {
    if (s_.rows() < 2 || s_.rows() != s_.cols() || s_.rows() % 2 != 0) {
      throw std::invalid_argument("SymplecticTransform: matrix must be square with even dimension >= 2");
    }
    const int n = static_cast<int>(s_.rows()) / 2;
    const Eigen::MatrixXd omega = symplectic_form(n);
    const double residual = (s_ * omega * s_.transpose() - omega).cwiseAbs().maxCoeff();
    if (residual > kSymplecticTol) {
      throw std::invalid_argument("SymplecticTransform: S Omega S^T != Omega, residual " +
                                  std::to_string(residual));
    }
  }

  static SymplecticTransform identity(int n_modes) {
    return SymplecticTransform(Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes));
  }

  int modes() const { return static_cast<int>(s_.rows()) / 2; }
  const Eigen::MatrixXd& matrix() const { return s_; }

  SymplecticTransform operator*(const SymplecticTransform& rhs) const {
    if (rhs.modes() != modes()) {
      throw std::invalid_argument("SymplecticTransform: mode count mismatch in composition");
    }
    return SymplecticTransform(s_ * rhs.s_);
  }

 private:
  Eigen::MatrixXd s_;
};

/// gamma -> S gamma S^T. Leaves the symplectic spectrum (hence the entropy)
/// unchanged.
inline CovarianceMatrix apply_symplectic(const SymplecticTransform& s, const CovarianceMatrix& g) {
  if (s.modes() != g.modes()) {
    throw std::invalid_argument("apply_symplectic: transform acts on " + std::to_string(s.modes()) +
                                " modes, state has " + std::to_string(g.modes()));
  }
  const Eigen::MatrixXd out =
      detail::symmetric_part(s.matrix() * g.matrix() * s.matrix().transpose());
  return CovarianceMatrix(out, g.roundoff_scale());
}

/// Beam splitter of transmittance tau on modes (a, b): acts as
/// [[sqrt(tau), sqrt(1-tau)], [-sqrt(1-tau), sqrt(tau)]] on the x pair and
/// identically on the p pair, so x and p quadratures are never mixed.
inline SymplecticTransform beam_splitter_symplectic(double tau, int mode_a, int mode_b, int n_modes) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("beam_splitter_symplectic: transmittance must lie in [0,1], got " +
                                std::to_string(tau));
  }
  if (mode_a == mode_b || mode_a < 0 || mode_b < 0 || mode_a >= n_modes || mode_b >= n_modes) {
    throw std::invalid_argument("beam_splitter_symplectic: invalid mode pair");
  }
  const double c = std::sqrt(tau);
  const double s = std::sqrt(1.0 - tau);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes);
  for (Eigen::Index q = 0; q < 2; ++q) {  // q = 0: x pair, q = 1: p pair
    const Eigen::Index ia = 2 * mode_a + q;
    const Eigen::Index ib = 2 * mode_b + q;
    m(ia, ia) = c;
    m(ia, ib) = s;
    m(ib, ia) = -s;
    m(ib, ib) = c;
  }
  return SymplecticTransform(std::move(m));
}

/// Phase-space rotation by theta on a single mode (mixes its x and p).
inline SymplecticTransform phase_rotation_symplectic(double theta, int mode, int n_modes) {
  if (mode < 0 || mode >= n_modes) {
    throw std::invalid_argument("phase_rotation_symplectic: invalid mode");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes);
  const Eigen::Index ix = x_index(mode), ip = p_index(mode);
  m(ix, ix) = std::cos(theta);
  m(ix, ip) = std::sin(theta);
  m(ip, ix) = -std::sin(theta);
  m(ip, ip) = std::cos(theta);
  return SymplecticTransform(std::move(m));
}

/// Single-mode squeezer: x -> e^-r x, p -> e^r p.
inline SymplecticTransform squeeze_symplectic(double r, int mode, int n_modes) {
  if (mode < 0 || mode >= n_modes) {
    throw std::invalid_argument("squeeze_symplectic: invalid mode");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes);
  m(x_index(mode), x_index(mode)) = std::exp(-r);
  m(p_index(mode), p_index(mode)) = std::exp(r);
  return SymplecticTransform(std::move(m));
}

}  // namespace cvqkd
