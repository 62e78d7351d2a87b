#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvqkd/errors.hpp"

// Gaussian-state calculus on quadrature covariance matrices.
//
// Conventions used throughout:
//   * shot-noise units: the vacuum state has quadrature variance 1,
//   * interleaved mode ordering (x1, p1, x2, p2, ..., xN, pN),
//   * entropies and rates in bits (log base 2),
//   * first-order moments are ignored; they carry no information here.

namespace cvqkd {

constexpr double kSymmetryTol = 1e-12;
constexpr double kPhysicalityTol = 1e-9;

inline Eigen::Index x_index(int mode) { return 2 * mode; }
inline Eigen::Index p_index(int mode) { return 2 * mode + 1; }

enum class MeasurementKind { homodyne_x, homodyne_p, heterodyne };

/// 2N x 2N symplectic form: block diagonal [[0,1],[-1,0]] per mode.
/// Satisfies Omega^T = -Omega and Omega*Omega = -Identity.
inline Eigen::MatrixXd symplectic_form(int n_modes) {
  if (n_modes < 1) throw std::invalid_argument("symplectic_form: n_modes must be positive");
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2 * n_modes, 2 * n_modes);
  for (int m = 0; m < n_modes; ++m) {
    omega(x_index(m), p_index(m)) = 1.0;
    omega(p_index(m), x_index(m)) = -1.0;
  }
  return omega;
}

// 2N x 2N real symmetric matrix of quadrature second moments. Symmetry is
// checked at construction; the uncertainty-principle test (nu_k >= 1) is
// applied by the operations that need it, so marginally unphysical sample
// estimates can still be represented and flagged by callers.
//
// `roundoff_scale` records the magnitude of the quantities the entries were
// computed from (at least the matrix norm itself). Conditioning a state with
// variances of order 1e8 cancels terms of that size, so the ~Identity result
// carries absolute rounding of order eps * 1e8; the physicality floor widens
// with this scale so such states are not spuriously rejected.
class CovarianceMatrix {
 public:
  explicit CovarianceMatrix(Eigen::MatrixXd entries, double roundoff_scale = 0.0)
      : entries_(std::move(entries)) {
    if (entries_.rows() < 2 || entries_.rows() != entries_.cols() || entries_.rows() % 2 != 0) {
      throw std::invalid_argument("CovarianceMatrix: entries must be square with even dimension >= 2");
    }
    const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol) {
      throw std::invalid_argument("CovarianceMatrix: not symmetric, max |g_ij - g_ji| = " +
                                  std::to_string(asym));
    }
    roundoff_scale_ = std::max(roundoff_scale, entries_.cwiseAbs().maxCoeff());
  }

  int modes() const { return static_cast<int>(entries_.rows()) / 2; }
  Eigen::Index dim() const { return entries_.rows(); }
  const Eigen::MatrixXd& matrix() const { return entries_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
  double roundoff_scale() const { return roundoff_scale_; }

 private:
  Eigen::MatrixXd entries_;
  double roundoff_scale_ = 0.0;
};

namespace detail {

// Accept nu >= 1 - floor. The floor is 1e-9 at laboratory scales and widens
// quadratically with the roundoff scale: squared symplectic eigenvalues are
// bilinear in the entries, so their rounding is O(eps * scale^2). Without the
// widening, conditioning states with variances of order 1e4 and beyond would
// be rejected on rounding noise alone. At such scales the gate is slack by
// construction; the entropy of a clamped near-unit eigenvalue is the correct
// zero either way.
inline double physicality_floor(const CovarianceMatrix& g, double tol = kPhysicalityTol) {
  const double scale = g.roundoff_scale();
  return std::max(tol, 16.0 * std::numeric_limits<double>::epsilon() * scale * scale);
}

inline std::string to_string_precise(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Fresh-matrix (anti)symmetrization; assigning these expressions back onto
// their own argument would alias.
inline Eigen::MatrixXd symmetric_part(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}
inline Eigen::MatrixXd antisymmetric_part(const Eigen::MatrixXd& m) {
  return 0.5 * (m - m.transpose());
}

[[noreturn]] inline void throw_not_positive_definite(const CovarianceMatrix& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.matrix(), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  throw unphysical_state(
      "covariance matrix is not positive definite (min eigenvalue " + to_string_precise(lo) + ")",
      lo);
}

// True when no x quadrature couples to a p quadrature (exact structural
// zeros, as produced by the channel model, tensor products, beam splitters
// and quadrature-aligned conditioning).
inline bool xp_decoupled(const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); i += 2) {
    for (Eigen::Index j = 1; j < m.cols(); j += 2) {
      if (m(i, j) != 0.0 || m(j, i) != 0.0) return false;
    }
  }
  return true;
}

// Squared-eigenvalue slack: entries carry absolute rounding up to
// eps * roundoff_scale, and nu^2 is bilinear in them. A computed nu^2 within
// this slack of zero is a cancellation casualty of a (near-)physical parent,
// not evidence of an invalid state; clamp it instead of failing.
inline double lambda_slack(const CovarianceMatrix& g) {
  const double scale = g.roundoff_scale();
  return 16.0 * std::numeric_limits<double>::epsilon() * scale * scale;
}

inline double clamp_lambda(long double lam, const CovarianceMatrix& g) {
  if (lam > 0.0L) return static_cast<double>(std::sqrt(lam));
  if (static_cast<double>(lam) > -lambda_slack(g)) return 0.0;
  throw_not_positive_definite(g);
}

// nu of a single mode is sqrt(det gamma) regardless of x-p coupling.
inline std::vector<double> spectrum_single_mode(const CovarianceMatrix& g) {
  const Eigen::MatrixXd& m = g.matrix();
  const long double det = static_cast<long double>(m(0, 0)) * m(1, 1) -
                          static_cast<long double>(m(0, 1)) * m(1, 0);
  return {clamp_lambda(det, g)};
}

// Closed form for the x/p-decoupled two-mode case, evaluated in extended
// precision: with zero x-p coupling the squared symplectic eigenvalues are
// the eigenvalues of X * P (the two quadrature sectors), which follow from
// trace and determinant alone. This keeps the tiny nu - 1 gaps of nearly
// pure states accurate when the entries are huge, where any generic
// factorization loses them to cancellation.
inline std::vector<double> spectrum_decoupled_small(const CovarianceMatrix& g) {
  const Eigen::MatrixXd& m = g.matrix();
  const long double a = m(0, 0), b = m(0, 2), d = m(2, 2);   // x sector
  const long double e = m(1, 1), f = m(1, 3), h = m(3, 3);   // p sector
  const double slack = lambda_slack(g);
  if (a < -slack || d < -slack || e < -slack || h < -slack) throw_not_positive_definite(g);
  const long double det_x = a * d - b * b;
  const long double det_p = e * h - f * f;
  if (static_cast<double>(det_x) < -slack || static_cast<double>(det_p) < -slack) {
    throw_not_positive_definite(g);
  }
  const long double tr = a * e + 2.0L * b * f + d * h;  // trace of X * P
  const long double det = det_x * det_p;
  long double disc = tr * tr - 4.0L * det;
  if (disc < 0.0L) disc = 0.0L;  // equal eigenvalues up to rounding
  const long double lam_hi = 0.5L * (tr + std::sqrt(disc));
  const double nu_hi = clamp_lambda(lam_hi, g);
  const double nu_lo = lam_hi > 0.0L ? clamp_lambda(det / lam_hi, g) : 0.0;
  return {nu_hi, nu_lo};
}

// Symplectic spectrum of gamma without the physicality gate.
//
// General route: spec(Omega L L^T) = spec(L^T Omega L) for the Cholesky
// factor L of gamma. W = L^T Omega L is exactly antisymmetric, so its
// eigenvalues are +- i nu_k and its singular values are the nu_k, each
// appearing twice. This keeps the rounding error at O(eps * ||gamma||),
// unlike the matrix-square-root route whose error scales with cond(gamma).
// One- and two-mode states without x-p coupling take the closed form above.
inline std::vector<double> symplectic_spectrum_unchecked(const CovarianceMatrix& g) {
  const int n = g.modes();
  if (n == 1) return spectrum_single_mode(g);
  if (n == 2 && xp_decoupled(g.matrix())) return spectrum_decoupled_small(g);
  Eigen::LLT<Eigen::MatrixXd> llt(g.matrix());
  if (llt.info() != Eigen::Success) throw_not_positive_definite(g);
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::MatrixXd w = antisymmetric_part(l.transpose() * symplectic_form(n) * l);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
  const Eigen::VectorXd& sv = svd.singularValues();  // descending, each nu twice
  std::vector<double> nus(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) nus[static_cast<std::size_t>(k)] = sv(2 * k);
  return nus;
}

inline void check_mode_indices(const CovarianceMatrix& g, const std::vector<int>& modes,
                               const char* where) {
  if (modes.empty()) throw std::invalid_argument(std::string(where) + ": empty mode set");
  std::vector<int> sorted = modes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument(std::string(where) + ": duplicate mode index");
  }
  if (sorted.front() < 0 || sorted.back() >= g.modes()) {
    throw std::invalid_argument(std::string(where) + ": mode index out of range");
  }
}

inline std::vector<Eigen::Index> quadrature_indices(const std::vector<int>& modes) {
  std::vector<Eigen::Index> idx;
  idx.reserve(2 * modes.size());
  for (int m : modes) {
    idx.push_back(x_index(m));
    idx.push_back(p_index(m));
  }
  return idx;
}

}  // namespace detail

/// Symplectic eigenvalues of gamma: the moduli of the eigenvalues of
/// i*Omega*gamma, pairs collapsed, sorted descending (one value per mode).
/// Throws unphysical_state if any eigenvalue falls below the uncertainty floor.
inline std::vector<double> symplectic_eigenvalues(const CovarianceMatrix& g) {
  auto nus = detail::symplectic_spectrum_unchecked(g);
  const double floor = detail::physicality_floor(g);
  for (double nu : nus) {
    if (nu < 1.0 - floor) {
      throw unphysical_state("unphysical covariance matrix: symplectic eigenvalue " +
                                 detail::to_string_precise(nu) + " < 1",
                             nu);
    }
  }
  return nus;
}

/// True when gamma is positive definite and every symplectic eigenvalue sits
/// above 1 - tol (widened by the scale-aware floor).
inline bool is_physical(const CovarianceMatrix& g, double tol = kPhysicalityTol) {
  try {
    const auto nus = detail::symplectic_spectrum_unchecked(g);
    return nus.back() >= 1.0 - detail::physicality_floor(g, tol);
  } catch (const unphysical_state&) {
    return false;
  }
}

/// Thermal-mode entropy g(x) = ((x+1)/2) log2((x+1)/2) - ((x-1)/2) log2((x-1)/2)
/// in bits, continuously extended with g(1) = 0. Values at or below 1 (allowed
/// within the physicality tolerance) map to 0; just above 1 a first-order
/// expansion avoids evaluating 0 * log 0.
inline double entropy_g(double nu) {
  const double d = nu - 1.0;
  if (d <= 0.0) return 0.0;
  if (d < 1e-8) {
    const double t = 0.5 * d;
    return t * (1.0 / std::numbers::ln2 - std::log2(t));
  }
  const double hi = 0.5 * (nu + 1.0);
  const double lo = 0.5 * (nu - 1.0);
  return hi * std::log2(hi) - lo * std::log2(lo);
}

/// Von Neumann entropy in bits: sum of g over the symplectic spectrum.
inline double von_neumann_entropy(const CovarianceMatrix& g) {
  double s = 0.0;
  for (double nu : symplectic_eigenvalues(g)) s += entropy_g(nu);
  return s;
}

/// Reduced state on the requested modes: the principal submatrix on their
/// rows and columns. The result's modes follow the order given in `keep`,
/// so the call doubles as a mode permutation.
inline CovarianceMatrix partial_trace(const CovarianceMatrix& g, const std::vector<int>& keep) {
  detail::check_mode_indices(g, keep, "partial_trace");
  const auto idx = detail::quadrature_indices(keep);
  Eigen::MatrixXd out = g.matrix()(idx, idx);
  return CovarianceMatrix(std::move(out), g.roundoff_scale());
}

/// Direct sum of two states: block-diagonal covariance, mode counts add.
inline CovarianceMatrix tensor(const CovarianceMatrix& a, const CovarianceMatrix& b) {
  const Eigen::Index na = a.dim(), nb = b.dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(na + nb, na + nb);
  out.topLeftCorner(na, na) = a.matrix();
  out.bottomRightCorner(nb, nb) = b.matrix();
  return CovarianceMatrix(std::move(out), std::max(a.roundoff_scale(), b.roundoff_scale()));
}

/// Two-mode squeezed vacuum (EPR pair) with quadrature variance V >= 1:
/// blocks [[V I2, sqrt(V^2-1) sz], [sqrt(V^2-1) sz, V I2]], sz = diag(1,-1).
/// Pure for every V; V = 1 is two vacua.
inline CovarianceMatrix two_mode_squeezed_cm(double v) {
  if (!(v >= 1.0)) {
    throw std::invalid_argument("two_mode_squeezed_cm: variance must be >= 1, got " + std::to_string(v));
  }
  const double c = std::sqrt(v * v - 1.0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(4, 4) * v;
  m(0, 2) = m(2, 0) = c;
  m(1, 3) = m(3, 1) = -c;
  return CovarianceMatrix(std::move(m));
}

/// Covariance of the kept modes conditioned on a Gaussian measurement of the
/// listed modes. The conditional covariance is outcome independent:
///
///   homodyne (x or p): gamma_K - C_q X^-1 C_q^T, where X is the measured
///     quadrature's submatrix of the measured block and C_q the matching
///     cross columns. This is the explicit generalized inverse of the
///     projected block (1/variance on the measured quadrature, 0 elsewhere).
///   heterodyne: gamma_K - C (gamma_M + I)^-1 C^T, one unit of vacuum mixed in.
///
/// All measured modes receive the same measurement; kept-mode order is the
/// ascending complement of `measured`.
inline CovarianceMatrix condition_on_measurement(const CovarianceMatrix& g,
                                                 const std::vector<int>& measured,
                                                 MeasurementKind kind) {
  detail::check_mode_indices(g, measured, "condition_on_measurement");
  std::vector<char> is_measured(static_cast<std::size_t>(g.modes()), 0);
  for (int m : measured) is_measured[static_cast<std::size_t>(m)] = 1;
  std::vector<int> kept;
  for (int m = 0; m < g.modes(); ++m) {
    if (!is_measured[static_cast<std::size_t>(m)]) kept.push_back(m);
  }
  if (kept.empty()) {
    throw std::invalid_argument("condition_on_measurement: cannot measure every mode");
  }

  const auto kept_idx = detail::quadrature_indices(kept);
  Eigen::MatrixXd gamma_kept = g.matrix()(kept_idx, kept_idx);

  std::vector<Eigen::Index> meas_idx;
  Eigen::MatrixXd inner;
  if (kind == MeasurementKind::heterodyne) {
    meas_idx = detail::quadrature_indices(measured);
    inner = g.matrix()(meas_idx, meas_idx);
    inner += Eigen::MatrixXd::Identity(inner.rows(), inner.cols());
  } else {
    meas_idx.reserve(measured.size());
    for (int m : measured) {
      meas_idx.push_back(kind == MeasurementKind::homodyne_x ? x_index(m) : p_index(m));
    }
    inner = g.matrix()(meas_idx, meas_idx);
  }
  const Eigen::MatrixXd cross = g.matrix()(kept_idx, meas_idx);

  Eigen::LLT<Eigen::MatrixXd> llt(inner);
  if (llt.info() != Eigen::Success) {
    throw unphysical_state("condition_on_measurement: measured block is singular",
                           inner.diagonal().minCoeff());
  }
  const Eigen::MatrixXd out =
      detail::symmetric_part(gamma_kept - cross * llt.solve(cross.transpose()));
  // the Schur subtraction cancels terms as large as the parent's entries
  return CovarianceMatrix(out, g.roundoff_scale());
}

}  // namespace cvqkd
