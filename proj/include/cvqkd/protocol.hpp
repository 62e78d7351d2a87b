#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvqkd/covariance.hpp"
#include "cvqkd/symplectic.hpp"

// Entanglement-based model of the four Gaussian one-way protocols: an EPR
// source at Alice, a loss + excess-noise channel to Bob, and homodyne or
// heterodyne detection on each side. The shared covariance gamma_AB fixes
// every information quantity an optimal collective attack allows.

namespace cvqkd {

enum class SourceType { squeezed, coherent };
enum class BobMeasurement { homodyne, heterodyne };
enum class ReconciliationDirection { direct, reverse };

// One of the four Gaussian protocols: source choice times Bob's measurement.
// Alice's measurement in the entanglement-based picture is derived, never
// stored: homodyning her EPR half prepares squeezed states, heterodyning it
// prepares coherent states (her outcome is then a pair of reals).
struct Protocol {
  SourceType source = SourceType::coherent;
  BobMeasurement bob_measurement = BobMeasurement::homodyne;

  MeasurementKind alice_kind() const {
    return source == SourceType::squeezed ? MeasurementKind::homodyne_x
                                          : MeasurementKind::heterodyne;
  }
  MeasurementKind bob_kind() const {
    return bob_measurement == BobMeasurement::homodyne ? MeasurementKind::homodyne_x
                                                       : MeasurementKind::heterodyne;
  }
  bool requires_sifting() const {
    // Everything except coherent states + heterodyne involves a quadrature
    // choice that must be reconciled.
    return !(source == SourceType::coherent && bob_measurement == BobMeasurement::heterodyne);
  }

  // The classical variable a party's record contributes to reconciliation,
  // i.e. what the eavesdropper must be bounded against when that party is
  // the reference. A homodyne record is its quadrature. Alice's heterodyne
  // record counts in full (her two reals are the protocol's raw variable).
  // Bob's heterodyne record counts in full only when nothing is sifted away;
  // in the squeezed-source protocol the key retains just the component
  // matched to Alice's basis.
  enum class ReferenceVariable { quadrature, full_heterodyne, matched_heterodyne };

  ReferenceVariable alice_reference() const {
    return source == SourceType::squeezed ? ReferenceVariable::quadrature
                                          : ReferenceVariable::full_heterodyne;
  }
  ReferenceVariable bob_reference() const {
    if (bob_measurement == BobMeasurement::homodyne) return ReferenceVariable::quadrature;
    return requires_sifting() ? ReferenceVariable::matched_heterodyne
                              : ReferenceVariable::full_heterodyne;
  }

  std::string name() const {
    std::string s = source == SourceType::squeezed ? "squeezed-" : "coherent-";
    s += bob_measurement == BobMeasurement::homodyne ? "homodyne" : "heterodyne";
    return s;
  }

  static std::array<Protocol, 4> all() {
    return {Protocol{SourceType::squeezed, BobMeasurement::homodyne},
            Protocol{SourceType::squeezed, BobMeasurement::heterodyne},
            Protocol{SourceType::coherent, BobMeasurement::homodyne},
            Protocol{SourceType::coherent, BobMeasurement::heterodyne}};
  }

  static Protocol parse(std::string_view name) {
    for (const Protocol& p : all()) {
      if (p.name() == name) return p;
    }
    throw std::invalid_argument("unknown protocol '" + std::string(name) +
                                "' (expected squeezed-homodyne, squeezed-heterodyne, "
                                "coherent-homodyne or coherent-heterodyne)");
  }
};

inline bool operator==(const Protocol& a, const Protocol& b) {
  return a.source == b.source && a.bob_measurement == b.bob_measurement;
}

inline std::string direction_name(ReconciliationDirection d) {
  return d == ReconciliationDirection::direct ? "dr" : "rr";
}

inline ReconciliationDirection parse_direction(std::string_view s) {
  if (s == "dr" || s == "direct") return ReconciliationDirection::direct;
  if (s == "rr" || s == "reverse") return ReconciliationDirection::reverse;
  throw std::invalid_argument("unknown reconciliation direction '" + std::string(s) +
                              "' (expected dr or rr)");
}

// Gaussian channel: transmittance T in (0,1], excess noise eps >= 0 in
// shot-noise units referred to the channel input.
struct ChannelParams {
  double transmittance;
  double excess_noise;

  ChannelParams(double t, double eps) : transmittance(t), excess_noise(eps) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw std::invalid_argument("ChannelParams: transmittance must lie in (0,1], got " +
                                  std::to_string(t));
    }
    if (!(eps >= 0.0) || !std::isfinite(eps)) {
      throw std::invalid_argument("ChannelParams: excess noise must be finite and >= 0, got " +
                                  std::to_string(eps));
    }
  }
};

// EPR quadrature variance V >= 1; V = 1 means no modulation.
struct ModulationVariance {
  double value;

  explicit ModulationVariance(double v) : value(v) {
    if (!(v >= 1.0) || !std::isfinite(v)) {
      throw std::invalid_argument("ModulationVariance: variance must be finite and >= 1, got " +
                                  std::to_string(v));
    }
  }
};

/// Shared state after Alice keeps one EPR half (variance V) and the other
/// half crosses the channel:
///
///   [[ V I2,                sqrt(T (V^2-1)) sz ],
///    [ sqrt(T (V^2-1)) sz,  (T (V-1+eps) + 1) I2 ]]
///
/// Excess noise is input-referred, so Bob's variance is T(V - 1 + eps) + 1.
/// Physical for every valid (V, T, eps).
inline CovarianceMatrix channel_output_cm(ModulationVariance v, const ChannelParams& ch) {
  const double t = ch.transmittance;
  const double corr = std::sqrt(t * (v.value * v.value - 1.0));
  const double bob = t * (v.value - 1.0 + ch.excess_noise) + 1.0;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
  m(0, 0) = m(1, 1) = v.value;
  m(2, 2) = m(3, 3) = bob;
  m(0, 2) = m(2, 0) = corr;
  m(1, 3) = m(3, 1) = -corr;
  return CovarianceMatrix(std::move(m));
}

namespace detail {

// Linear-Gaussian model of a set of measurements: outcomes y = M r + n with
// r the quadrature vector and n independent detection noise of covariance N.
// Homodyne reads one quadrature exactly; heterodyne splits the mode on a
// balanced beam splitter against vacuum and reads x on one output and p on
// the other, so each outcome carries the mode quadrature scaled by 1/sqrt(2)
// plus half a unit of vacuum.
struct OutcomeModel {
  Eigen::MatrixXd map;    // k x 2N
  Eigen::MatrixXd noise;  // k x k
  int variables = 0;
};

inline OutcomeModel outcome_model(int n_modes, const std::vector<int>& modes,
                                  const std::vector<MeasurementKind>& kinds) {
  if (modes.size() != kinds.size()) {
    throw std::invalid_argument("outcome_model: one measurement kind per mode required");
  }
  int k = 0;
  for (MeasurementKind kind : kinds) k += (kind == MeasurementKind::heterodyne) ? 2 : 1;
  OutcomeModel model;
  model.map = Eigen::MatrixXd::Zero(k, 2 * n_modes);
  model.noise = Eigen::MatrixXd::Zero(k, k);
  model.variables = k;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  int row = 0;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const int m = modes[i];
    switch (kinds[i]) {
      case MeasurementKind::homodyne_x:
        model.map(row, x_index(m)) = 1.0;
        ++row;
        break;
      case MeasurementKind::homodyne_p:
        model.map(row, p_index(m)) = 1.0;
        ++row;
        break;
      case MeasurementKind::heterodyne:
        model.map(row, x_index(m)) = inv_sqrt2;
        model.noise(row, row) = 0.5;
        ++row;
        model.map(row, p_index(m)) = inv_sqrt2;
        model.noise(row, row) = 0.5;
        ++row;
        break;
    }
  }
  return model;
}

inline Eigen::MatrixXd outcome_covariance(const CovarianceMatrix& g, const OutcomeModel& model) {
  Eigen::MatrixXd sigma = model.map * g.matrix() * model.map.transpose() + model.noise;
  return 0.5 * (sigma + sigma.transpose());
}

// log2 det of a symmetric positive definite matrix via extended-precision
// Cholesky; outcome covariances of highly modulated states cancel entries of
// order V^2 down to order 1, which demands the extra mantissa. Failure
// signals a non-positive conditional variance, i.e. an unphysical input.
inline double log2_det_spd(const Eigen::MatrixXd& m, const char* where) {
  using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const MatrixXld wide = m.cast<long double>();
  Eigen::LLT<MatrixXld> llt(wide);
  if (llt.info() != Eigen::Success) {
    throw unphysical_state(std::string(where) + ": outcome covariance is not positive definite",
                           m.diagonal().minCoeff());
  }
  const MatrixXld l = llt.matrixL();
  long double acc = 0.0L;
  for (Eigen::Index i = 0; i < l.rows(); ++i) acc += std::log2(l(i, i));
  return static_cast<double>(2.0L * acc);
}

inline std::vector<MeasurementKind> uniform_kinds(MeasurementKind kind, std::size_t count) {
  return std::vector<MeasurementKind>(count, kind);
}

// Conditional state given only the matched x component of a heterodyne on the
// listed modes: each mode is split against a vacuum ancilla on a balanced
// beam splitter, the x quadrature of the first output is read out, and the
// second output is left unmeasured (it stays inside the trusted detector and
// appears in the conditional state). This is the reference variable a sifted
// protocol actually retains from a heterodyne record.
inline CovarianceMatrix condition_on_matched_heterodyne(const CovarianceMatrix& g,
                                                        const std::vector<int>& measured) {
  check_mode_indices(g, measured, "condition_on_matched_heterodyne");
  const int n = g.modes();
  const int m = static_cast<int>(measured.size());
  CovarianceMatrix ext =
      tensor(g, CovarianceMatrix(Eigen::MatrixXd::Identity(2 * m, 2 * m)));
  Eigen::MatrixXd net = Eigen::MatrixXd::Identity(2 * (n + m), 2 * (n + m));
  for (int i = 0; i < m; ++i) {
    net = beam_splitter_symplectic(0.5, measured[static_cast<std::size_t>(i)], n + i, n + m)
              .matrix() *
          net;
  }
  ext = apply_symplectic(SymplecticTransform(std::move(net)), ext);
  return condition_on_measurement(ext, measured, MeasurementKind::homodyne_x);
}

// Alice's and Bob's mode lists must partition the state: Eve is assumed to
// purify exactly the state the two of them share.
inline void check_bipartition(const CovarianceMatrix& g, const std::vector<int>& alice_modes,
                              const std::vector<int>& bob_modes, const char* where) {
  check_mode_indices(g, alice_modes, where);
  check_mode_indices(g, bob_modes, where);
  std::vector<int> all = alice_modes;
  all.insert(all.end(), bob_modes.begin(), bob_modes.end());
  std::sort(all.begin(), all.end());
  if (static_cast<int>(all.size()) != g.modes() ||
      std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw std::invalid_argument(std::string(where) +
                                ": alice and bob mode lists must partition the state's modes");
  }
}

}  // namespace detail

/// Shannon mutual information (bits per use) between Alice's and Bob's
/// measurement records on a shared Gaussian state: Alice measures each of her
/// modes with the protocol's derived kind, Bob each of his with his declared
/// kind. For jointly Gaussian outcomes
///   I = 1/2 log2( det S_a det S_b / det S ),
/// which reduces to 1/2 log2(V_b / V_b|a) per measured quadrature; homodyne
/// contributes one quadrature, heterodyne two (with its vacuum penalty
/// (V+1)/2 per quadrature built into the outcome model).
inline double mutual_information(const Protocol& p, const CovarianceMatrix& g,
                                 const std::vector<int>& alice_modes,
                                 const std::vector<int>& bob_modes) {
  detail::check_bipartition(g, alice_modes, bob_modes, "mutual_information");
  std::vector<int> modes = alice_modes;
  modes.insert(modes.end(), bob_modes.begin(), bob_modes.end());
  std::vector<MeasurementKind> kinds = detail::uniform_kinds(p.alice_kind(), alice_modes.size());
  const auto bob_kinds = detail::uniform_kinds(p.bob_kind(), bob_modes.size());
  kinds.insert(kinds.end(), bob_kinds.begin(), bob_kinds.end());

  const auto model = detail::outcome_model(g.modes(), modes, kinds);
  const Eigen::MatrixXd sigma = detail::outcome_covariance(g, model);
  const int ka = (p.alice_kind() == MeasurementKind::heterodyne ? 2 : 1) *
                 static_cast<int>(alice_modes.size());
  const int kb = model.variables - ka;
  const double log_det_a = detail::log2_det_spd(sigma.topLeftCorner(ka, ka), "mutual_information");
  const double log_det_b =
      detail::log2_det_spd(sigma.bottomRightCorner(kb, kb), "mutual_information");
  const double log_det = detail::log2_det_spd(sigma, "mutual_information");
  const double info = 0.5 * (log_det_a + log_det_b - log_det);
  return info > 0.0 ? info : 0.0;  // clamp rounding noise on uncorrelated states
}

/// Two-mode convenience: mode 0 is Alice's, mode 1 is Bob's.
inline double mutual_information(const Protocol& p, const CovarianceMatrix& g) {
  if (g.modes() != 2) {
    throw std::invalid_argument("mutual_information: expected a 2-mode state");
  }
  return mutual_information(p, g, {0}, {1});
}

enum class Conditioner { alice, bob };

/// Holevo bound on the information the purifying eavesdropper holds about the
/// conditioner's reference variable:
///
///   chi = S(gamma_AB) - S(everything unmeasured | outcome).
///
/// Eve holds the purification of rho_AB, so S(E) = S(AB); and because the
/// conditioning measurement is rank-one on its share of a pure state, the
/// conditional joint state of all unmeasured systems is again pure, giving
/// S(E|outcome) = S(unmeasured|outcome). The conditional covariance is
/// outcome independent, so no average is needed. `alice` is the direct-
/// reconciliation bound chi_aE, `bob` the reverse one chi_bE; the reference
/// variable (full or sifted-down record) comes from the protocol.
inline double holevo_bound(const Protocol& p, const CovarianceMatrix& g, Conditioner who,
                           const std::vector<int>& alice_modes, const std::vector<int>& bob_modes) {
  detail::check_bipartition(g, alice_modes, bob_modes, "holevo_bound");
  const std::vector<int>& measured = (who == Conditioner::alice) ? alice_modes : bob_modes;
  const Protocol::ReferenceVariable ref =
      (who == Conditioner::alice) ? p.alice_reference() : p.bob_reference();

  const double joint_entropy = von_neumann_entropy(g);
  const CovarianceMatrix rest = [&] {
    switch (ref) {
      case Protocol::ReferenceVariable::quadrature:
        return condition_on_measurement(g, measured, MeasurementKind::homodyne_x);
      case Protocol::ReferenceVariable::full_heterodyne:
        return condition_on_measurement(g, measured, MeasurementKind::heterodyne);
      case Protocol::ReferenceVariable::matched_heterodyne:
      default:
        // the unmeasured second splitter ports stay in the conditional state
        return detail::condition_on_matched_heterodyne(g, measured);
    }
  }();
  const double chi = joint_entropy - von_neumann_entropy(rest);
  return chi > 0.0 ? chi : 0.0;  // clamp rounding noise on pure states
}

inline double holevo_bound(const Protocol& p, const CovarianceMatrix& g, Conditioner who) {
  if (g.modes() != 2) {
    throw std::invalid_argument("holevo_bound: expected a 2-mode state");
  }
  return holevo_bound(p, g, who, {0}, {1});
}

/// Holevo bound chi_aB = S(B) - S(B|a) on what Bob could extract about
/// Alice's record with an optimal (quantum-memory) receiver.
inline double bob_holevo(const Protocol& p, const CovarianceMatrix& g,
                         const std::vector<int>& alice_modes, const std::vector<int>& bob_modes) {
  detail::check_bipartition(g, alice_modes, bob_modes, "bob_holevo");
  const double bob_entropy = von_neumann_entropy(partial_trace(g, bob_modes));
  const CovarianceMatrix rest = condition_on_measurement(g, alice_modes, p.alice_kind());
  const double chi = bob_entropy - von_neumann_entropy(rest);
  return chi > 0.0 ? chi : 0.0;
}

inline double bob_holevo(const Protocol& p, const CovarianceMatrix& g) {
  if (g.modes() != 2) {
    throw std::invalid_argument("bob_holevo: expected a 2-mode state");
  }
  return bob_holevo(p, g, {0}, {1});
}

// The three information quantities a protocol run budgets against:
// what Alice and Bob actually share, what Eve is capped at, and what a
// quantum-limited Bob could reach.
struct InformationBudget {
  double mutual_information_bits = 0.0;  // I_ab
  double eve_holevo = 0.0;               // chi_E for the chosen direction
  double bob_holevo_bits = 0.0;          // chi_aB
};

inline InformationBudget information_budget(const Protocol& p, const CovarianceMatrix& g,
                                            ReconciliationDirection direction) {
  InformationBudget b;
  b.mutual_information_bits = mutual_information(p, g);
  b.eve_holevo = holevo_bound(
      p, g, direction == ReconciliationDirection::direct ? Conditioner::alice : Conditioner::bob);
  b.bob_holevo_bits = bob_holevo(p, g);
  return b;
}

}  // namespace cvqkd
