#pragma once

#include <limits>
#include <string>
#include <vector>

#include "cvqkd/keyrate.hpp"
#include "cvqkd/random_states.hpp"

// Randomized numerical verification of the information-theoretic facts the
// key-rate machinery rests on: the Holevo bound on the extracted mutual
// information, strong super-additivity of the multi-pair rate (with equality
// on product states), and invariance of the rate under local pairwise
// beam-splitter networks applied to two protocol copies.
//
// Every trial derives its own stream from mix_seed(seed, trial), so reports
// are reproducible bit for bit and individual trials can be replayed.

namespace cvqkd {

struct CheckReport {
  std::string name;
  int trials = 0;
  int violations = 0;                                          // margins below -tolerance
  double worst_margin = std::numeric_limits<double>::infinity();
  int worst_trial = -1;
  double tolerance = 0.0;

  bool passed() const { return violations == 0; }
};

namespace detail {

inline void record_margin(CheckReport& report, double margin, int trial) {
  if (margin < report.worst_margin) {
    report.worst_margin = margin;
    report.worst_trial = trial;
  }
  if (margin < -report.tolerance) ++report.violations;
}

}  // namespace detail

/// I_ab <= chi_aB for every protocol on random 2-mode states; the margin is
/// chi_aB - I_ab.
inline CheckReport check_holevo_inequality(int trials, const RandomStateSpec& spec,
                                           double tolerance = 1e-9) {
  CheckReport report{"holevo-bound", trials, 0, std::numeric_limits<double>::infinity(), -1,
                     tolerance};
  RandomStateSpec two_mode = spec;
  two_mode.n_modes = 2;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng(mix_seed(spec.seed, static_cast<std::uint64_t>(t)));
    const CovarianceMatrix g = random_gaussian_cm(two_mode, rng);
    for (const Protocol& p : Protocol::all()) {
      detail::record_margin(report, bob_holevo(p, g) - mutual_information(p, g), t);
    }
  }
  return report;
}

/// K(joint 2-pair state) >= K(pair 1) + K(pair 2) on random 4-mode states
/// with modes read as (A1, A2, B1, B2); direct reconciliation, beta = 1.
inline CheckReport check_super_additivity(int trials, const RandomStateSpec& spec,
                                          double tolerance = 1e-9) {
  CheckReport report{"super-additivity", trials, 0, std::numeric_limits<double>::infinity(), -1,
                     tolerance};
  RandomStateSpec four_mode = spec;
  four_mode.n_modes = 4;
  const std::vector<int> alice{0, 1}, bob{2, 3};
  for (int t = 0; t < trials; ++t) {
    RandomStream rng(mix_seed(spec.seed, static_cast<std::uint64_t>(t)));
    const CovarianceMatrix g = random_gaussian_cm(four_mode, rng);
    const CovarianceMatrix pair1 = partial_trace(g, {0, 2});
    const CovarianceMatrix pair2 = partial_trace(g, {1, 3});
    for (const Protocol& p : Protocol::all()) {
      const double joint =
          multipair_key_rate(p, ReconciliationDirection::direct, g, alice, bob).key_rate;
      const double k1 = key_rate_for_cm(p, ReconciliationDirection::direct, pair1).key_rate;
      const double k2 = key_rate_for_cm(p, ReconciliationDirection::direct, pair2).key_rate;
      detail::record_margin(report, joint - k1 - k2, t);
    }
  }
  return report;
}

/// Equality case of super-additivity: on tensor products of independent
/// pairs the joint rate equals the sum exactly. Margin is -|difference|.
inline CheckReport check_super_additivity_products(int trials, const RandomStateSpec& spec,
                                                   double tolerance = 1e-9) {
  CheckReport report{"super-additivity-products", trials, 0,
                     std::numeric_limits<double>::infinity(), -1, tolerance};
  RandomStateSpec two_mode = spec;
  two_mode.n_modes = 2;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng(mix_seed(spec.seed, static_cast<std::uint64_t>(t)));
    const CovarianceMatrix g1 = random_gaussian_cm(two_mode, rng);
    const CovarianceMatrix g2 = random_gaussian_cm(two_mode, rng);
    // tensor order (A1, B1, A2, B2): Alice holds modes 0 and 2.
    const CovarianceMatrix joint_state = tensor(g1, g2);
    for (const Protocol& p : Protocol::all()) {
      const double joint =
          multipair_key_rate(p, ReconciliationDirection::direct, joint_state, {0, 2}, {1, 3})
              .key_rate;
      const double k1 = key_rate_for_cm(p, ReconciliationDirection::direct, g1).key_rate;
      const double k2 = key_rate_for_cm(p, ReconciliationDirection::direct, g2).key_rate;
      detail::record_margin(report, -std::abs(joint - k1 - k2), t);
    }
  }
  return report;
}

/// Pairwise 50:50 beam splitters applied to both halves of two copies of a
/// protocol state; any such passive x/p-preserving network commutes with the
/// measurements, so the joint rate must equal twice the single-copy rate.
/// Margin is -|K(network applied) - 2 K|.
inline CheckReport check_gaussification_invariance(int trials, const RandomStateSpec& spec,
                                                   double tolerance = 1e-8,
                                                   const SymplecticTransform* network = nullptr) {
  CheckReport report{"gaussification-invariance", trials, 0,
                     std::numeric_limits<double>::infinity(), -1, tolerance};
  if (network != nullptr && network->modes() != 4) {
    throw std::invalid_argument("check_gaussification_invariance: network must act on 4 modes");
  }
  // Default network: a balanced beam splitter across the two copies, applied
  // identically on Alice's modes (0, 2) and Bob's (1, 3).
  const SymplecticTransform default_network =
      beam_splitter_symplectic(0.5, 0, 2, 4) * beam_splitter_symplectic(0.5, 1, 3, 4);
  const SymplecticTransform& u = network != nullptr ? *network : default_network;

  RandomStateSpec two_mode = spec;
  two_mode.n_modes = 2;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng(mix_seed(spec.seed, static_cast<std::uint64_t>(t)));
    const CovarianceMatrix g = random_gaussian_cm(two_mode, rng);
    const CovarianceMatrix two_copies = apply_symplectic(u, tensor(g, g));
    for (const Protocol& p : Protocol::all()) {
      const double joint =
          multipair_key_rate(p, ReconciliationDirection::direct, two_copies, {0, 2}, {1, 3})
              .key_rate;
      const double single = key_rate_for_cm(p, ReconciliationDirection::direct, g).key_rate;
      detail::record_margin(report, -std::abs(joint - 2.0 * single), t);
    }
  }
  return report;
}

}  // namespace cvqkd
