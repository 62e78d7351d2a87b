#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cvqkd/protocol.hpp"

// Collective-attack secret key rates: K = beta * I_ab - chi_E, with chi_E the
// purifying eavesdropper's Holevo bound conditioned on the reconciliation
// reference side. The infinite-modulation limit is taken on a variance
// ladder, and the tolerable-excess-noise solver bisects on the sign of the
// asymptotic rate.

namespace cvqkd {

struct KeyRateParams {
  Protocol protocol;
  ReconciliationDirection direction = ReconciliationDirection::direct;
  ModulationVariance v;
  ChannelParams channel;
  double beta = 1.0;

  KeyRateParams(Protocol p, ReconciliationDirection d, ModulationVariance vv, ChannelParams ch,
                double b)
      : protocol(p), direction(d), v(vv), channel(ch), beta(b) {
    if (!(b >= 0.0 && b <= 1.0)) {
      throw std::invalid_argument("KeyRateParams: reconciliation efficiency must lie in [0,1], got " +
                                  std::to_string(b));
    }
  }
};

// K = beta * information_bits - eve_holevo holds exactly as stored. For the
// quantum-Bob rate the information term is chi_aB (Bob's Holevo bound) at
// beta = 1 rather than the homodyne/heterodyne mutual information.
struct KeyRateResult {
  double information_bits = 0.0;
  double eve_holevo = 0.0;
  double key_rate = 0.0;
  bool converged = true;
  double v_used = std::numeric_limits<double>::quiet_NaN();
};

/// Multi-pair rate on a shared state whose modes are split between Alice and
/// Bob, each party measuring all of their modes with the protocol's kind.
/// Restricts to the single-pair rate when each side holds one mode.
inline KeyRateResult multipair_key_rate(const Protocol& p, ReconciliationDirection direction,
                                        const CovarianceMatrix& g,
                                        const std::vector<int>& alice_modes,
                                        const std::vector<int>& bob_modes, double beta = 1.0) {
  KeyRateResult r;
  r.information_bits = mutual_information(p, g, alice_modes, bob_modes);
  r.eve_holevo = holevo_bound(
      p, g, direction == ReconciliationDirection::direct ? Conditioner::alice : Conditioner::bob,
      alice_modes, bob_modes);
  r.key_rate = beta * r.information_bits - r.eve_holevo;
  return r;
}

/// Single-pair rate evaluated directly on a 2-mode covariance matrix
/// (mode 0 Alice, mode 1 Bob).
inline KeyRateResult key_rate_for_cm(const Protocol& p, ReconciliationDirection direction,
                                     const CovarianceMatrix& g, double beta = 1.0) {
  if (g.modes() != 2) {
    throw std::invalid_argument("key_rate_for_cm: expected a 2-mode state");
  }
  return multipair_key_rate(p, direction, g, {0}, {1}, beta);
}

/// K = beta * I_ab - chi_E on the channel-output state; beta = 1 recovers the
/// ideal-reconciliation rate.
inline KeyRateResult secret_key_rate(const KeyRateParams& params) {
  const CovarianceMatrix g = channel_output_cm(params.v, params.channel);
  KeyRateResult r = key_rate_for_cm(params.protocol, params.direction, g, params.beta);
  r.v_used = params.v.value;
  return r;
}

/// Rate against a quantum-limited Bob who attains his Holevo bound:
/// K = chi_aB - chi_aE (direct-reconciliation semantics). Never below the
/// beta = 1 direct rate, since chi_aB >= I_ab.
inline KeyRateResult quantum_bob_rate(const Protocol& p, ModulationVariance v,
                                      const ChannelParams& channel) {
  const CovarianceMatrix g = channel_output_cm(v, channel);
  KeyRateResult r;
  r.information_bits = bob_holevo(p, g);
  r.eve_holevo = holevo_bound(p, g, Conditioner::alice);
  r.key_rate = r.information_bits - r.eve_holevo;
  r.v_used = v.value;
  return r;
}

// Numerical knobs for the asymptotic limit and the threshold solver. The
// defaults resolve threshold curves well past plotting accuracy.
struct SolverOptions {
  double rate_tol = 1e-6;      // ladder convergence on |K(V_next) - K(V)|
  double epsilon_tol = 1e-5;   // absolute bisection tolerance on epsilon
  double v_start = 1e2;        // first ladder rung
  double v_max = 1e8;          // ladder exhausted here
  double v_factor = 10.0;      // rung spacing
};

/// Infinite-modulation rate: secret_key_rate on the ladder
/// V in {v_start, v_start * 10, ...} until two consecutive rungs agree to
/// rate_tol. A ladder exhausted without agreement (e.g. the diverging
/// lossless channel) is returned flagged, not thrown; likewise a rung lost
/// to rounding breakdown at extreme variances ends the ladder flagged once
/// an earlier rung exists.
inline KeyRateResult asymptotic_key_rate(const Protocol& p, ReconciliationDirection direction,
                                         const ChannelParams& channel, double beta,
                                         const SolverOptions& opts = {}) {
  KeyRateResult last{};
  bool have_last = false;
  for (double v = opts.v_start; v <= opts.v_max * (1.0 + 1e-12); v *= opts.v_factor) {
    KeyRateResult r;
    try {
      r = secret_key_rate(KeyRateParams(p, direction, ModulationVariance(v), channel, beta));
    } catch (const unphysical_state&) {
      if (!have_last) throw;  // first rung: the inputs themselves are bad
      last.converged = false;
      return last;
    }
    if (have_last && std::abs(r.key_rate - last.key_rate) < opts.rate_tol) {
      r.converged = true;
      return r;
    }
    last = r;
    have_last = true;
  }
  last.converged = false;
  return last;
}

struct ThresholdResult {
  double epsilon_max = 0.0;
  bool converged = true;  // false when any contributing rate evaluation was flagged
};

/// Largest input-referred excess noise with a strictly positive asymptotic
/// rate at transmittance T. Brackets by geometric growth, then bisects to
/// epsilon_tol; K = 0 counts as no key, so the zero rate at epsilon = 0
/// yields a zero threshold.
inline ThresholdResult tolerable_excess_noise(double transmittance, const Protocol& p,
                                              ReconciliationDirection direction, double beta,
                                              const SolverOptions& opts = {}) {
  bool all_converged = true;
  const auto rate_at = [&](double eps) {
    const KeyRateResult r =
        asymptotic_key_rate(p, direction, ChannelParams(transmittance, eps), beta, opts);
    all_converged = all_converged && r.converged;
    return r.key_rate;
  };

  if (!(rate_at(0.0) > 0.0)) return {0.0, all_converged};

  double lo = 0.0;
  double hi = 1e-2;
  while (rate_at(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) return {lo, false};  // no sign change; give up flagged
  }
  while (hi - lo > opts.epsilon_tol) {
    const double mid = 0.5 * (lo + hi);
    (rate_at(mid) > 0.0 ? lo : hi) = mid;
  }
  return {lo, all_converged};
}

struct ThresholdCell {
  double transmittance = 0.0;
  Protocol protocol;
  ReconciliationDirection direction = ReconciliationDirection::direct;
  double epsilon_max = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  std::string error;  // non-empty when the cell failed
};

struct ThresholdTable {
  std::vector<ThresholdCell> cells;  // T major, then protocol, then direction
};

/// Threshold table over a transmittance grid. Cells are independent and are
/// evaluated on `jobs` threads; output order is fixed (T major, protocol,
/// direction) regardless of scheduling, and per-cell failures are recorded
/// in the cell rather than aborting the sweep.
inline ThresholdTable sweep_thresholds(const std::vector<double>& grid,
                                       const std::vector<Protocol>& protocols,
                                       const std::vector<ReconciliationDirection>& directions,
                                       double beta, int jobs = 1, const SolverOptions& opts = {}) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] <= 1.0)) {
      throw std::invalid_argument("sweep_thresholds: grid values must lie in (0,1]");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw std::invalid_argument("sweep_thresholds: grid must be strictly increasing");
    }
  }
  if (protocols.empty() || directions.empty()) {
    throw std::invalid_argument("sweep_thresholds: protocol and direction sets must be non-empty");
  }

  ThresholdTable table;
  table.cells.resize(grid.size() * protocols.size() * directions.size());
  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    for (std::size_t pi = 0; pi < protocols.size(); ++pi) {
      for (std::size_t di = 0; di < directions.size(); ++di) {
        ThresholdCell& cell =
            table.cells[(ti * protocols.size() + pi) * directions.size() + di];
        cell.transmittance = grid[ti];
        cell.protocol = protocols[pi];
        cell.direction = directions[di];
      }
    }
  }

  const auto evaluate = [&](ThresholdCell& cell) {
    try {
      const ThresholdResult r =
          tolerable_excess_noise(cell.transmittance, cell.protocol, cell.direction, beta, opts);
      cell.epsilon_max = r.epsilon_max;
      cell.converged = r.converged;
    } catch (const std::exception& e) {
      cell.error = e.what();
      cell.converged = false;
    }
  };

  const int workers = std::max(1, jobs);
  if (workers == 1 || table.cells.size() < 2) {
    for (ThresholdCell& cell : table.cells) evaluate(cell);
    return table;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < table.cells.size(); i = next.fetch_add(1)) {
        evaluate(table.cells[i]);
      }
    });
  }
  for (std::thread& t : pool) t.join();
  return table;
}

}  // namespace cvqkd
