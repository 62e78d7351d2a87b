#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cvqkd/csv.hpp"
#include "cvqkd/keyrate.hpp"
#include "cvqkd/random_states.hpp"
#include "cvqkd/version.hpp"

// Monte-Carlo prepare-and-measure pipeline in the entanglement-based picture:
// outcome tuples are drawn from the exact joint Gaussian law the shared state
// and the detection model imply (only second moments matter for the rate, so
// no mode-level simulation with an explicit eavesdropper is needed). Sifting
// and covariance estimation then reverse the detection model to recover the
// shared state from finite data.

namespace cvqkd {

enum class QuadLabel : std::uint8_t { none, x, p };

inline const char* label_name(QuadLabel l) {
  switch (l) {
    case QuadLabel::x: return "x";
    case QuadLabel::p: return "p";
    default: return "";
  }
}

// Column-wise record of measurement outcomes; absent values (the quadrature a
// homodyne round did not touch) are NaN. Labels are present exactly when the
// corresponding measurement is homodyne.
struct SampleBatch {
  Protocol protocol;
  double modulation_variance = 1.0;
  double transmittance = 1.0;
  double excess_noise = 0.0;
  std::uint64_t seed = 0;
  bool sifted = false;

  std::vector<double> alice_x, alice_p, bob_x, bob_p;
  std::vector<QuadLabel> alice_label, bob_label;

  std::size_t size() const { return alice_x.size(); }

  ChannelParams channel() const { return ChannelParams(transmittance, excess_noise); }
};

namespace detail {

inline constexpr std::size_t kSimulationChunk = 1u << 16;
inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

// One (Alice choice, Bob choice) combination: the Cholesky factor of the
// outcome covariance, plus where each outcome variable lands in the
// (alice_x, alice_p, bob_x, bob_p) slot layout.
struct OutcomeCombo {
  int variables = 0;
  std::array<double, 16> chol{};  // row-major lower-triangular factor
  std::array<int, 4> slot{};      // variable index -> slot index
  QuadLabel alice = QuadLabel::none;
  QuadLabel bob = QuadLabel::none;
};

inline OutcomeCombo make_combo(const CovarianceMatrix& g, QuadLabel alice, QuadLabel bob,
                               const Protocol& p) {
  OutcomeCombo combo;
  combo.alice = alice;
  combo.bob = bob;
  std::vector<MeasurementKind> kinds;
  int var = 0;
  if (p.alice_kind() == MeasurementKind::heterodyne) {
    kinds.push_back(MeasurementKind::heterodyne);
    combo.slot[var++] = 0;
    combo.slot[var++] = 1;
  } else {
    kinds.push_back(alice == QuadLabel::x ? MeasurementKind::homodyne_x
                                          : MeasurementKind::homodyne_p);
    combo.slot[var++] = alice == QuadLabel::x ? 0 : 1;
  }
  if (p.bob_kind() == MeasurementKind::heterodyne) {
    kinds.push_back(MeasurementKind::heterodyne);
    combo.slot[var++] = 2;
    combo.slot[var++] = 3;
  } else {
    kinds.push_back(bob == QuadLabel::x ? MeasurementKind::homodyne_x
                                        : MeasurementKind::homodyne_p);
    combo.slot[var++] = bob == QuadLabel::x ? 2 : 3;
  }
  combo.variables = var;

  const auto model = outcome_model(2, {0, 1}, kinds);
  const Eigen::MatrixXd sigma = outcome_covariance(g, model);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw unphysical_state("simulate_protocol: outcome covariance is not positive definite",
                           sigma.diagonal().minCoeff());
  }
  const Eigen::MatrixXd l = llt.matrixL();
  for (int i = 0; i < var; ++i) {
    for (int j = 0; j <= i; ++j) combo.chol[static_cast<std::size_t>(4 * i + j)] = l(i, j);
  }
  return combo;
}

}  // namespace detail

/// Draw `n` measurement rounds of the given protocol over the channel.
/// Quadrature choices are uniform and independent where a measurement has a
/// basis choice. Generation is chunked, each chunk seeded by
/// mix_seed(seed, chunk); chunks are produced on several threads but the
/// batch is identical to sequential generation, and a batch is a prefix of
/// any longer batch drawn from the same seed.
inline SampleBatch simulate_protocol(const Protocol& p, const ChannelParams& ch,
                                     ModulationVariance v, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("simulate_protocol: need at least one round");
  const CovarianceMatrix g = channel_output_cm(v, ch);

  const bool alice_chooses = p.alice_kind() != MeasurementKind::heterodyne;
  const bool bob_chooses = p.bob_kind() != MeasurementKind::heterodyne;
  const std::vector<QuadLabel> alice_options =
      alice_chooses ? std::vector<QuadLabel>{QuadLabel::x, QuadLabel::p}
                    : std::vector<QuadLabel>{QuadLabel::none};
  const std::vector<QuadLabel> bob_options =
      bob_chooses ? std::vector<QuadLabel>{QuadLabel::x, QuadLabel::p}
                  : std::vector<QuadLabel>{QuadLabel::none};

  std::vector<detail::OutcomeCombo> combos;
  combos.reserve(alice_options.size() * bob_options.size());
  for (QuadLabel a : alice_options) {
    for (QuadLabel b : bob_options) combos.push_back(detail::make_combo(g, a, b, p));
  }

  SampleBatch batch;
  batch.protocol = p;
  batch.modulation_variance = v.value;
  batch.transmittance = ch.transmittance;
  batch.excess_noise = ch.excess_noise;
  batch.seed = seed;
  batch.alice_x.resize(n);
  batch.alice_p.resize(n);
  batch.bob_x.resize(n);
  batch.bob_p.resize(n);
  batch.alice_label.resize(n);
  batch.bob_label.resize(n);

  const std::size_t chunks = (n + detail::kSimulationChunk - 1) / detail::kSimulationChunk;
  const auto fill_chunk = [&](std::size_t c) {
    RandomStream rng(mix_seed(seed, c));
    const std::size_t begin = c * detail::kSimulationChunk;
    const std::size_t end = std::min(n, begin + detail::kSimulationChunk);
    for (std::size_t row = begin; row < end; ++row) {
      std::size_t pick = 0;
      if (alice_chooses) pick = (rng.uniform() < 0.5 ? 0 : 1) * bob_options.size();
      if (bob_chooses) pick += rng.uniform() < 0.5 ? 0 : 1;
      const detail::OutcomeCombo& combo = combos[pick];

      std::array<double, 4> z{};
      for (int i = 0; i < combo.variables; ++i) z[static_cast<std::size_t>(i)] = rng.normal();
      std::array<double, 4> slots = {detail::kAbsent, detail::kAbsent, detail::kAbsent,
                                     detail::kAbsent};
      for (int i = 0; i < combo.variables; ++i) {
        double y = 0.0;
        for (int j = 0; j <= i; ++j) {
          y += combo.chol[static_cast<std::size_t>(4 * i + j)] * z[static_cast<std::size_t>(j)];
        }
        slots[static_cast<std::size_t>(combo.slot[static_cast<std::size_t>(i)])] = y;
      }
      batch.alice_x[row] = slots[0];
      batch.alice_p[row] = slots[1];
      batch.bob_x[row] = slots[2];
      batch.bob_p[row] = slots[3];
      batch.alice_label[row] = combo.alice;
      batch.bob_label[row] = combo.bob;
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (chunks == 1 || hw == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fill_chunk(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t workers = std::min<std::size_t>(hw, chunks);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) fill_chunk(c);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  return batch;
}

/// Quadrature reconciliation. Squeezed + homodyne keeps the rounds whose
/// bases match (about half); when only one side chose a basis, the other
/// side's two-real record is projected onto the matched quadrature and
/// nothing is discarded; coherent + heterodyne needs no sifting at all.
inline SampleBatch sift(const SampleBatch& batch) {
  SampleBatch out = batch;
  out.sifted = true;
  const Protocol& p = batch.protocol;
  if (!p.requires_sifting()) return out;

  const bool alice_chooses = p.alice_kind() != MeasurementKind::heterodyne;
  const bool bob_chooses = p.bob_kind() != MeasurementKind::heterodyne;

  if (alice_chooses && bob_chooses) {
    std::size_t kept = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch.alice_label[i] != batch.bob_label[i]) continue;
      out.alice_x[kept] = batch.alice_x[i];
      out.alice_p[kept] = batch.alice_p[i];
      out.bob_x[kept] = batch.bob_x[i];
      out.bob_p[kept] = batch.bob_p[i];
      out.alice_label[kept] = batch.alice_label[i];
      out.bob_label[kept] = batch.bob_label[i];
      ++kept;
    }
    out.alice_x.resize(kept);
    out.alice_p.resize(kept);
    out.bob_x.resize(kept);
    out.bob_p.resize(kept);
    out.alice_label.resize(kept);
    out.bob_label.resize(kept);
    return out;
  }

  if (!alice_chooses) {
    // coherent source + homodyne Bob: project Alice's record onto Bob's basis
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out.bob_label[i] == QuadLabel::x) {
        out.alice_p[i] = detail::kAbsent;
      } else {
        out.alice_x[i] = detail::kAbsent;
      }
      out.alice_label[i] = out.bob_label[i];
    }
    return out;
  }

  // squeezed source + heterodyne Bob: keep Bob's matched component
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.alice_label[i] == QuadLabel::x) {
      out.bob_p[i] = detail::kAbsent;
    } else {
      out.bob_x[i] = detail::kAbsent;
    }
    out.bob_label[i] = out.alice_label[i];
  }
  return out;
}

// Shared-state estimate recovered from measured data. `gamma` may be
// marginally unphysical for finite samples; `physical` reports the relaxed
// uncertainty test, and no repair is attempted.
struct EstimatedCovariance {
  CovarianceMatrix gamma;
  bool physical = false;
  std::size_t samples_used = 0;
  Eigen::MatrixXd standard_errors;  // 4x4, entrywise, same layout as gamma
};

namespace detail {

// Undo the detection model on the 4x4 outcome covariance (slot layout
// alice_x, alice_p, bob_x, bob_p): a heterodyned side was scaled by
// 1/sqrt(2) and carries half a unit of vacuum per quadrature, so entries
// scale by sqrt(2) per heterodyne side and heterodyne diagonals lose the
// remaining unit of vacuum. Homodyne entries pass through unchanged.
inline Eigen::Matrix4d invert_outcome_covariance(const Protocol& p, const Eigen::Matrix4d& sigma) {
  const double sa = p.alice_kind() == MeasurementKind::heterodyne ? std::sqrt(2.0) : 1.0;
  const double sb = p.bob_kind() == MeasurementKind::heterodyne ? std::sqrt(2.0) : 1.0;
  const Eigen::Vector4d scale(sa, sa, sb, sb);
  Eigen::Matrix4d gamma = scale.asDiagonal() * sigma * scale.asDiagonal();
  if (p.alice_kind() == MeasurementKind::heterodyne) {
    gamma(0, 0) -= 1.0;
    gamma(1, 1) -= 1.0;
  }
  if (p.bob_kind() == MeasurementKind::heterodyne) {
    gamma(2, 2) -= 1.0;
    gamma(3, 3) -= 1.0;
  }
  return gamma;
}

struct PairwiseMoments {
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d counts = Eigen::Matrix4d::Zero();  // co-present rounds per pair
  std::array<double, 4> mean{};
  std::size_t rounds = 0;
};

// Pairwise-complete second moments of the outcome slots: each pair (i, j) is
// averaged over the rounds where both values are present, about that pair's
// own means. Pairs never observed together stay at zero covariance and zero
// count.
inline PairwiseMoments accumulate_moments(const SampleBatch& batch,
                                          const std::vector<std::size_t>& rows) {
  PairwiseMoments m;
  m.rounds = rows.size();
  const std::array<const double*, 4> cols = {batch.alice_x.data(), batch.alice_p.data(),
                                             batch.bob_x.data(), batch.bob_p.data()};
  double sum_i[4][4]{}, sum_j[4][4]{}, sum_ij[4][4]{};
  long long count[4][4]{};
  double slot_sum[4]{};
  long long slot_count[4]{};
  for (std::size_t r : rows) {
    double v[4];
    bool present[4];
    for (int i = 0; i < 4; ++i) {
      v[i] = cols[static_cast<std::size_t>(i)][r];
      present[i] = !std::isnan(v[i]);
      if (present[i]) {
        slot_sum[i] += v[i];
        ++slot_count[i];
      }
    }
    for (int i = 0; i < 4; ++i) {
      if (!present[i]) continue;
      for (int j = i; j < 4; ++j) {
        if (!present[j]) continue;
        sum_i[i][j] += v[i];
        sum_j[i][j] += v[j];
        sum_ij[i][j] += v[i] * v[j];
        ++count[i][j];
      }
    }
  }
  for (int i = 0; i < 4; ++i) {
    m.mean[static_cast<std::size_t>(i)] =
        slot_count[i] > 0 ? slot_sum[i] / static_cast<double>(slot_count[i]) : 0.0;
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = i; j < 4; ++j) {
      const double n = static_cast<double>(count[i][j]);
      m.counts(i, j) = m.counts(j, i) = n;
      if (n < 2) continue;
      const double mi = sum_i[i][j] / n;
      const double mj = sum_j[i][j] / n;
      const double cov = (sum_ij[i][j] - n * mi * mj) / (n - 1.0);
      m.covariance(i, j) = m.covariance(j, i) = cov;
    }
  }
  return m;
}

}  // namespace detail

/// Sample covariance of the sifted outcomes, mapped back through the
/// detection model to a 2-mode shared-state estimate in shot-noise units.
/// Entries whose quadrature pair the protocol never observes together are
/// structural zeros of the channel model and are reported as 0 with the
/// standard error they would have carried. `sample_fraction` estimates from
/// a random subset of the retained rounds (drawn deterministically from the
/// batch seed); the default uses everything.
inline EstimatedCovariance estimate_covariance(const SampleBatch& batch,
                                               double sample_fraction = 1.0) {
  if (!batch.sifted) {
    throw std::invalid_argument("estimate_covariance: sift the batch first");
  }
  if (batch.size() < 2) {
    throw std::invalid_argument("estimate_covariance: need at least two rounds");
  }
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw std::invalid_argument("estimate_covariance: sample fraction must lie in (0,1]");
  }

  std::vector<std::size_t> rows;
  rows.reserve(batch.size());
  if (sample_fraction >= 1.0) {
    for (std::size_t i = 0; i < batch.size(); ++i) rows.push_back(i);
  } else {
    RandomStream rng(mix_seed(batch.seed, 0x65737469ULL));  // estimation subset stream
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (rng.uniform() < sample_fraction) rows.push_back(i);
    }
    if (rows.size() < 2) {
      throw std::invalid_argument("estimate_covariance: sample fraction leaves too few rounds");
    }
  }

  const detail::PairwiseMoments m = detail::accumulate_moments(batch, rows);
  for (int i = 0; i < 4; ++i) {
    if (m.counts(i, i) < 2) {
      throw std::invalid_argument("estimate_covariance: a measured quadrature has fewer than two samples");
    }
    if (!(m.covariance(i, i) > 0.0)) {
      throw std::domain_error("estimate_covariance: degenerate sample (zero variance outcome)");
    }
  }

  const Eigen::Matrix4d gamma_raw = detail::invert_outcome_covariance(batch.protocol, m.covariance);
  Eigen::Matrix4d gamma = 0.5 * (gamma_raw + gamma_raw.transpose());

  const double sa =
      batch.protocol.alice_kind() == MeasurementKind::heterodyne ? std::sqrt(2.0) : 1.0;
  const double sb = batch.protocol.bob_kind() == MeasurementKind::heterodyne ? std::sqrt(2.0) : 1.0;
  const Eigen::Vector4d scale(sa, sa, sb, sb);
  Eigen::Matrix4d se;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double n = m.counts(i, j) >= 2 ? m.counts(i, j) : static_cast<double>(rows.size());
      // var(cov_hat) ~ (S_ii S_jj + S_ij^2) / n for jointly Gaussian data
      const double var_hat =
          (m.covariance(i, i) * m.covariance(j, j) + m.covariance(i, j) * m.covariance(i, j)) / n;
      se(i, j) = scale(i) * scale(j) * std::sqrt(var_hat);
    }
  }

  EstimatedCovariance est{CovarianceMatrix(gamma), false, rows.size(), se};
  est.physical = is_physical(est.gamma);
  return est;
}

/// Full pipeline on finite data: sift, estimate, then evaluate the key rate
/// on the estimated state with the batch's modulation variance. Fails loudly
/// when the estimate lands outside the physical set.
inline KeyRateResult key_rate_from_samples(const SampleBatch& batch,
                                           ReconciliationDirection direction, double beta,
                                           double sample_fraction = 1.0) {
  const SampleBatch sifted = batch.sifted ? batch : sift(batch);
  const EstimatedCovariance est = estimate_covariance(sifted, sample_fraction);
  if (!est.physical) {
    throw std::domain_error(
        "key_rate_from_samples: estimated covariance matrix is unphysical; increase the sample "
        "size");
  }
  KeyRateResult r = key_rate_for_cm(batch.protocol, direction, est.gamma, beta);
  r.v_used = batch.modulation_variance;
  return r;
}

/// Batch CSV: one row per round, absent fields empty. Deterministic bytes
/// for a given batch.
inline void write_batch_csv(const SampleBatch& batch, std::ostream& os) {
  os << "# cvqkd batch schema 1 (tool " << kVersion << ")\n";
  os << "# protocol=" << batch.protocol.name() << " V=" << format_double(batch.modulation_variance)
     << " T=" << format_double(batch.transmittance)
     << " eps=" << format_double(batch.excess_noise) << " seed=" << batch.seed
     << " sifted=" << (batch.sifted ? 1 : 0) << "\n";
  os << "round,alice_x,alice_p,alice_label,bob_x,bob_p,bob_label\n";
  const auto field = [](double v) { return std::isnan(v) ? std::string() : format_double(v, "%.17g"); };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    os << i << ',' << field(batch.alice_x[i]) << ',' << field(batch.alice_p[i]) << ','
       << label_name(batch.alice_label[i]) << ',' << field(batch.bob_x[i]) << ','
       << field(batch.bob_p[i]) << ',' << label_name(batch.bob_label[i]) << '\n';
  }
}

}  // namespace cvqkd
