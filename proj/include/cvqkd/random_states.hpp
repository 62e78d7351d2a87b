#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "cvqkd/symplectic.hpp"

namespace cvqkd {

// Deterministic draws on top of mt19937_64 (whose output sequence the
// standard pins down) with explicit uniform and normal mappings, so a seed
// reproduces bit-identical streams across standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; two uniforms per draw, no cached state.
  double normal() {
    const double u = 1.0 - uniform();  // (0, 1]
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64-style mix of a base seed with a stream index; used to hand
/// independent deterministic streams to trials and chunks.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Fixture generator parameters: Williamson spectrum drawn from
// [1, nu_max]; nu_max = 1 forces pure states.
struct RandomStateSpec {
  int n_modes = 2;
  double nu_max = 2.0;
  std::uint64_t seed = 0;
};

// Squeezers are drawn with |r| <= 1 per layer over two layers, capping the
// total per-mode squeezing parameter at 2; larger values make the
// conditioning Schur complements needlessly ill-conditioned in tests.
inline constexpr double kRandomSqueezeCap = 1.0;

/// Random symplectic from two layers of per-mode rotations and squeezers
/// interleaved with beam splitters on neighbouring pairs.
inline SymplecticTransform random_symplectic(int n_modes, RandomStream& rng) {
  if (n_modes < 1) throw std::invalid_argument("random_symplectic: n_modes must be positive");
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes);
  const auto apply = [&](const SymplecticTransform& f) { s = f.matrix() * s; };
  for (int layer = 0; layer < 2; ++layer) {
    for (int m = 0; m < n_modes; ++m) {
      apply(phase_rotation_symplectic(rng.uniform(0.0, 2.0 * std::numbers::pi), m, n_modes));
    }
    for (int m = 0; m < n_modes; ++m) {
      apply(squeeze_symplectic(rng.uniform(-kRandomSqueezeCap, kRandomSqueezeCap), m, n_modes));
    }
    for (int m = layer % 2; m + 1 < n_modes; m += 2) {
      apply(beam_splitter_symplectic(rng.uniform(), m, m + 1, n_modes));
    }
  }
  return SymplecticTransform(std::move(s));
}

/// Random physical covariance matrix S D S^T with D a Williamson diagonal
/// drawn from [1, spec.nu_max] and S a random symplectic network.
/// Reproducible from the seed.
inline CovarianceMatrix random_gaussian_cm(const RandomStateSpec& spec, RandomStream& rng) {
  if (spec.n_modes < 1 || !(spec.nu_max >= 1.0)) {
    throw std::invalid_argument("random_gaussian_cm: need n_modes >= 1 and nu_max >= 1");
  }
  Eigen::VectorXd d(2 * spec.n_modes);
  for (int m = 0; m < spec.n_modes; ++m) {
    const double nu = rng.uniform(1.0, spec.nu_max);
    d(x_index(m)) = nu;
    d(p_index(m)) = nu;
  }
  const SymplecticTransform s = random_symplectic(spec.n_modes, rng);
  const Eigen::MatrixXd g =
      detail::symmetric_part(s.matrix() * d.asDiagonal() * s.matrix().transpose());
  return CovarianceMatrix(g);
}

inline CovarianceMatrix random_gaussian_cm(const RandomStateSpec& spec) {
  RandomStream rng(spec.seed);
  return random_gaussian_cm(spec, rng);
}

}  // namespace cvqkd
