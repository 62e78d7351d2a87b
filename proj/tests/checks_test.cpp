#include <catch2/catch.hpp>

#include <cmath>

#include "cvqkd/checks.hpp"

using namespace cvqkd;

namespace {

RandomStateSpec spec_with(std::uint64_t seed, double nu_max = 4.0) {
  RandomStateSpec spec;
  spec.n_modes = 2;
  spec.nu_max = nu_max;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("check reports are reproducible bit for bit") {
  const CheckReport a = check_holevo_inequality(40, spec_with(11));
  const CheckReport b = check_holevo_inequality(40, spec_with(11));
  CHECK(a.worst_margin == b.worst_margin);
  CHECK(a.worst_trial == b.worst_trial);
  CHECK(a.violations == b.violations);
}

TEST_CASE("holevo inequality check") {
  const CheckReport report = check_holevo_inequality(100, spec_with(7));
  CHECK(report.trials == 100);
  CHECK(report.violations == 0);
  CHECK(report.worst_margin >= 0.0);

  SECTION("worst margin matches a recomputation of that trial") {
    RandomStream rng(mix_seed(7, static_cast<std::uint64_t>(report.worst_trial)));
    RandomStateSpec two = spec_with(7);
    const CovarianceMatrix g = random_gaussian_cm(two, rng);
    double margin = std::numeric_limits<double>::infinity();
    for (const Protocol& p : Protocol::all()) {
      margin = std::min(margin, bob_holevo(p, g) - mutual_information(p, g));
    }
    CHECK(margin == report.worst_margin);
  }
}

TEST_CASE("super-additivity check") {
  const CheckReport report = check_super_additivity(60, spec_with(13));
  CHECK(report.violations == 0);
  CHECK(report.worst_margin > -1e-9);
}

TEST_CASE("super-additivity equality on products") {
  const CheckReport report = check_super_additivity_products(30, spec_with(17));
  CHECK(report.violations == 0);
  CHECK(report.worst_margin > -1e-9);

  SECTION("tensor square doubles the rate") {
    RandomStream rng(42);
    const CovarianceMatrix g = random_gaussian_cm(spec_with(0, 3.0), rng);
    const CovarianceMatrix square = tensor(g, g);
    for (const Protocol& p : Protocol::all()) {
      const double joint =
          multipair_key_rate(p, ReconciliationDirection::direct, square, {0, 2}, {1, 3}).key_rate;
      const double single = key_rate_for_cm(p, ReconciliationDirection::direct, g).key_rate;
      CHECK(std::abs(joint - 2.0 * single) < 1e-9);
    }
  }
}

TEST_CASE("gaussification invariance check") {
  SECTION("vacuum input gives zero on both paths") {
    const CovarianceMatrix four_mode_vacuum(Eigen::MatrixXd::Identity(8, 8));
    const SymplecticTransform u =
        beam_splitter_symplectic(0.5, 0, 2, 4) * beam_splitter_symplectic(0.5, 1, 3, 4);
    const CovarianceMatrix mixed = apply_symplectic(u, four_mode_vacuum);
    for (const Protocol& p : Protocol::all()) {
      const double joint =
          multipair_key_rate(p, ReconciliationDirection::direct, mixed, {0, 2}, {1, 3}).key_rate;
      CHECK(std::abs(joint) < 1e-12);
    }
  }
  SECTION("EPR pairs through a noisy channel") {
    const CovarianceMatrix g =
        channel_output_cm(ModulationVariance(2.0), ChannelParams(0.8, 0.02));
    const SymplecticTransform u =
        beam_splitter_symplectic(0.5, 0, 2, 4) * beam_splitter_symplectic(0.5, 1, 3, 4);
    const CovarianceMatrix mixed = apply_symplectic(u, tensor(g, g));
    for (const Protocol& p : Protocol::all()) {
      const double joint =
          multipair_key_rate(p, ReconciliationDirection::direct, mixed, {0, 2}, {1, 3}).key_rate;
      const double single = key_rate_for_cm(p, ReconciliationDirection::direct, g).key_rate;
      CHECK(std::abs(joint - 2.0 * single) < 1e-8);
    }
  }
  SECTION("random draws under the default network") {
    const CheckReport report = check_gaussification_invariance(40, spec_with(23));
    CHECK(report.violations == 0);
  }
  SECTION("other pairwise splitter networks work too") {
    const SymplecticTransform network =
        beam_splitter_symplectic(0.3, 0, 2, 4) * beam_splitter_symplectic(0.3, 1, 3, 4);
    const CheckReport report = check_gaussification_invariance(25, spec_with(29), 1e-8, &network);
    CHECK(report.violations == 0);
  }
  SECTION("network must act on two copies") {
    const SymplecticTransform wrong = SymplecticTransform::identity(3);
    REQUIRE_THROWS_AS(check_gaussification_invariance(5, spec_with(1), 1e-8, &wrong),
                      std::invalid_argument);
  }
}
