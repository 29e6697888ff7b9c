#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "doctest.h"
#include "recoil/errors.hpp"
#include "recoil/montecarlo.hpp"
#include "recoil/physics.hpp"
#include "recoil/sigma.hpp"
#include "support.hpp"

using namespace recoil;

namespace {

constexpr double kSigmaRef = 1.97e-21;

// -sqrt(pi/8) h c w_y v / (P lambda) * ln(0.612929914338104), evaluated in
// extended precision for the c70 configuration.
constexpr double kQuickRef = 1.702094979679439e-21;
constexpr double kQuickDeficit = 0.135992396101808;

// 1.97e-21 * hypot(0.2/17.4, 0.02/1.23).
constexpr double kSystRef = 3.922777739102566e-23;

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  return out;
}

ReductionCurve noiseless_curve(double sigma, const std::vector<double>& d) {
  mc::SimulationConfig sim;
  sim.experiment = testsup::reference_config();
  sim.true_sigma_m2 = sigma;
  return mc::simulate_reduction_curve(sim, d, mc::Noiseless{});
}

}  // namespace

TEST_CASE("chi_square against the trivial model") {
  // sigma = 0 predicts ratio 1 at every distance, so chi2 reduces to
  // a hand-computable sum.
  ReductionCurve curve;
  curve.config = testsup::reference_config();
  curve.points = {{0.035, 0.9, 0.05}, {0.045, 1.1, 0.1}, {0.055, 0.7, 0.3}};
  CHECK(chi_square(curve, 0.0) == doctest::Approx(6.0).epsilon(1e-12));

  CHECK_THROWS_AS(chi_square(curve, -1e-21), std::domain_error);

  SUBCASE("curve validation") {
    ReductionCurve empty;
    empty.config = curve.config;
    CHECK_THROWS_AS(chi_square(empty, 0.0), DataError);
    auto bad_err = curve;
    bad_err.points[1].ratio_err = 0.0;
    CHECK_THROWS_AS(chi_square(bad_err, 0.0), DataError);
    auto bad_d = curve;
    bad_d.points[0].abscissa = 0.2;  // beyond the grating separation
    CHECK_THROWS_AS(chi_square(bad_d, 0.0), DataError);
  }
}

TEST_CASE("chi_square is independent of the thread count") {
  auto curve = noiseless_curve(kSigmaRef, linspace(0.035, 0.055, 10));
  SigmaFitOptions one;
  one.threads = 1;
  SigmaFitOptions four;
  four.threads = 4;
  const double a = chi_square(curve, 1.5e-21, one);
  const double b = chi_square(curve, 1.5e-21, four);
  CHECK(a == b);

  // The environment cap only applies when no explicit count is given.
  setenv("RECOIL_SIGMA_THREADS", "1", 1);
  SigmaFitOptions from_env;
  from_env.threads = -1;
  CHECK(chi_square(curve, 1.5e-21, from_env) == a);
  unsetenv("RECOIL_SIGMA_THREADS");
}

TEST_CASE("predict_curve") {
  const auto cfg = testsup::reference_config();
  const auto grid = linspace(0.0, 0.055, 5);

  SUBCASE("zero cross section predicts no reduction") {
    for (double r : predict_curve(cfg, 0.0, grid)) CHECK(r == 1.0);
  }
  SUBCASE("matches the velocity average pointwise") {
    const auto curve = predict_curve(cfg, kSigmaRef, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      ExperimentConfig at = cfg;
      at.recoil_laser.distance_m = grid[i];
      CHECK(curve[i] ==
            reduction_velocity_averaged(at, kSigmaRef, kFitQuadrature));
    }
  }
  SUBCASE("monochromatic closed forms") {
    ExperimentConfig mono = cfg;
    mono.velocity = MonochromaticVelocity{210.3};
    const double dmin = first_minimum_distance(
        mono.interferometer, mono.molecule, mono.recoil_laser.wavelength_m,
        210.3);
    const double n0 =
        mean_photon_number(mono.recoil_laser, kSigmaRef, 210.3);
    const auto r = predict_curve(mono, kSigmaRef, {0.0, dmin});
    CHECK(r[0] == 1.0);
    CHECK(r[1] == doctest::Approx(std::exp(-2.0 * n0)).epsilon(1e-12));
  }
  SUBCASE("grid range is enforced") {
    CHECK_THROWS_AS(predict_curve(cfg, kSigmaRef, {-0.01}),
                    std::domain_error);
    CHECK_THROWS_AS(predict_curve(cfg, kSigmaRef, {0.105}),
                    std::domain_error);
  }
}

TEST_CASE("fitting a noiseless curve recovers the generating cross section") {
  const auto distances = linspace(0.035, 0.055, 10);

  SUBCASE("reference cross section") {
    const auto curve = noiseless_curve(kSigmaRef, distances);
    const auto fit = fit_sigma(curve);
    CHECK(fit.sigma_abs_m2 ==
          doctest::Approx(kSigmaRef).epsilon(1e-4));
    CHECK(fit.chi2_min < 1e-8);
    CHECK(fit.dof == 9);
    CHECK(fit.stat_err_lo_m2 > 0.0);
    CHECK(fit.stat_err_hi_m2 > 0.0);
    CHECK(fit.n0_at_max_power ==
          doctest::Approx(mean_photon_number(curve.config.recoil_laser,
                                             fit.sigma_abs_m2, 210.3))
              .epsilon(1e-12));
    CHECK(fit.systematic_err_m2 == 0.0);

    // The trace holds every evaluation; its running best is the result.
    double best = fit.fit_trace.front().second;
    for (const auto& [s, c2] : fit.fit_trace) best = std::min(best, c2);
    CHECK(fit.chi2_min == best);
  }
  SUBCASE("strong-reduction cross section") {
    const auto fit = fit_sigma(noiseless_curve(1e-20, distances));
    CHECK(fit.sigma_abs_m2 == doctest::Approx(1e-20).epsilon(1e-4));
    CHECK(fit.chi2_min < 1e-8);
  }
  SUBCASE("weak-reduction cross section") {
    const auto fit = fit_sigma(noiseless_curve(1e-23, distances));
    CHECK(fit.sigma_abs_m2 == doctest::Approx(1e-23).epsilon(1e-4));
    CHECK(fit.chi2_min < 1e-8);
  }
}

TEST_CASE("delta-chi2 interval endpoints sit at chi2_min + 1") {
  mc::SimulationConfig sim;
  sim.experiment = testsup::reference_config();
  sim.true_sigma_m2 = kSigmaRef;
  sim.rng_seed = 7;
  const auto curve = mc::simulate_reduction_curve(
      sim, linspace(0.035, 0.055, 10), mc::GaussianRatio{0.03});

  const auto fit = fit_sigma(curve);
  CHECK(fit.sigma_abs_m2 == doctest::Approx(kSigmaRef).epsilon(0.2));
  const double target = fit.chi2_min + 1.0;
  CHECK(std::abs(chi_square(curve, fit.sigma_abs_m2 - fit.stat_err_lo_m2) -
                 target) <= 1e-6);
  CHECK(std::abs(chi_square(curve, fit.sigma_abs_m2 + fit.stat_err_hi_m2) -
                 target) <= 1e-6);

  SUBCASE("scaling all error bars leaves the minimum in place") {
    auto wide = curve;
    for (auto& p : wide.points) p.ratio_err *= 2.0;
    const auto refit = fit_sigma(wide);
    CHECK(refit.sigma_abs_m2 == fit.sigma_abs_m2);
    CHECK(refit.chi2_min == doctest::Approx(fit.chi2_min / 4.0).epsilon(1e-12));
    const double width = fit.stat_err_lo_m2 + fit.stat_err_hi_m2;
    const double rewidth = refit.stat_err_lo_m2 + refit.stat_err_hi_m2;
    CHECK(rewidth == doctest::Approx(2.0 * width).epsilon(0.03));
  }
}

TEST_CASE("chi_square is unimodal in sigma over the fit range") {
  const auto curve = noiseless_curve(kSigmaRef, linspace(0.035, 0.055, 10));
  const auto grid = linspace(0.0, 1e-20, 101);
  std::vector<double> c2(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    c2[i] = chi_square(curve, grid[i]);
  int sign_changes = 0;
  int last_sign = 0;
  for (std::size_t i = 1; i < c2.size(); ++i) {
    const double diff = c2[i] - c2[i - 1];
    if (std::abs(diff) < 1e-6) continue;  // quadrature jitter near the min
    const int sign = diff > 0.0 ? 1 : -1;
    if (last_sign != 0 && sign != last_sign) ++sign_changes;
    last_sign = sign;
  }
  CHECK(sign_changes == 1);
}

TEST_CASE("minimum on the sigma_max boundary is an error") {
  const auto curve = noiseless_curve(1e-20, linspace(0.035, 0.055, 10));
  SigmaFitOptions cramped;
  cramped.sigma_max_m2 = 1e-21;
  CHECK_THROWS_AS(fit_sigma(curve, cramped), FitError);
  CHECK_THROWS_AS(fit_sigma(curve, SigmaFitOptions{.sigma_max_m2 = 0.0}),
                  std::domain_error);
}

TEST_CASE("single-point inversion") {
  const auto cfg = testsup::reference_config();

  SUBCASE("frozen reference value") {
    const double qs = quick_sigma(cfg, {0.035, 0.612929914338104, 0.03});
    CHECK(qs == doctest::Approx(kQuickRef).epsilon(1e-12));
    const double deficit = 1.0 - qs / kSigmaRef;
    CHECK(deficit == doctest::Approx(kQuickDeficit).epsilon(1e-9));
    CHECK(deficit > 0.08);
    CHECK(deficit < 0.20);
  }
  SUBCASE("limits and monotonicity") {
    CHECK(quick_sigma(cfg, {0.035, 1.0, 0.03}) == 0.0);
    CHECK(quick_sigma(cfg, {0.035, 0.5, 0.03}) >
          quick_sigma(cfg, {0.035, 0.6, 0.03}));
    // Homogeneous in the velocity override.
    CHECK(quick_sigma(cfg, {0.035, 0.6, 0.03}, 420.6) ==
          doctest::Approx(2.0 * quick_sigma(cfg, {0.035, 0.6, 0.03}, 210.3))
              .epsilon(1e-15));
  }
  SUBCASE("domain") {
    CHECK_THROWS_AS(quick_sigma(cfg, {0.035, 0.0, 0.03}), std::domain_error);
    CHECK_THROWS_AS(quick_sigma(cfg, {0.035, -0.2, 0.03}), std::domain_error);
    CHECK_THROWS_AS(quick_sigma(cfg, {0.035, 1.2, 0.03}), std::domain_error);
  }
}

TEST_CASE("systematic error propagation") {
  CHECK(propagate_systematics(kSigmaRef, 0.2 / 17.4, 0.02 / 1.23) ==
        doctest::Approx(kSystRef).epsilon(1e-12));
  CHECK(propagate_systematics(2.0 * kSigmaRef, 0.2 / 17.4, 0.02 / 1.23) ==
        doctest::Approx(2.0 * kSystRef).epsilon(1e-12));
  CHECK(propagate_systematics(kSigmaRef, 0.0, 0.0) == 0.0);
  CHECK(propagate_systematics(kSigmaRef, 0.03, 0.04) ==
        doctest::Approx(0.05 * kSigmaRef).epsilon(1e-12));
  CHECK_THROWS_AS(propagate_systematics(-1.0, 0.1, 0.1), std::domain_error);
  CHECK_THROWS_AS(propagate_systematics(kSigmaRef, -0.1, 0.1),
                  std::domain_error);
}
