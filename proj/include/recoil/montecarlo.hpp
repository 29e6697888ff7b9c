#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "recoil/config.hpp"
#include "recoil/fringe.hpp"
#include "recoil/physics.hpp"
#include "recoil/sigma.hpp"

namespace recoil::mc {

struct SimulationConfig {
  ExperimentConfig experiment;
  double true_sigma_m2 = 0.0;
  long long n_molecules = 100000;
  std::uint64_t rng_seed = 1;
  int points_per_scan = 40;
  double dwell_s = 1.0;
  int repeats = 10;  // reference/perturbed scan pairs in full-scan mode
};

/// One simulated molecule: sampled velocity, absorbed photon count and the
/// resulting lateral fringe shift at the third grating.
struct EnsembleSample {
  double velocity_mps = 0.0;
  int photons = 0;
  double shift_m = 0.0;
};

/// Draws n_molecules samples: velocity from the configured model, photon
/// number Poisson with the velocity-dependent mean, shift = photons *
/// (single-photon recoil deflection). Blocked so results are bit-identical
/// for any thread count. threads <= 0 resolves from RECOIL_SIGMA_THREADS.
std::vector<EnsembleSample> sample_ensemble(const SimulationConfig& config,
                                            int threads = -1);

struct ReductionEstimate {
  double ratio = 0.0;
  double ratio_err = 0.0;  // delete-block jackknife standard error
};

/// |< exp(2 pi i shift / d) >| over the ensemble: the Monte Carlo analogue
/// of the velocity-averaged visibility-reduction factor.
ReductionEstimate estimate_reduction(const std::vector<EnsembleSample>& ensemble,
                                     double grating_period_m);

/// Simulated third-grating scan with Poisson counts at each position.
/// perturbed = false gives the reference fringe (recoil laser off).
FringeScan simulate_fringe_scan(const SimulationConfig& config, bool perturbed,
                                std::uint64_t scan_index = 0);

/// Noise applied to a simulated reduction curve. err is the absolute
/// error bar written on each ratio; Noiseless assigns it without
/// perturbing the model values, GaussianRatio also adds that much
/// Gaussian noise. FullScans builds each point from `repeats` simulated
/// reference/perturbed fringe-scan pairs instead.
struct Noiseless {
  double err = 0.03;
};
struct GaussianRatio {
  double err = 0.03;
};
struct FullScans {};
using NoiseModel = std::variant<Noiseless, GaussianRatio, FullScans>;

/// Model curve over the given distances with the configured noise applied.
/// Model values come from the fit-accuracy quadrature so that fitting the
/// noiseless curve recovers the generating cross section exactly.
ReductionCurve simulate_reduction_curve(const SimulationConfig& config,
                                        const std::vector<double>& distances_m,
                                        const NoiseModel& noise);

}  // namespace recoil::mc
