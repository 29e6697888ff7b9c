#include "recoil/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include "recoil/errors.hpp"
#include "recoil/numerics.hpp"
#include "recoil/parallel.hpp"

namespace recoil::mc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Stream tags keep every consumer of the master seed statistically
// independent and stable across releases.
constexpr std::uint64_t kTagEnsemble = 0x01;
constexpr std::uint64_t kTagScanCounts = 0x02;
constexpr std::uint64_t kTagScanShift = 0x03;
constexpr std::uint64_t kTagCurveNoise = 0x04;

constexpr std::uint64_t kBlockSize = 65536;

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t tag,
                            std::uint64_t index) {
  return mix64(mix64(mix64(seed) ^ tag) ^ index);
}

double uniform01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Truncated-Gaussian sampler matching the quadrature's velocity window
/// ([v0 - 8 sigma, v0 + 8 sigma] intersected with v > 0) exactly, via the
/// inverse CDF mapped onto the retained probability mass.
struct VelocitySampler {
  double v0 = 0.0;
  double sigma = 0.0;  // 0 = monochromatic
  double cdf_lo = 0.0;
  double cdf_span = 1.0;

  explicit VelocitySampler(const VelocityModel& model) {
    if (const auto* g = std::get_if<GaussianVelocity>(&model)) {
      v0 = g->v0_mps;
      sigma = g->sigma_mps;
      const double lo = std::max(0.0, v0 - 8.0 * sigma);
      const double hi = v0 + 8.0 * sigma;
      cdf_lo = num::normal_cdf((lo - v0) / sigma);
      cdf_span = num::normal_cdf((hi - v0) / sigma) - cdf_lo;
    } else {
      v0 = std::get<MonochromaticVelocity>(model).v0_mps;
    }
  }

  double sample(std::mt19937_64& rng) const {
    if (sigma == 0.0) return v0;
    const double u = cdf_lo + uniform01(rng) * cdf_span;
    return v0 + sigma * num::normal_quantile(u);
  }
};

/// Poisson by CDF inversion. Means above 25 are split into equal chunks
/// (Poisson additivity), keeping the walk short and e^{-mean} well away
/// from underflow.
long poisson_small(std::mt19937_64& rng, double mean) {
  const double u = uniform01(rng);
  double p = std::exp(-mean);
  double cum = p;
  long k = 0;
  const long cap = static_cast<long>(mean + 100.0 * std::sqrt(mean) + 100.0);
  while (u > cum && k < cap) {
    ++k;
    p *= mean / static_cast<double>(k);
    cum += p;
  }
  return k;
}

long poisson(std::mt19937_64& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean <= 25.0) return poisson_small(rng, mean);
  const long chunks = static_cast<long>(std::ceil(mean / 25.0));
  const double part = mean / static_cast<double>(chunks);
  long total = 0;
  for (long c = 0; c < chunks; ++c) total += poisson_small(rng, part);
  return total;
}

void check(const SimulationConfig& config) {
  validate(config.experiment);
  if (!(config.true_sigma_m2 >= 0.0) || !std::isfinite(config.true_sigma_m2))
    throw std::domain_error("true_sigma must be >= 0");
  if (config.n_molecules < 1)
    throw std::domain_error("n_molecules must be >= 1");
  if (config.points_per_scan < 8)
    throw std::domain_error("points_per_scan must be >= 8");
  if (!(config.dwell_s > 0.0))
    throw std::domain_error("dwell time must be > 0");
  if (config.repeats < 1) throw std::domain_error("repeats must be >= 1");
}

/// Complex ensemble mean of exp(2 pi i shift / d), drawn with the given
/// stream tag. Shared by estimate_reduction-style uses and fringe scans.
std::complex<double> ensemble_phase_mean(const SimulationConfig& config,
                                         std::uint64_t tag,
                                         std::uint64_t index) {
  std::mt19937_64 rng(derive_stream(config.rng_seed, tag, index));
  const VelocitySampler vel(config.experiment.velocity);
  const double d = config.experiment.interferometer.grating_period_m;
  num::KahanSum re, im;
  for (long long i = 0; i < config.n_molecules; ++i) {
    const double v = vel.sample(rng);
    const double mean = mean_photon_number(config.experiment.recoil_laser,
                                           config.true_sigma_m2, v);
    const long k = poisson(rng, mean);
    const double shift =
        static_cast<double>(k) *
        recoil_shift(config.experiment.molecule,
                     config.experiment.recoil_laser.wavelength_m,
                     config.experiment.recoil_laser.distance_m, v);
    const double ph = kTwoPi * shift / d;
    re.add(std::cos(ph));
    im.add(std::sin(ph));
  }
  const double n = static_cast<double>(config.n_molecules);
  return {re.value() / n, im.value() / n};
}

}  // namespace

std::vector<EnsembleSample> sample_ensemble(const SimulationConfig& config,
                                            int threads) {
  check(config);
  const std::size_t n = static_cast<std::size_t>(config.n_molecules);
  std::vector<EnsembleSample> out(n);
  const std::size_t blocks = (n + kBlockSize - 1) / kBlockSize;
  const int t = par::resolve_threads(threads, blocks);
  par::parallel_for(blocks, t, [&](std::size_t b) {
    std::mt19937_64 rng(derive_stream(config.rng_seed, kTagEnsemble, b));
    const VelocitySampler vel(config.experiment.velocity);
    const std::size_t begin = b * kBlockSize;
    const std::size_t end = std::min(begin + kBlockSize, n);
    for (std::size_t i = begin; i < end; ++i) {
      EnsembleSample& s = out[i];
      s.velocity_mps = vel.sample(rng);
      const double mean = mean_photon_number(config.experiment.recoil_laser,
                                             config.true_sigma_m2,
                                             s.velocity_mps);
      s.photons = static_cast<int>(poisson(rng, mean));
      s.shift_m = static_cast<double>(s.photons) *
                  recoil_shift(config.experiment.molecule,
                               config.experiment.recoil_laser.wavelength_m,
                               config.experiment.recoil_laser.distance_m,
                               s.velocity_mps);
    }
  });
  return out;
}

ReductionEstimate estimate_reduction(
    const std::vector<EnsembleSample>& ensemble, double grating_period_m) {
  if (!(grating_period_m > 0.0))
    throw std::domain_error("grating period must be > 0");
  const std::size_t n = ensemble.size();
  if (n < 2) throw DataError("reduction estimate needs at least 2 samples");

  num::KahanSum re_all, im_all;
  std::vector<double> phase(n);
  for (std::size_t i = 0; i < n; ++i) {
    phase[i] = kTwoPi * ensemble[i].shift_m / grating_period_m;
    re_all.add(std::cos(phase[i]));
    im_all.add(std::sin(phase[i]));
  }
  const double sre = re_all.value(), sim = im_all.value();

  ReductionEstimate out;
  out.ratio = std::hypot(sre, sim) / static_cast<double>(n);

  // Delete-block jackknife over contiguous blocks.
  const std::size_t n_blocks = std::min<std::size_t>(200, n);
  std::vector<double> theta(n_blocks);
  double theta_bar = 0.0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t begin = b * n / n_blocks;
    const std::size_t end = (b + 1) * n / n_blocks;
    num::KahanSum bre, bim;
    for (std::size_t i = begin; i < end; ++i) {
      bre.add(std::cos(phase[i]));
      bim.add(std::sin(phase[i]));
    }
    theta[b] = std::hypot(sre - bre.value(), sim - bim.value()) /
               static_cast<double>(n - (end - begin));
    theta_bar += theta[b];
  }
  theta_bar /= static_cast<double>(n_blocks);
  double ss = 0.0;
  for (double t : theta) ss += (t - theta_bar) * (t - theta_bar);
  out.ratio_err = std::sqrt(ss * static_cast<double>(n_blocks - 1) /
                            static_cast<double>(n_blocks));
  return out;
}

FringeScan simulate_fringe_scan(const SimulationConfig& config, bool perturbed,
                                std::uint64_t scan_index) {
  check(config);
  const double d = config.experiment.interferometer.grating_period_m;
  const double mu = config.experiment.baseline_mean_rate_hz;
  const double vis = config.experiment.baseline_visibility;

  std::complex<double> m{1.0, 0.0};
  if (perturbed)
    m = ensemble_phase_mean(config, kTagScanShift, scan_index);

  std::mt19937_64 rng(
      derive_stream(config.rng_seed, kTagScanCounts,
                    scan_index * 2 + (perturbed ? 1 : 0)));

  FringeScan scan;
  scan.dwell_s = config.dwell_s;
  const int n = config.points_per_scan;
  for (int i = 0; i < n; ++i) {
    // Two fringe periods per scan; enough span for the period fit and for
    // a clean separation of mean and amplitude.
    const double x = 2.0 * d * static_cast<double>(i) / static_cast<double>(n);
    const std::complex<double> fringe =
        std::exp(std::complex<double>(0.0, kTwoPi * x / d));
    const double rate = mu * (1.0 + vis * (fringe * m).real());
    scan.positions_m.push_back(x);
    scan.counts.push_back(poisson(rng, rate * config.dwell_s));
  }
  return scan;
}

ReductionCurve simulate_reduction_curve(const SimulationConfig& config,
                                        const std::vector<double>& distances_m,
                                        const NoiseModel& noise) {
  check(config);
  if (distances_m.empty())
    throw std::domain_error("distance grid must not be empty");

  ReductionCurve curve;
  curve.config = config.experiment;

  if (std::holds_alternative<FullScans>(noise)) {
    for (std::size_t i = 0; i < distances_m.size(); ++i) {
      SimulationConfig point_cfg = config;
      point_cfg.experiment.recoil_laser.distance_m = distances_m[i];
      double sw = 0.0, swr = 0.0;
      for (int r = 0; r < config.repeats; ++r) {
        const std::uint64_t pair =
            (i * static_cast<std::size_t>(config.repeats) +
             static_cast<std::size_t>(r)) *
            2;
        try {
          const auto reference = extract_visibility(
              simulate_fringe_scan(point_cfg, false, pair),
              point_cfg.experiment.interferometer.grating_period_m);
          const auto perturbed = extract_visibility(
              simulate_fringe_scan(point_cfg, true, pair + 1),
              point_cfg.experiment.interferometer.grating_period_m);
          const RatioPoint rp = visibility_ratio(perturbed, reference);
          const double w = 1.0 / (rp.ratio_err * rp.ratio_err);
          sw += w;
          swr += w * rp.ratio;
        } catch (const Error& e) {
          throw FitError("scan pair at distance " +
                         std::to_string(distances_m[i]) + " m: " + e.what());
        }
      }
      curve.points.push_back(
          {distances_m[i], swr / sw, 1.0 / std::sqrt(sw)});
    }
    return curve;
  }

  const std::vector<double> model =
      predict_curve(config.experiment, config.true_sigma_m2, distances_m);
  if (const auto* g = std::get_if<GaussianRatio>(&noise)) {
    if (!(g->err > 0.0)) throw std::domain_error("ratio error must be > 0");
    for (std::size_t i = 0; i < distances_m.size(); ++i) {
      std::mt19937_64 rng(derive_stream(config.rng_seed, kTagCurveNoise, i));
      const double z = num::normal_quantile(uniform01(rng));
      curve.points.push_back({distances_m[i], model[i] + g->err * z, g->err});
    }
  } else {
    const auto& nl = std::get<Noiseless>(noise);
    if (!(nl.err > 0.0)) throw std::domain_error("ratio error must be > 0");
    for (std::size_t i = 0; i < distances_m.size(); ++i)
      curve.points.push_back({distances_m[i], model[i], nl.err});
  }
  return curve;
}

}  // namespace recoil::mc
