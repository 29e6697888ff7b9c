#include "recoil/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "recoil/constants.hpp"
#include "recoil/errors.hpp"
#include "recoil/numerics.hpp"

namespace recoil {

double offset_intensity_factor(double offset_y_m, double waist_y_m) {
  if (!(waist_y_m > 0.0))
    throw std::domain_error("offset_intensity_factor: waist must be > 0");
  const double r = offset_y_m / waist_y_m;
  return std::exp(-2.0 * r * r);
}

double mean_photon_number(const RecoilLaserSpec& laser, double sigma_abs_m2,
                          double velocity_mps) {
  if (sigma_abs_m2 < 0.0)
    throw std::domain_error("mean_photon_number: sigma_abs must be >= 0");
  if (!(velocity_mps > 0.0))
    throw std::domain_error("mean_photon_number: velocity must be > 0");
  if (laser.wavelength_m < 0.0 || laser.power_w < 0.0)
    throw std::domain_error(
        "mean_photon_number: wavelength and power must be >= 0");
  const double on_axis = std::sqrt(2.0 / std::numbers::pi) * sigma_abs_m2 *
                         laser.wavelength_m * laser.power_w /
                         (constants.planck_h * constants.light_speed_c *
                          laser.waist_y_m * velocity_mps);
  return on_axis * offset_intensity_factor(laser.offset_y_m, laser.waist_y_m);
}

double recoil_shift(const MoleculeSpec& molecule, double wavelength_m,
                    double distance_m, double velocity_mps) {
  if (!(velocity_mps > 0.0))
    throw std::domain_error("recoil_shift: velocity must be > 0");
  if (distance_m < 0.0)
    throw std::domain_error("recoil_shift: distance must be >= 0");
  if (!(molecule.mass_kg > 0.0) || !(wavelength_m > 0.0))
    throw std::domain_error("recoil_shift: mass and wavelength must be > 0");
  return constants.planck_h * distance_m /
         (molecule.mass_kg * velocity_mps * wavelength_m);
}

double reduction_monochromatic(double n0, double shift_m, double period_m) {
  if (n0 < 0.0)
    throw std::domain_error("reduction_monochromatic: n0 must be >= 0");
  if (!(period_m > 0.0))
    throw std::domain_error("reduction_monochromatic: period must be > 0");
  if (n0 == 0.0) return 1.0;
  const double phase = 2.0 * std::numbers::pi * shift_m / period_m;
  return std::exp(-n0 * (1.0 - std::cos(phase)));
}

double reduction_asymptotic(double n0) {
  if (n0 < 0.0)
    throw std::domain_error("reduction_asymptotic: n0 must be >= 0");
  return std::exp(-n0);
}

double first_minimum_distance(const InterferometerSpec& interferometer,
                              const MoleculeSpec& molecule,
                              double wavelength_m, double v0_mps) {
  if (!(interferometer.grating_period_m > 0.0) || !(molecule.mass_kg > 0.0) ||
      !(wavelength_m > 0.0) || !(v0_mps > 0.0))
    throw std::domain_error("first_minimum_distance: inputs must be > 0");
  return interferometer.grating_period_m * molecule.mass_kg * v0_mps *
         wavelength_m / (2.0 * constants.planck_h);
}

double revival_period(const InterferometerSpec& interferometer,
                      const MoleculeSpec& molecule, double wavelength_m,
                      double v0_mps) {
  return 2.0 *
         first_minimum_distance(interferometer, molecule, wavelength_m,
                                v0_mps);
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gaussian velocity density truncated to [lo, hi] (8 sigma around v0,
// intersected with v > 0) and renormalized; neglected mass < 1e-15.
struct TruncatedGaussian {
  double v0 = 0.0;
  double sigma = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double norm = 0.0;  // 1 / (sigma * sqrt(2 pi) * retained mass)

  static TruncatedGaussian make(const GaussianVelocity& g) {
    TruncatedGaussian t;
    t.v0 = g.v0_mps;
    t.sigma = g.sigma_mps;
    t.lo = std::max(0.0, t.v0 - 8.0 * t.sigma);
    t.hi = t.v0 + 8.0 * t.sigma;
    const double mass = num::normal_cdf((t.hi - t.v0) / t.sigma) -
                        num::normal_cdf((t.lo - t.v0) / t.sigma);
    t.norm = 1.0 / (t.sigma * std::sqrt(kTwoPi) * mass);
    return t;
  }

  double density(double v) const {
    const double z = (v - v0) / sigma;
    return norm * std::exp(-0.5 * z * z);
  }
};

struct ComplexVal {
  double re = 0.0;
  double im = 0.0;
};

ComplexVal simpson(double x0, double x2, const ComplexVal& f0,
                   const ComplexVal& fm, const ComplexVal& f2) {
  const double h = (x2 - x0) / 6.0;
  return {h * (f0.re + 4.0 * fm.re + f2.re),
          h * (f0.im + 4.0 * fm.im + f2.im)};
}

// Averages the per-velocity dephasing factor exp(-n0(v) (1 - e^{i phi(v)}))
// over a truncated-Gaussian velocity distribution, with n0(v) = k_n / v
// and phase phi(v) = k_phi / v.
//
// The phase diverges as v -> 0, so when the distribution reaches down to
// (or near) zero velocity the grid below a cut velocity is never resolved
// directly. Instead the integrand there is replaced by its exact average
// over one phase cycle, density(v) * exp(-n0(v)) (only the constant
// Fourier component of e^{n0 e^{i phi}} survives), which is smooth. The
// replacement error is dominated by the single partial cycle adjacent to
// the cut plus the envelope drift across cycles; both are bounded by the
// local cycle width 2 pi v^2 / k_phi times the density, and the cut is
// chosen by bisection so this bound stays inside the error budget; it is
// lowered on the fly if the running result shrinks the budget.
//
// Above the cut, panels are pre-split at every phase half-cycle so plain
// panels never hold more than half an oscillation. Where n0 is large the
// phase-revival points phi = 2 pi k carry narrow packets whose factor
// cos/sin(n0 sin phi) oscillates internally; packets that can matter at
// the accuracy floor get explicit sub-cuts at their internal half-waves
// so the error estimates never alias across unsampled oscillations.
//
// Refinement is globally adaptive: panels live in a max-heap keyed by
// their local Richardson error estimate and the worst panel is bisected
// until the total estimate meets the target rel_tol * max(|R|, 1e-3).
class DephasingAverager {
 public:
  DephasingAverager(const TruncatedGaussian& weight, double k_n, double k_phi,
                    const VelocityAverageOptions& options)
      : w_(weight), k_n_(k_n), k_phi_(k_phi), opts_(options) {}

  double run() {
    const double floor_target = opts_.rel_tol * 1e-3;

    // Optimistic initial cut; extended downward later if the result
    // turns out small enough to shrink the tail budget.
    cut_ = choose_cut(0.05 * opts_.rel_tol * 0.3);
    if (cut_ > w_.lo) {
      tail_error_ = residual_bound(cut_);
      seed_phase_panels(cut_, w_.hi);
      rebuild_correction();
    } else {
      cut_ = w_.lo;
      tail_error_ = 0.0;
      seed_phase_panels(w_.lo, w_.hi);
    }

    while (true) {
      const double r = std::hypot(total_re_.value(), total_im_.value());
      const double target = opts_.rel_tol * std::max(r, 1e-3);
      const double err = total_err_.value() + frozen_main_err_ +
                         frozen_corr_err_ + tail_error_;
      if (err <= target) break;
      if (cut_ > w_.lo && tail_error_ > 0.4 * target) {
        extend_tail(std::max(0.05 * target, 0.05 * floor_target));
        continue;
      }
      if (evals_ + 4 > opts_.max_evals || heap_.empty()) break;
      split_worst();
    }

    // Clean final re-sum over all panels to shed incremental drift.
    num::KahanSum re_sum, im_sum, err_sum;
    for (const Node& n : heap_) {
      re_sum.add(n.val.re);
      im_sum.add(n.val.im);
      err_sum.add(n.e);
    }
    re_sum.add(frozen_main_re_ + frozen_corr_re_);
    im_sum.add(frozen_main_im_ + frozen_corr_im_);
    const double r = std::hypot(re_sum.value(), im_sum.value());
    const double target = opts_.rel_tol * std::max(r, 1e-3);
    const double total_err =
        err_sum.value() + frozen_main_err_ + frozen_corr_err_ + tail_error_;
    if (!(total_err <= target))
      throw QuadratureError(
          "velocity-averaged reduction did not reach the requested accuracy",
          total_err, target);
    return std::min(r, 1.0);
  }

 private:
  struct Node {
    double a = 0.0;
    double b = 0.0;
    ComplexVal fa, fl, fm, fr, fb;  // integrand at the 4th-points
    ComplexVal val;                 // Richardson-extrapolated estimate
    double e = 0.0;                 // local error estimate
    bool with_phase = true;
  };

  static bool heap_less(const Node& x, const Node& y) {
    if (x.e != y.e) return x.e < y.e;
    return x.a > y.a;
  }

  double residual_bound(double v) const {
    if (v <= 0.0) return 0.0;
    // Oscillatory deviation from the cycle mean carries the damping
    // envelope exp(-n0) I0(n0), and its per-harmonic 1/k weights tighten
    // that to 1/n0 once n0 exceeds 2*pi.
    // The partial cycle at the junction leaves a residual of order
    // density * v^2 / (k_phi * n0): only algebraically small in n0, since
    // the half-packet sine integral has a Dawson tail ~ 1/n0.
    const double n0 = k_n_ / v;
    const double scale =
        std::min(num::bessel_i0_scaled(n0), n0 > 1.0 ? 1.0 / n0 : 1.0);
    return 3.0 * w_.density(v) * scale * (kTwoPi * v * v / k_phi_);
  }

  // Largest velocity at which the cycle-average replacement below stays
  // within the given budget: at least 20 full cycles underneath, cycle
  // width under sigma/4 (slow envelope), and the junction bound small.
  double choose_cut(double tail_budget) const {
    const double cap = std::min(
        {k_phi_ / (40.0 * std::numbers::pi),
         std::sqrt(w_.sigma * k_phi_ / (8.0 * std::numbers::pi)), w_.v0});
    if (residual_bound(cap) <= tail_budget) return cap;
    double lo = 0.0;
    double hi = cap;
    for (int i = 0; i < 200 && (hi - lo) > 1e-14 * cap; ++i) {
      const double mid = 0.5 * (lo + hi);
      (residual_bound(mid) <= tail_budget ? lo : hi) = mid;
    }
    return lo;
  }

  ComplexVal eval(double v, bool with_phase) {
    ++evals_;
    const double p = w_.density(v);
    const double n0 = k_n_ / v;
    if (!with_phase) return {p * std::exp(-n0), 0.0};
    const double phi = k_phi_ / v;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double damp = std::exp(-n0 * (1.0 - c));
    return {p * damp * std::cos(n0 * s), p * damp * std::sin(n0 * s)};
  }

  Node make_node(double a, const ComplexVal& fa, double m,
                 const ComplexVal& fm, double b, const ComplexVal& fb,
                 bool with_phase) {
    Node n;
    n.a = a;
    n.b = b;
    n.fa = fa;
    n.fm = fm;
    n.fb = fb;
    n.fl = eval(0.5 * (a + m), with_phase);
    n.fr = eval(0.5 * (m + b), with_phase);
    n.with_phase = with_phase;
    const ComplexVal coarse = simpson(a, b, fa, fm, fb);
    const ComplexVal left = simpson(a, m, fa, n.fl, fm);
    const ComplexVal right = simpson(m, b, fm, n.fr, fb);
    const double de_re = (left.re + right.re - coarse.re) / 15.0;
    const double de_im = (left.im + right.im - coarse.im) / 15.0;
    n.val = {left.re + right.re + de_re, left.im + right.im + de_im};
    // Key on the raw coarse/fine gap: the asymptotic /15 factor understates
    // badly on freshly seeded half-cycle panels.
    n.e = 15.0 * (std::abs(de_re) + std::abs(de_im));
    if (!std::isfinite(n.e)) n.e = 1e300;
    return n;
  }

  void add_node(Node&& n) {
    total_re_.add(n.val.re);
    total_im_.add(n.val.im);
    total_err_.add(n.e);
    heap_.push_back(std::move(n));
    std::push_heap(heap_.begin(), heap_.end(), heap_less);
  }

  void split_worst() {
    std::pop_heap(heap_.begin(), heap_.end(), heap_less);
    Node parent = std::move(heap_.back());
    heap_.pop_back();
    total_re_.add(-parent.val.re);
    total_im_.add(-parent.val.im);
    total_err_.add(-parent.e);
    const double m = 0.5 * (parent.a + parent.b);
    if ((parent.b - parent.a) <=
        1e-13 * std::max(std::abs(parent.a), std::abs(parent.b))) {
      // Cannot refine further; retire the panel at its current estimate.
      if (parent.with_phase) {
        frozen_main_re_ += parent.val.re;
        frozen_main_im_ += parent.val.im;
        frozen_main_err_ += parent.e;
      } else {
        frozen_corr_re_ += parent.val.re;
        frozen_corr_im_ += parent.val.im;
        frozen_corr_err_ += parent.e;
      }
      return;
    }
    add_node(make_node(parent.a, parent.fa, 0.5 * (parent.a + m), parent.fl,
                       m, parent.fm, parent.with_phase));
    add_node(make_node(m, parent.fm, 0.5 * (m + parent.b), parent.fr,
                       parent.b, parent.fb, parent.with_phase));
  }

  // Pre-split cut points for the oscillatory region [a, b]: density
  // structure at v0 + j sigma, every phase half-cycle boundary, and
  // internal half-wave sub-cuts for revival packets that could matter.
  void seed_phase_panels(double a, double b) {
    std::vector<double> interior;
    const double margin = 1e-12 * (b - a);
    auto push = [&](double v) {
      if (v > a + margin && v < b - margin) interior.push_back(v);
    };
    for (int j = -8; j <= 8; ++j) push(w_.v0 + j * w_.sigma);

    const double pi = std::numbers::pi;
    const long m_lo = std::max(1L, static_cast<long>(std::ceil(
                                       k_phi_ / (pi * b) - 1e-9)));
    const long m_hi = static_cast<long>(std::floor(k_phi_ / (pi * a) + 1e-9));
    const double n_half = static_cast<double>(m_hi - m_lo + 1);
    if (5.0 * n_half >
        static_cast<double>(opts_.max_evals - std::min(opts_.max_evals,
                                                       evals_))) {
      const double feasible =
          1.0 / (static_cast<double>(opts_.max_evals) / 5.0 * pi / k_phi_ +
                 1.0 / w_.hi);
      throw QuadratureError(
          "oscillatory low-velocity tail exceeds the evaluation budget",
          residual_bound(std::max(feasible, a)), 0.05 * opts_.rel_tol * 1e-3);
    }
    // Packets below this amplitude stay unsplit; their combined estimate
    // error is held under a tenth of the smallest possible target.
    const double packet_floor =
        0.1 * opts_.rel_tol * 1e-3 / std::max(n_half, 1.0);
    for (long m = m_lo; m <= m_hi; ++m) {
      const double vm = k_phi_ / (pi * static_cast<double>(m));
      push(vm);
      if (m % 2 != 0) continue;
      const double n0m = k_n_ / vm;
      if (n0m <= 3.0) continue;
      // Gate on the packet's undamped envelope mass, not its (cancelled)
      // true value: an unresolved packet biases sampled estimates by up to
      // the envelope even when its net contribution is nil.
      const double amp = w_.density(vm) * (vm * vm / k_phi_) *
                         std::sqrt(kTwoPi / n0m);
      if (!(amp > packet_floor)) continue;
      const long j_cap = std::min(
          static_cast<long>(std::ceil(std::sqrt(80.0 * n0m) / pi)),
          static_cast<long>(n0m));
      const double phase_m = pi * static_cast<double>(m);
      for (long j = 1; j <= j_cap; ++j) {
        const double psi = pi * static_cast<double>(j) / n0m;
        push(k_phi_ / (phase_m - psi));
        push(k_phi_ / (phase_m + psi));
      }
    }
    if (5.0 * static_cast<double>(interior.size() + 2) >
        static_cast<double>(opts_.max_evals -
                            std::min(opts_.max_evals, evals_)))
      throw QuadratureError(
          "oscillatory low-velocity tail exceeds the evaluation budget",
          residual_bound(a), 0.05 * opts_.rel_tol * 1e-3);
    seed_panels(a, b, std::move(interior), true);
  }

  // Rebuilds the smooth cycle-averaged remainder over [lo, cut]: drops
  // any previous correction panels and seeds fresh ones.
  void rebuild_correction() {
    drop_correction_panels();
    const double a = w_.lo;
    const double b = cut_;
    std::vector<double> interior;
    const double margin = 1e-12 * (b - a);
    auto push = [&](double v) {
      if (v > a + margin && v < b - margin) interior.push_back(v);
    };
    for (int j = -8; j <= 8; ++j) push(w_.v0 + j * w_.sigma);
    // Knee of the damping factor exp(-k_n / v).
    for (int j = 0; j < 14; ++j) push(k_n_ / static_cast<double>(1 << j));
    seed_panels(a, b, std::move(interior), false);
  }

  void seed_panels(double a, double b, std::vector<double>&& interior,
                   bool with_phase) {
    const double margin = 1e-12 * (b - a);
    std::sort(interior.begin(), interior.end());
    interior.erase(
        std::unique(interior.begin(), interior.end(),
                    [&](double x, double y) { return (y - x) < margin; }),
        interior.end());
    std::vector<double> cuts;
    cuts.reserve(interior.size() + 2);
    cuts.push_back(a);
    cuts.insert(cuts.end(), interior.begin(), interior.end());
    cuts.push_back(b);
    for (int r = 1; r < opts_.refine_factor; ++r) {
      std::vector<double> finer;
      finer.reserve(cuts.size() * 2);
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        finer.push_back(cuts[i]);
        finer.push_back(0.5 * (cuts[i] + cuts[i + 1]));
      }
      finer.push_back(cuts.back());
      cuts = std::move(finer);
    }
    ComplexVal f_left = eval(cuts.front(), with_phase);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double x0 = cuts[i];
      const double x2 = cuts[i + 1];
      const double xm = 0.5 * (x0 + x2);
      const ComplexVal fm = eval(xm, with_phase);
      const ComplexVal f2 = eval(x2, with_phase);
      add_node(make_node(x0, f_left, xm, fm, x2, f2, with_phase));
      f_left = f2;
    }
  }

  // Lowers the cut so the cycle-average tail bound fits the budget; the
  // freed interval joins the oscillatory region.
  void extend_tail(double tail_budget) {
    double new_cut = choose_cut(tail_budget);
    if (new_cut >= cut_) new_cut = 0.5 * cut_;
    if (!(new_cut > w_.lo)) new_cut = w_.lo;
    const double old_cut = cut_;
    cut_ = new_cut;
    tail_error_ = cut_ > w_.lo ? residual_bound(cut_) : 0.0;
    if (cut_ > w_.lo)
      rebuild_correction();
    else
      drop_correction_panels();
    seed_phase_panels(std::max(cut_, w_.lo), old_cut);
  }

  void drop_correction_panels() {
    for (const Node& n : heap_) {
      if (n.with_phase) continue;
      total_re_.add(-n.val.re);
      total_im_.add(-n.val.im);
      total_err_.add(-n.e);
    }
    heap_.erase(std::remove_if(heap_.begin(), heap_.end(),
                               [](const Node& n) { return !n.with_phase; }),
                heap_.end());
    std::make_heap(heap_.begin(), heap_.end(), heap_less);
    frozen_corr_re_ = 0.0;
    frozen_corr_im_ = 0.0;
    frozen_corr_err_ = 0.0;
  }

  TruncatedGaussian w_;
  double k_n_;
  double k_phi_;
  VelocityAverageOptions opts_;
  std::vector<Node> heap_;
  num::KahanSum total_re_;
  num::KahanSum total_im_;
  num::KahanSum total_err_;
  double frozen_main_re_ = 0.0;
  double frozen_main_im_ = 0.0;
  double frozen_main_err_ = 0.0;
  double frozen_corr_re_ = 0.0;
  double frozen_corr_im_ = 0.0;
  double frozen_corr_err_ = 0.0;
  double tail_error_ = 0.0;
  double cut_ = 0.0;
  std::size_t evals_ = 0;
};

}  // namespace

double reduction_velocity_averaged(const ExperimentConfig& config,
                                   double sigma_abs_m2,
                                   const VelocityAverageOptions& options) {
  validate(config);
  if (sigma_abs_m2 < 0.0)
    throw std::domain_error(
        "reduction_velocity_averaged: sigma_abs must be >= 0");
  if (!(options.rel_tol > 0.0) || options.refine_factor < 1 ||
      options.max_evals < 64)
    throw std::domain_error("reduction_velocity_averaged: invalid options");

  const auto& laser = config.recoil_laser;
  const double period = config.interferometer.grating_period_m;

  if (const auto* mono =
          std::get_if<MonochromaticVelocity>(&config.velocity)) {
    const double n0 = mean_photon_number(laser, sigma_abs_m2, mono->v0_mps);
    if (n0 == 0.0) return 1.0;
    const double shift = recoil_shift(config.molecule, laser.wavelength_m,
                                      laser.distance_m, mono->v0_mps);
    return reduction_monochromatic(n0, shift, period);
  }

  // n0(v) = k_n / v; fringe phase 2 pi s(v) / d = k_phi / v.
  const double k_n = mean_photon_number(laser, sigma_abs_m2, 1.0);
  if (k_n == 0.0) return 1.0;
  const double k_phi = kTwoPi * constants.planck_h * laser.distance_m /
                       (config.molecule.mass_kg * laser.wavelength_m * period);
  if (k_phi == 0.0) return 1.0;

  const auto& gauss = std::get<GaussianVelocity>(config.velocity);
  DephasingAverager averager(TruncatedGaussian::make(gauss), k_n, k_phi,
                             options);
  return averager.run();
}

}  // namespace recoil
