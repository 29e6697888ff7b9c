#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "recoil/config.hpp"
#include "recoil/config_io.hpp"
#include "recoil/csv.hpp"
#include "recoil/errors.hpp"
#include "recoil/fringe.hpp"
#include "recoil/manifest.hpp"
#include "recoil/montecarlo.hpp"
#include "recoil/physics.hpp"
#include "recoil/sigma.hpp"

namespace {

using nlohmann::ordered_json;

int fail(int code, const char* type, const std::string& message) {
  ordered_json j;
  j["schema"] = "error/v1";
  j["error"]["type"] = type;
  j["error"]["message"] = message;
  std::cerr << j.dump(2) << "\n";
  return code;
}

std::string join_args(int argc, char** argv) {
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd += ' ';
    cmd += argv[i];
  }
  return cmd;
}

ordered_json manifest_json(const recoil::RunManifest& manifest) {
  return ordered_json::parse(recoil::to_json(manifest));
}

recoil::RunManifest make_manifest(const std::string& command,
                                  const recoil::ExperimentConfig* config,
                                  std::vector<std::string> inputs,
                                  std::optional<std::uint64_t> seed = {}) {
  recoil::RunManifest m;
  m.tool_version = recoil::tool_version();
  m.command = command;
  m.timestamp_utc = recoil::current_utc_timestamp();
  m.config_digest =
      config ? recoil::fnv1a_hex(recoil::config_text(*config)) : "";
  m.inputs = std::move(inputs);
  m.seed = seed;
  return m;
}

void emit(const ordered_json& result) { std::cout << result.dump(2) << "\n"; }

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw recoil::DataError("cannot open for writing: " + tmp);
    out << text;
    out.flush();
    if (!out) throw recoil::DataError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw recoil::DataError("cannot replace " + path + ": " +
                            std::strerror(errno));
  }
}

void write_sidecar_manifest(const std::string& out_path,
                            const recoil::RunManifest& manifest) {
  write_text_atomic(out_path + ".manifest.json",
                    recoil::to_json(manifest) + "\n");
}

void print_table(const recoil::csv::Table& table) {
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    std::cout << (i ? "," : "") << table.columns[i];
  std::cout << '\n';
  char buf[32];
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      std::cout << (i ? "," : "") << buf;
    }
    std::cout << '\n';
  }
}

struct PredictArgs {
  std::string config_path, out_path;
  double sigma = 0.0, dmin = 0.0, dmax = 0.0;
  int points = 50;
  bool monochromatic = false;
  std::vector<double> band;
};

int run_predict(const PredictArgs& args, const std::string& command) {
  const auto config = recoil::load_config(args.config_path);
  if (args.points < 1) throw std::domain_error("need at least 1 point");
  if (!(args.dmax >= args.dmin))
    throw std::domain_error("dmax must be >= dmin");

  std::vector<double> grid(static_cast<std::size_t>(args.points));
  for (int i = 0; i < args.points; ++i)
    grid[static_cast<std::size_t>(i)] =
        args.points == 1 ? args.dmin
                         : args.dmin + (args.dmax - args.dmin) *
                                           static_cast<double>(i) /
                                           (args.points - 1);

  recoil::csv::Table table;
  table.columns = {"distance_m", "ratio"};
  const auto ratio = recoil::predict_curve(config, args.sigma, grid);

  std::vector<double> mono;
  if (args.monochromatic) {
    auto mono_config = config;
    mono_config.velocity =
        recoil::MonochromaticVelocity{recoil::central_velocity(config.velocity)};
    mono = recoil::predict_curve(mono_config, args.sigma, grid);
    table.columns.push_back("ratio_mono");
  }
  std::vector<double> band_lo, band_hi;
  if (!args.band.empty()) {
    const auto a = recoil::predict_curve(config, args.band[0], grid);
    const auto b = recoil::predict_curve(config, args.band[1], grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      band_lo.push_back(std::min(a[i], b[i]));
      band_hi.push_back(std::max(a[i], b[i]));
    }
    table.columns.push_back("band_lo");
    table.columns.push_back("band_hi");
  }

  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> row = {grid[i], ratio[i]};
    if (!mono.empty()) row.push_back(mono[i]);
    if (!band_lo.empty()) {
      row.push_back(band_lo[i]);
      row.push_back(band_hi[i]);
    }
    table.rows.push_back(std::move(row));
  }

  if (args.out_path.empty()) {
    print_table(table);
  } else {
    recoil::csv::write_table(args.out_path, table);
    write_sidecar_manifest(args.out_path,
                           make_manifest(command, &config, {args.config_path}));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-recoil dephasing model for matter-wave "
               "interferometry: predicts fringe-visibility reduction and "
               "inverts it to absolute absorption cross sections."};
  app.require_subcommand(1);
  const std::string command = join_args(argc, argv);

  PredictArgs predict_args;
  auto* predict = app.add_subcommand(
      "predict", "Tabulate the modeled visibility ratio against distance");
  predict->add_option("--config", predict_args.config_path, "Experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--sigma", predict_args.sigma,
                      "Absorption cross section in m^2")
      ->required();
  predict->add_option("--dmin", predict_args.dmin, "First distance in m")
      ->required();
  predict->add_option("--dmax", predict_args.dmax, "Last distance in m")
      ->required();
  predict->add_option("--points", predict_args.points, "Grid size")
      ->capture_default_str();
  predict->add_flag("--monochromatic", predict_args.monochromatic,
                    "Add a ratio_mono column for a monochromatic beam at v0");
  predict
      ->add_option("--band", predict_args.band,
                   "Two sigma values bounding an uncertainty band")
      ->expected(2);
  predict->add_option("--out", predict_args.out_path,
                      "Output CSV (default: stdout)");

  std::string fit_config, fit_data;
  double fit_sigma_max = 1e-19, fit_rel_power = 0.0, fit_rel_waist = 0.0;
  auto* fit = app.add_subcommand(
      "fit-sigma", "Fit the absorption cross section to a reduction curve");
  fit->add_option("--config", fit_config, "Experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--data", fit_data, "curve.csv with distance_m,ratio,ratio_err")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--sigma-max", fit_sigma_max, "Search bound in m^2")
      ->capture_default_str();
  fit->add_option("--rel-err-power", fit_rel_power,
                  "Relative systematic on laser power")
      ->capture_default_str();
  fit->add_option("--rel-err-waist", fit_rel_waist,
                  "Relative systematic on the laser waist")
      ->capture_default_str();

  std::string quick_config;
  double quick_ratio = 0.0, quick_distance = 0.0, quick_velocity = 0.0;
  auto* quick = app.add_subcommand(
      "quick-sigma",
      "Single-point cross-section estimate (biased low off the minimum)");
  quick->add_option("--config", quick_config, "Experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  quick->add_option("--ratio", quick_ratio, "Measured visibility ratio")
      ->required();
  quick->add_option("--distance", quick_distance, "Laser distance in m")
      ->required();
  quick->add_option("--velocity", quick_velocity,
                    "Velocity in m/s (default: config v0)");

  std::string vis_config, vis_scan;
  bool vis_free_period = false;
  auto* vis = app.add_subcommand("extract-visibility",
                                 "Fit a sinusoid to a fringe scan");
  vis->add_option("--config", vis_config, "Experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  vis->add_option("--scan", vis_scan, "scan.csv with position_m,counts,dwell_s")
      ->required()
      ->check(CLI::ExistingFile);
  vis->add_flag("--free-period", vis_free_period,
                "Float the fringe period instead of using the grating period");

  std::string off_config, off_data;
  bool off_free_waist = false;
  auto* off = app.add_subcommand(
      "offset-scan", "Fit the laser-offset profile of the visibility ratio");
  off->add_option("--config", off_config, "Experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  off->add_option("--data", off_data, "offsets.csv with offset_m,ratio,ratio_err")
      ->required()
      ->check(CLI::ExistingFile);
  off->add_flag("--free-waist", off_free_waist,
                "Float the beam waist instead of using the config value");

  std::string pow_config, pow_data;
  auto* pow = app.add_subcommand(
      "power-scan", "Fit the linearity of -ln(ratio) against laser power");
  pow->add_option("--config", pow_config, "Experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  pow->add_option("--data", pow_data, "powers.csv with power_w,ratio,ratio_err")
      ->required()
      ->check(CLI::ExistingFile);

  std::string con_data;
  auto* con = app.add_subcommand(
      "constancy", "Weighted-mean constancy test of visibility ratios");
  con->add_option("--data", con_data, "CSV with <abscissa>,ratio,ratio_err")
      ->required()
      ->check(CLI::ExistingFile);

  std::string dmin_config;
  auto* dmin_cmd = app.add_subcommand(
      "dmin", "First visibility minimum distance and revival period");
  dmin_cmd->add_option("--config", dmin_config, "Experiment config")
      ->required()
      ->check(CLI::ExistingFile);

  auto* sim = app.add_subcommand("simulate",
                                 "Generate synthetic datasets with a seeded "
                                 "molecule-ensemble simulation");
  sim->require_subcommand(1);
  std::string sim_config, sim_out;
  double sim_sigma = 0.0, sim_dwell = 1.0;
  std::uint64_t sim_seed = 1;
  long long sim_molecules = 100000;
  int sim_scan_points = 40, sim_repeats = 10;
  for (auto* sub : {sim}) {
    sub->add_option("--config", sim_config, "Experiment config")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--sigma", sim_sigma, "True cross section in m^2")
        ->required();
    sub->add_option("--seed", sim_seed, "RNG seed")->capture_default_str();
    sub->add_option("--out", sim_out, "Output CSV path")->required();
    sub->add_option("--molecules", sim_molecules, "Ensemble size")
        ->capture_default_str();
    sub->add_option("--dwell", sim_dwell, "Dwell time per point in s")
        ->capture_default_str();
  }

  auto* sim_scan = sim->add_subcommand("scan", "One fringe scan (scan.csv)");
  bool sim_perturbed = false;
  std::uint64_t sim_scan_index = 0;
  sim_scan->add_option("--points", sim_scan_points, "Positions per scan")
      ->capture_default_str();
  sim_scan->add_flag("--perturbed", sim_perturbed,
                     "Recoil laser on (default: reference scan)");
  sim_scan->add_option("--scan-index", sim_scan_index,
                       "Index for independent repeat scans")
      ->capture_default_str();

  auto* sim_curve =
      sim->add_subcommand("curve", "Reduction curve (curve.csv)");
  double curve_dmin = 0.0, curve_dmax = 0.0, curve_err = 0.03;
  int curve_points = 10;
  std::string curve_noise = "gaussian";
  sim_curve->add_option("--dmin", curve_dmin, "First distance in m")
      ->required();
  sim_curve->add_option("--dmax", curve_dmax, "Last distance in m")
      ->required();
  sim_curve->add_option("--points", curve_points, "Number of distances")
      ->capture_default_str();
  sim_curve
      ->add_option("--noise", curve_noise,
                   "none (exact model), gaussian (additive), or scans "
                   "(fit simulated fringe-scan pairs)")
      ->check(CLI::IsMember({"none", "gaussian", "scans"}))
      ->capture_default_str();
  sim_curve->add_option("--err", curve_err, "Ratio error bar for none/gaussian")
      ->capture_default_str();
  sim_curve->add_option("--scan-points", sim_scan_points,
                        "Positions per scan in scans mode")
      ->capture_default_str();
  sim_curve->add_option("--repeats", sim_repeats,
                        "Scan pairs per distance in scans mode")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    return fail(1, "usage", e.what());
  }

  try {
    if (*predict) return run_predict(predict_args, command);

    if (*fit) {
      const auto config = recoil::load_config(fit_config);
      recoil::ReductionCurve curve;
      curve.points = recoil::csv::load_ratio_points(fit_data, "distance_m");
      curve.config = config;
      recoil::SigmaFitOptions options;
      options.sigma_max_m2 = fit_sigma_max;
      options.rel_err_power = fit_rel_power;
      options.rel_err_waist = fit_rel_waist;
      const auto result = recoil::fit_sigma(curve, options);
      ordered_json j;
      j["schema"] = "sigma_fit/v1";
      j["sigma_abs_m2"] = result.sigma_abs_m2;
      j["stat_err_lo_m2"] = result.stat_err_lo_m2;
      j["stat_err_hi_m2"] = result.stat_err_hi_m2;
      j["chi2_min"] = result.chi2_min;
      j["dof"] = result.dof;
      j["systematic_err_m2"] = result.systematic_err_m2;
      j["n0_at_max_power"] = result.n0_at_max_power;
      auto trace = ordered_json::array();
      for (const auto& [sigma, chi2] : result.fit_trace)
        trace.push_back({sigma, chi2});
      j["fit_trace"] = std::move(trace);
      j["manifest"] = manifest_json(
          make_manifest(command, &config, {fit_config, fit_data}));
      emit(j);
      return 0;
    }

    if (*quick) {
      const auto config = recoil::load_config(quick_config);
      const double sigma = recoil::quick_sigma(
          config, {quick_distance, quick_ratio, 0.0}, quick_velocity);
      const double d_first = recoil::first_minimum_distance(
          config.interferometer, config.molecule,
          config.recoil_laser.wavelength_m,
          recoil::central_velocity(config.velocity));
      ordered_json j;
      j["schema"] = "quick_sigma/v1";
      j["sigma_abs_m2"] = sigma;
      j["ratio"] = quick_ratio;
      j["distance_m"] = quick_distance;
      j["d_min_m"] = d_first;
      j["bias_warning"] =
          "single-point inversion assumes a monochromatic beam at the first "
          "visibility minimum; away from d_min_m and for thermal beams it "
          "underestimates the cross section, typically by 10-20%";
      j["manifest"] =
          manifest_json(make_manifest(command, &config, {quick_config}));
      emit(j);
      return 0;
    }

    if (*vis) {
      const auto config = recoil::load_config(vis_config);
      const auto scan = recoil::csv::load_fringe_scan(vis_scan);
      const auto result = recoil::extract_visibility(
          scan, config.interferometer.grating_period_m,
          vis_free_period ? recoil::PeriodMode::Free
                          : recoil::PeriodMode::Fixed);
      ordered_json j;
      j["schema"] = "visibility/v1";
      j["mean_rate_hz"] = result.mean_rate_hz;
      j["amplitude_hz"] = result.amplitude_hz;
      j["phase_rad"] = result.phase_rad;
      j["visibility"] = result.visibility;
      j["visibility_err"] = result.visibility_err;
      j["chi2"] = result.chi2;
      j["dof"] = result.dof;
      j["period_m"] = result.period_m;
      j["manifest"] = manifest_json(
          make_manifest(command, &config, {vis_config, vis_scan}));
      emit(j);
      return 0;
    }

    if (*off) {
      const auto config = recoil::load_config(off_config);
      const auto points = recoil::csv::load_ratio_points(off_data, "offset_m");
      const auto result = recoil::fit_offset_profile(
          points, config.recoil_laser.waist_y_m,
          off_free_waist ? recoil::WaistMode::Free : recoil::WaistMode::Fixed);
      ordered_json j;
      j["schema"] = "offset_fit/v1";
      j["center_m"] = result.center_m;
      j["depth"] = result.depth;
      j["waist_m"] = result.waist_m;
      j["chi2"] = result.chi2;
      j["dof"] = result.dof;
      j["manifest"] = manifest_json(
          make_manifest(command, &config, {off_config, off_data}));
      emit(j);
      return 0;
    }

    if (*pow) {
      const auto config = recoil::load_config(pow_config);
      const auto points = recoil::csv::load_ratio_points(pow_data, "power_w");
      const auto result = recoil::fit_power_linearity(points);
      ordered_json j;
      j["schema"] = "power_fit/v1";
      j["slope_per_w"] = result.slope_per_w;
      j["intercept"] = result.intercept;
      j["chi2"] = result.chi2;
      j["dof"] = result.dof;
      j["max_minus_log"] = result.max_minus_log;
      j["rejected_points"] = result.rejected_points;
      j["manifest"] = manifest_json(
          make_manifest(command, &config, {pow_config, pow_data}));
      emit(j);
      return 0;
    }

    if (*con) {
      const auto points = recoil::csv::load_ratio_points(con_data, "");
      const auto result = recoil::constancy_check(points);
      ordered_json j;
      j["schema"] = "constancy/v1";
      j["weighted_mean"] = result.weighted_mean;
      j["mean_err"] = result.mean_err;
      j["chi2"] = result.chi2;
      j["dof"] = result.dof;
      j["consistent_95"] = result.consistent_95;
      j["manifest"] = manifest_json(make_manifest(command, nullptr, {con_data}));
      emit(j);
      return 0;
    }

    if (*dmin_cmd) {
      const auto config = recoil::load_config(dmin_config);
      const double v0 = recoil::central_velocity(config.velocity);
      ordered_json j;
      j["schema"] = "dmin/v1";
      j["d_min_m"] = recoil::first_minimum_distance(
          config.interferometer, config.molecule,
          config.recoil_laser.wavelength_m, v0);
      j["revival_period_m"] = recoil::revival_period(
          config.interferometer, config.molecule,
          config.recoil_laser.wavelength_m, v0);
      j["manifest"] =
          manifest_json(make_manifest(command, &config, {dmin_config}));
      emit(j);
      return 0;
    }

    if (*sim) {
      const auto config = recoil::load_config(sim_config);
      recoil::mc::SimulationConfig sc;
      sc.experiment = config;
      sc.true_sigma_m2 = sim_sigma;
      sc.n_molecules = sim_molecules;
      sc.rng_seed = sim_seed;
      sc.points_per_scan = sim_scan_points;
      sc.dwell_s = sim_dwell;
      sc.repeats = sim_repeats;
      if (*sim_scan) {
        const auto scan =
            recoil::mc::simulate_fringe_scan(sc, sim_perturbed, sim_scan_index);
        recoil::csv::save_fringe_scan(sim_out, scan);
      } else {
        if (curve_points < 1)
          throw std::domain_error("need at least 1 point");
        if (!(curve_dmax >= curve_dmin))
          throw std::domain_error("dmax must be >= dmin");
        std::vector<double> grid(static_cast<std::size_t>(curve_points));
        for (int i = 0; i < curve_points; ++i)
          grid[static_cast<std::size_t>(i)] =
              curve_points == 1 ? curve_dmin
                                : curve_dmin + (curve_dmax - curve_dmin) *
                                                   static_cast<double>(i) /
                                                   (curve_points - 1);
        recoil::mc::NoiseModel noise = recoil::mc::GaussianRatio{curve_err};
        if (curve_noise == "none") noise = recoil::mc::Noiseless{curve_err};
        if (curve_noise == "scans") noise = recoil::mc::FullScans{};
        const auto curve =
            recoil::mc::simulate_reduction_curve(sc, grid, noise);
        recoil::csv::save_ratio_points(sim_out, curve.points, "distance_m");
      }
      write_sidecar_manifest(
          sim_out, make_manifest(command, &config, {sim_config}, sim_seed));
      return 0;
    }
  } catch (const recoil::ConfigError& e) {
    return fail(2, "config", e.what());
  } catch (const recoil::DataError& e) {
    return fail(2, "data", e.what());
  } catch (const std::domain_error& e) {
    return fail(2, "domain", e.what());
  } catch (const recoil::QuadratureError& e) {
    return fail(3, "quadrature", e.what());
  } catch (const recoil::FitError& e) {
    return fail(3, "fit", e.what());
  } catch (const std::exception& e) {
    return fail(3, "internal", e.what());
  }
  return fail(1, "usage", "no subcommand given");
}
