#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "recoil/config_io.hpp"
#include "recoil/constants.hpp"
#include "recoil/csv.hpp"
#include "recoil/errors.hpp"
#include "recoil/manifest.hpp"
#include "support.hpp"

using namespace recoil;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           fs::path("recoil-io-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static inline int counter = 0;
};

const std::string kValidConfig = R"([molecule]
name = C70
mass_amu = 840.0

[recoil_laser]
wavelength_nm = 532.2
power_w = 17.4
waist_y_mm = 1.23
waist_x_mm = 1.23
distance_cm = 3.5
offset_y_mm = 0.0

[interferometer]
grating_period_nm = 266
grating_separation_cm = 10.5
grating_laser_wavelength_nm = 532
grating_laser_power_w = 1.0

[velocity]
model = gaussian
v0_mps = 210.3
sigma_mps = 38.4

[baseline]
visibility = 0.15
mean_rate_hz = 300
)";

std::string patched(const std::string& from, const std::string& to) {
  std::string text = kValidConfig;
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  text.replace(at, from.size(), to);
  return text;
}

}  // namespace

TEST_CASE("configuration files parse with unit conversion") {
  const auto cfg = load_config(testsup::fixture("c70_reference.cfg"));
  CHECK(cfg.molecule.name == "C70");
  CHECK(cfg.molecule.mass_kg == 840.0 * constants.atomic_mass_unit);
  CHECK(cfg.recoil_laser.wavelength_m == doctest::Approx(532.2e-9).epsilon(1e-15));
  CHECK(cfg.recoil_laser.power_w == 17.4);
  CHECK(cfg.recoil_laser.waist_y_m == doctest::Approx(1.23e-3).epsilon(1e-15));
  CHECK(cfg.recoil_laser.waist_x_m == doctest::Approx(1.23e-3).epsilon(1e-15));
  CHECK(cfg.recoil_laser.distance_m == doctest::Approx(0.035).epsilon(1e-15));
  CHECK(cfg.recoil_laser.offset_y_m == 0.0);
  CHECK(cfg.interferometer.grating_period_m ==
        doctest::Approx(266e-9).epsilon(1e-15));
  CHECK(cfg.interferometer.grating_separation_m ==
        doctest::Approx(0.105).epsilon(1e-15));
  const auto* g = std::get_if<GaussianVelocity>(&cfg.velocity);
  REQUIRE(g != nullptr);
  CHECK(g->v0_mps == 210.3);
  CHECK(g->sigma_mps == 38.4);
  CHECK(cfg.baseline_visibility == 0.15);
  CHECK(cfg.baseline_mean_rate_hz == 300.0);
}

TEST_CASE("canonical save/load round trip is bit-exact") {
  TempDir dir;
  const auto cfg = load_config(testsup::fixture("c70_reference.cfg"));
  save_config(dir.file("canon.cfg"), cfg);
  const auto back = load_config(dir.file("canon.cfg"));

  CHECK(back.molecule.name == cfg.molecule.name);
  CHECK(back.molecule.mass_kg == cfg.molecule.mass_kg);
  CHECK(back.recoil_laser.wavelength_m == cfg.recoil_laser.wavelength_m);
  CHECK(back.recoil_laser.power_w == cfg.recoil_laser.power_w);
  CHECK(back.recoil_laser.waist_y_m == cfg.recoil_laser.waist_y_m);
  CHECK(back.recoil_laser.waist_x_m == cfg.recoil_laser.waist_x_m);
  CHECK(back.recoil_laser.distance_m == cfg.recoil_laser.distance_m);
  CHECK(back.recoil_laser.offset_y_m == cfg.recoil_laser.offset_y_m);
  CHECK(back.interferometer.grating_period_m ==
        cfg.interferometer.grating_period_m);
  CHECK(back.interferometer.grating_separation_m ==
        cfg.interferometer.grating_separation_m);
  CHECK(back.interferometer.grating_laser_wavelength_m ==
        cfg.interferometer.grating_laser_wavelength_m);
  CHECK(back.interferometer.grating_laser_power_w ==
        cfg.interferometer.grating_laser_power_w);
  REQUIRE(std::holds_alternative<GaussianVelocity>(back.velocity));
  CHECK(std::get<GaussianVelocity>(back.velocity).v0_mps ==
        std::get<GaussianVelocity>(cfg.velocity).v0_mps);
  CHECK(std::get<GaussianVelocity>(back.velocity).sigma_mps ==
        std::get<GaussianVelocity>(cfg.velocity).sigma_mps);
  CHECK(back.baseline_visibility == cfg.baseline_visibility);
  CHECK(back.baseline_mean_rate_hz == cfg.baseline_mean_rate_hz);

  // The canonical text is a fixed point of save -> load -> render.
  CHECK(config_text(back) == config_text(cfg));
  CHECK_FALSE(fs::exists(dir.file("canon.cfg") + ".tmp"));

  // Monochromatic configs keep their variant through the round trip.
  ExperimentConfig mono = cfg;
  mono.velocity = MonochromaticVelocity{210.3};
  save_config(dir.file("mono.cfg"), mono);
  CHECK(std::holds_alternative<MonochromaticVelocity>(
      load_config(dir.file("mono.cfg")).velocity));
}

TEST_CASE("configuration errors carry file and line context") {
  TempDir dir;
  const std::string path = dir.file("bad.cfg");
  auto expect_error = [&](const std::string& text,
                          const std::string& fragment) {
    testsup::write_file(path, text);
    try {
      load_config(path);
      FAIL_CHECK("expected ConfigError for fragment: " << fragment);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
      CHECK(e.file == path);
    }
  };

  SUBCASE("unknown key names its line") {
    testsup::write_file(path,
                        patched("power_w = 17.4", "power_w = 17.4\nbogus = 1"));
    try {
      load_config(path);
      FAIL_CHECK("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("bogus") != std::string::npos);
      CHECK(e.line == 8);
      CHECK(std::string(e.what()).find(":8:") != std::string::npos);
    }
  }
  SUBCASE("missing key") {
    expect_error(patched("power_w = 17.4\n", ""),
                 "missing key recoil_laser.power");
  }
  SUBCASE("wrong unit family") {
    expect_error(patched("mass_amu", "mass_nm"), "no valid unit for mass");
  }
  SUBCASE("duplicate key in different units") {
    expect_error(patched("distance_cm = 3.5",
                         "distance_cm = 3.5\ndistance_m = 0.035"),
                 "duplicate key");
  }
  SUBCASE("duplicate literal key") {
    expect_error(patched("power_w = 17.4", "power_w = 17.4\npower_w = 2"),
                 "duplicate key 'power_w'");
  }
  SUBCASE("validation failures name the field") {
    expect_error(patched("waist_y_mm = 1.23", "waist_y_mm = 0.0"), "waist");
    expect_error(patched("distance_cm = 3.5", "distance_cm = 10.5"),
                 "distance");
  }
  SUBCASE("sigma rejected for a monochromatic model") {
    expect_error(patched("model = gaussian", "model = monochromatic"),
                 "monochromatic");
  }
  SUBCASE("gaussian model requires sigma") {
    expect_error(patched("sigma_mps = 38.4\n", ""), "velocity.sigma");
  }
  SUBCASE("unknown model") {
    expect_error(patched("model = gaussian", "model = thermal"),
                 "gaussian or monochromatic");
  }
  SUBCASE("malformed line") {
    expect_error(patched("power_w = 17.4", "power_w 17.4"),
                 "expected 'key = value'");
  }
  SUBCASE("garbage value") {
    expect_error(patched("power_w = 17.4", "power_w = twelve"),
                 "not a number");
  }
  SUBCASE("key outside any section") {
    expect_error("stray = 1\n" + kValidConfig, "outside any [section]");
  }
  SUBCASE("unknown section") {
    expect_error(kValidConfig + "\n[detector]\ngain = 2\n",
                 "unknown section");
  }
  SUBCASE("nonexistent file") {
    CHECK_THROWS_AS(load_config(dir.file("missing.cfg")), ConfigError);
  }
}

TEST_CASE("csv tables round trip doubles bit-exactly") {
  TempDir dir;
  const std::string path = dir.file("table.csv");
  csv::Table table;
  table.columns = {"distance_m", "ratio", "ratio_err"};
  table.rows = {{1.0 / 3.0, 1e-300, 0.03},
                {6.02214076e23, -0.0, 1.7976931348623157e308},
                {0.1 + 0.2, 5e-324, 1.0}};
  csv::write_table(path, table);
  const auto back = csv::read_table(path, table.columns);
  REQUIRE(back.rows.size() == table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(back.rows[r][c] == table.rows[r][c]);
      CHECK(std::signbit(back.rows[r][c]) == std::signbit(table.rows[r][c]));
    }
  CHECK_FALSE(fs::exists(path + ".tmp"));

  SUBCASE("comments and blank lines are skipped") {
    testsup::write_file(path,
                        "# leading comment\n\ndistance_m,ratio,ratio_err\n"
                        "# mid comment\n0.035, 0.61, 0.03\n\n");
    const auto t = csv::read_table(path, {"distance_m", "ratio", "ratio_err"});
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == 0.035);
  }
  SUBCASE("header mismatch names the file") {
    try {
      csv::read_table(path, {"power_w", "ratio", "ratio_err"});
      FAIL_CHECK("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(path) != std::string::npos);
    }
  }
  SUBCASE("malformed number carries its line") {
    testsup::write_file(path, "distance_m,ratio,ratio_err\n0.035,x,0.03\n");
    try {
      csv::read_table(path, {"distance_m", "ratio", "ratio_err"});
      FAIL_CHECK("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("wrong field count") {
    testsup::write_file(path, "distance_m,ratio,ratio_err\n0.035,0.6\n");
    CHECK_THROWS_AS(csv::read_table(path, {"distance_m", "ratio", "ratio_err"}),
                    DataError);
  }
}

TEST_CASE("fringe scan files") {
  TempDir dir;
  const std::string path = dir.file("scan.csv");
  FringeScan scan;
  scan.dwell_s = 2.5;
  for (int i = 0; i < 12; ++i) {
    scan.positions_m.push_back(266e-9 * i / 6.0);
    scan.counts.push_back(700 + 13 * i);
  }
  csv::save_fringe_scan(path, scan);
  const auto back = csv::load_fringe_scan(path);
  CHECK(back.positions_m == scan.positions_m);
  CHECK(back.counts == scan.counts);
  CHECK(back.dwell_s == scan.dwell_s);

  SUBCASE("counts must be non-negative integers") {
    testsup::write_file(path,
                        "position_m,counts,dwell_s\n0.0,12.5,1.0\n");
    CHECK_THROWS_AS(csv::load_fringe_scan(path), DataError);
    testsup::write_file(path, "position_m,counts,dwell_s\n0.0,-3,1.0\n");
    CHECK_THROWS_AS(csv::load_fringe_scan(path), DataError);
  }
  SUBCASE("dwell must be constant") {
    testsup::write_file(
        path, "position_m,counts,dwell_s\n0.0,10,1.0\n1e-8,11,2.0\n");
    CHECK_THROWS_AS(csv::load_fringe_scan(path), DataError);
  }
}

TEST_CASE("ratio point files accept the three abscissa schemas") {
  TempDir dir;
  const std::vector<RatioPoint> points = {{0.035, 0.61, 0.03},
                                          {0.045, 0.74, 0.03}};
  for (const std::string column : {"distance_m", "offset_m", "power_w"}) {
    const std::string path = dir.file(column + ".csv");
    csv::save_ratio_points(path, points, column);
    const auto strict = csv::load_ratio_points(path, column);
    const auto lax = csv::load_ratio_points(path, "");
    REQUIRE(strict.size() == 2);
    CHECK(strict[0].abscissa == points[0].abscissa);
    CHECK(strict[1].ratio == points[1].ratio);
    CHECK(lax[1].ratio_err == points[1].ratio_err);
    // A mismatched expectation is rejected.
    const std::string other = column == "power_w" ? "distance_m" : "power_w";
    CHECK_THROWS_AS(csv::load_ratio_points(path, other), DataError);
  }
  testsup::write_file(dir.file("odd.csv"), "angle_rad,ratio,ratio_err\n");
  CHECK_THROWS_AS(csv::load_ratio_points(dir.file("odd.csv"), ""), DataError);
}

TEST_CASE("run manifests") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");

  const auto stamp = current_utc_timestamp();
  CHECK(stamp.size() == 20);
  CHECK(stamp.back() == 'Z');
  CHECK(stamp[4] == '-');
  CHECK(stamp[10] == 'T');

  RunManifest manifest;
  manifest.tool_version = tool_version();
  manifest.command = "recoil-sigma dmin --config c70_reference.cfg";
  manifest.timestamp_utc = stamp;
  manifest.config_digest = fnv1a_hex("x");
  manifest.inputs = {"c70_reference.cfg"};

  auto parsed = nlohmann::json::parse(to_json(manifest));
  CHECK(testsup::validate_against_schema(parsed, "manifest.schema.json")
            .empty());
  CHECK(parsed["seed"].is_null());
  CHECK(parsed["tool_version"] == "recoil-sigma 1.0.0");

  manifest.seed = 42;
  parsed = nlohmann::json::parse(to_json(manifest));
  CHECK(testsup::validate_against_schema(parsed, "manifest.schema.json")
            .empty());
  CHECK(parsed["seed"] == 42);

  // The digest is over the canonical config text, so unit spellings in the
  // source file do not change it.
  const auto cfg = load_config(testsup::fixture("c70_reference.cfg"));
  TempDir dir;
  save_config(dir.file("respelled.cfg"), cfg);
  CHECK(fnv1a_hex(config_text(load_config(dir.file("respelled.cfg")))) ==
        fnv1a_hex(config_text(cfg)));
}
