#pragma once

namespace recoil {

/// Fundamental constants used by the recoil model, SI units.
struct PhysicalConstants {
  double planck_h;          ///< J s
  double light_speed_c;     ///< m/s
  double atomic_mass_unit;  ///< kg
};

/// CODATA values. h and c are exact by SI definition; the unified atomic
/// mass unit is the CODATA 2022 recommended value.
inline constexpr PhysicalConstants constants{
    6.62607015e-34,
    299792458.0,
    1.66053906892e-27,
};

}  // namespace recoil
