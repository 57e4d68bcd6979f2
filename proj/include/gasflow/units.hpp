#pragma once

#include <string>

namespace gasflow {

inline constexpr double kPsiToPascal = 6894.757293168361;

/// Shared scales for the network-wide non-dimensionalization.
///
/// Every pipe is measured against the same reference length l, sound speed a
/// and density rho0: time in units of l/a, length in l, density in rho0,
/// mass flux in a*rho0 and pressure in a^2*rho0 (ideal gas, p = a^2 rho).
struct GasConstants {
  double sound_speed = 377.968;      ///< a [m/s]
  double nominal_length = 10.0e3;    ///< l [m]
  double nominal_density = 24.1312;  ///< rho0 [kg/m^3]
  double power_exponent = 0.2857;    ///< compressor power-law exponent m
  double heat_capacity_ratio = 1.4;  ///< gamma (bounds the admissible m)

  double time_scale() const { return nominal_length / sound_speed; }
  double flux_scale() const { return sound_speed * nominal_density; }
  double pressure_scale() const { return sound_speed * sound_speed * nominal_density; }

  /// Throws std::invalid_argument when scales are non-positive or the power
  /// exponent leaves (0, (gamma-1)/gamma).
  void validate() const;
};

enum class Quantity { Time, Length, Density, Flux };

/// Parse one of "time", "length", "density", "flux"; throws on anything else.
Quantity quantity_from_string(const std::string& name);

double nondimensionalize(double value, Quantity kind, const GasConstants& c);
double redimensionalize(double value, Quantity kind, const GasConstants& c);

/// Pressure helpers: p = a^2 rho, psi on the dimensional side.
double rho_nd_from_psi(double psi, const GasConstants& c);
double psi_from_rho_nd(double rho_nd, const GasConstants& c);

}  // namespace gasflow
