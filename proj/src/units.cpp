#include "gasflow/units.hpp"

#include <stdexcept>

namespace gasflow {

void GasConstants::validate() const {
  if (sound_speed <= 0.0) throw std::invalid_argument("sound speed must be positive");
  if (nominal_length <= 0.0) throw std::invalid_argument("nominal length must be positive");
  if (nominal_density <= 0.0) throw std::invalid_argument("nominal density must be positive");
  if (heat_capacity_ratio <= 1.0)
    throw std::invalid_argument("heat capacity ratio must exceed 1");
  const double isentropic_cap = (heat_capacity_ratio - 1.0) / heat_capacity_ratio;
  if (power_exponent <= 0.0 || power_exponent > isentropic_cap)
    throw std::invalid_argument("power exponent must lie in (0, (gamma-1)/gamma]");
}

Quantity quantity_from_string(const std::string& name) {
  if (name == "time") return Quantity::Time;
  if (name == "length") return Quantity::Length;
  if (name == "density") return Quantity::Density;
  if (name == "flux") return Quantity::Flux;
  throw std::invalid_argument("unknown quantity kind: " + name);
}

namespace {
double scale_for(Quantity kind, const GasConstants& c) {
  switch (kind) {
    case Quantity::Time: return c.time_scale();
    case Quantity::Length: return c.nominal_length;
    case Quantity::Density: return c.nominal_density;
    case Quantity::Flux: return c.flux_scale();
  }
  throw std::invalid_argument("unknown quantity kind");
}
}  // namespace

double nondimensionalize(double value, Quantity kind, const GasConstants& c) {
  return value / scale_for(kind, c);
}

double redimensionalize(double value, Quantity kind, const GasConstants& c) {
  return value * scale_for(kind, c);
}

double rho_nd_from_psi(double psi, const GasConstants& c) {
  return psi * kPsiToPascal / c.pressure_scale();
}

double psi_from_rho_nd(double rho_nd, const GasConstants& c) {
  return rho_nd * c.pressure_scale() / kPsiToPascal;
}

}  // namespace gasflow
