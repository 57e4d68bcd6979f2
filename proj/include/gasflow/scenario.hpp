#pragma once

#include <map>
#include <string>
#include <vector>

#include "gasflow/matrices.hpp"
#include "gasflow/rnf.hpp"

namespace gasflow {

/// Smooth scalar function of time: a constant, or a cubic spline through
/// breakpoints with natural or periodic end conditions. Natural splines hold
/// their endpoint value (zero slope) outside the breakpoint range; periodic
/// splines wrap modulo the period and require matching first/last values.
class Profile {
 public:
  Profile() = default;

  static Profile constant(double value);
  static Profile spline(std::vector<double> times, std::vector<double> values);
  static Profile periodic_spline(std::vector<double> times, std::vector<double> values);

  double value(double t) const;
  double derivative(double t) const;

  bool is_constant() const { return kind_ == Kind::Constant; }

 private:
  enum class Kind { Constant, Natural, Periodic };

  static Profile build(Kind kind, std::vector<double> times, std::vector<double> values);
  int segment(double t) const;
  double wrap(double t) const;

  Kind kind_ = Kind::Constant;
  double constant_ = 0.0;
  std::vector<double> times_;
  std::vector<double> values_;
  std::vector<double> second_;  ///< spline second derivatives at the breakpoints
};

/// Time-dependent boundary data for one network, keyed by element id. All
/// values are non-dimensional: supply profiles give slack densities,
/// withdrawal profiles give demand fluxes (positive = consumption), control
/// profiles give compression ratios. Missing withdrawals default to zero and
/// missing controls to ratio one; every slack node needs a supply profile.
struct Scenario {
  double horizon = 0.0;  ///< non-dimensional duration, simulated as [0, horizon]
  std::map<std::string, Profile> withdrawal;
  std::map<std::string, Profile> supply;
  std::map<std::string, Profile> control;
};

/// A scenario resolved against a refined network: profiles are re-keyed by
/// slack/demand ordinal and compressor position so evaluation is index-based.
/// Construction validates ids and throws ValidationError on unknown names or
/// a missing slack supply. Compression ratios are clamped into
/// [1, alpha_max], so mild spline overshoot cannot leave the model's domain.
class BoundScenario {
 public:
  BoundScenario(const Scenario& scenario, const RefinedNetwork& net,
                const NetworkMatrices& mats);

  BoundaryInput operator()(double t) const;
  double horizon() const { return horizon_; }

 private:
  double horizon_ = 0.0;
  std::vector<Profile> supply_;      ///< per slack ordinal
  std::vector<Profile> withdrawal_;  ///< per demand ordinal
  std::vector<Profile> control_;     ///< per compressor
  std::vector<double> alpha_max_;
};

}  // namespace gasflow
