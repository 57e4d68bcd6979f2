#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "gasflow/rnf.hpp"
#include "gasflow/scenario.hpp"

namespace gasflow {

/// Boundary data as a function of non-dimensional time.
using BoundaryFn = std::function<BoundaryInput(double)>;

struct IntegratorOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  double initial_step = 0.0;  ///< 0 = pick from the interval
  double min_step = 1e-10;
  double max_step = 0.0;  ///< 0 = interval / 8
  int max_steps = 200000;
  int max_newton = 8;
  int num_samples = 201;  ///< uniform dense-output samples across the interval
};

/// One node whose density left its bounds somewhere along the trajectory.
struct BoundViolation {
  std::string node;
  double first_time = 0.0;  ///< first sample at which the bound is crossed
  double worst_value = 0.0;
  double bound = 0.0;
  bool below = false;  ///< true: under rho_min, false: over rho_max
};

struct SimulationResult {
  Eigen::VectorXd times;    ///< uniform sample times
  Eigen::MatrixXd density;  ///< num_demand x num_samples
  Eigen::MatrixXd flux;     ///< num_edges x num_samples
  std::vector<double> knots;  ///< accepted step boundaries
  RnfState final_state;

  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t jacobians = 0;
  std::size_t newton_iterations = 0;
  std::size_t rhs_evaluations = 0;

  std::vector<BoundViolation> violations;
  double mass_initial = 0.0;
  double mass_final = 0.0;
};

/// Integrate the reduced flow dynamics over [t0, t1] with the one-step
/// trapezoidal/BDF2 pair (L-stable companion stage, embedded third-order
/// error estimate, modified Newton on a cached Jacobian). Dense output is
/// cubic Hermite on the accepted steps. Density bound violations are
/// recorded per node, not raised. Throws IntegrationError when the step
/// size collapses or the step budget is exhausted.
SimulationResult simulate(const RnfOde& ode, const RnfState& initial,
                          const BoundaryFn& boundary, double t0, double t1,
                          const IntegratorOptions& opts = {});

/// Convenience overload: simulate a bound scenario over [0, horizon].
SimulationResult simulate(const RnfOde& ode, const RnfState& initial,
                          const BoundScenario& scenario,
                          const IntegratorOptions& opts = {});

/// Spatial self-consistency study: refine every pipe into `level` segments
/// per entry of `levels` (doubling levels recommended), simulate the same
/// scenario from its own steady start, and measure the time-L2 distance of
/// densities at the original demand nodes between consecutive refinements.
struct ConsistencyStudy {
  std::vector<int> levels;
  std::vector<double> segment_max;   ///< metres, per level
  std::vector<double> distances;     ///< between consecutive levels
  std::vector<double> ratios;        ///< distances[i] / distances[i+1]
};

ConsistencyStudy consistency_study(const GasNetwork& base, const Scenario& scenario,
                                   const std::vector<int>& levels,
                                   const IntegratorOptions& opts = {});

}  // namespace gasflow
