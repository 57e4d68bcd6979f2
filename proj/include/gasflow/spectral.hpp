#pragma once

#include <Eigen/Dense>

namespace gasflow {

/// Legendre-Gauss-Lobatto collocation grid of order N on [-1, 1]:
/// the N+1 nodes are the roots of (1-t^2) * dL_N/dt, the weights
/// w_i = 2 / (N (N+1) L_N(t_i)^2) integrate polynomials up to degree 2N-1
/// exactly, and D applies the derivative of the interpolating polynomial at
/// the nodes (row sums vanish; corner entries are -+ N(N+1)/4).
struct LglGrid {
  int order = 0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::MatrixXd D;
};

/// Build the grid; nodes are found by Newton iteration from Chebyshev-Lobatto
/// initial guesses, converged to 1e-14. Requires N >= 1.
LglGrid lgl_grid(int N);

/// Quadrature sum over samples at the nodes.
double quadrature(const LglGrid& grid, const Eigen::VectorXd& samples);

/// Nodal derivative D * samples.
Eigen::VectorXd differentiate(const LglGrid& grid, const Eigen::VectorXd& samples);

/// Value of the degree-N interpolating polynomial at t in [-1, 1]
/// (barycentric form, exact at the nodes).
double interpolate(const LglGrid& grid, const Eigen::VectorXd& samples, double t);

/// Affine map between physical time [0, T] and reference time [-1, 1];
/// the quadrature/derivative Jacobian of the map is T/2.
double to_reference_time(double t, double horizon);
double from_reference_time(double t_ref, double horizon);

/// Legendre polynomial L_N and its derivative at one point (recurrence).
void legendre(int N, double t, double* value, double* derivative);

}  // namespace gasflow
