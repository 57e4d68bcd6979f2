#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <mutex>
#include <utility>

#include "gasflow/matrices.hpp"

namespace gasflow {

/// Differential state of the reduced network: densities at demand vertices
/// (order of demand_vertices) and one mass flux per edge.
struct RnfState {
  Eigen::VectorXd rho;
  Eigen::VectorXd phi;
};

/// Boundary data at one instant: slack densities s with time derivatives,
/// demand withdrawals d (flux units, positive = consumption) and compression
/// ratios alpha. All non-dimensional.
struct BoundaryInput {
  Eigen::VectorXd s;
  Eigen::VectorXd s_dot;
  Eigen::VectorXd d;
  Eigen::VectorXd alpha;
};

/// Evaluator for the reduced flow dynamics
///   W(alpha) rho_dot = 4 (A_d phi - d) - |A_d| Lambda |B_s^T| s_dot
///   phi_dot = -Lambda^{-1} (B_s^T s + B_d^T rho) - K g(phi, |B_s^T| s + |B_d^T| rho)
/// with g_j(x, y) = x_j |x_j| / y_j and W = |A_d| Lambda |B_d^T|.
///
/// The factorization of W is cached keyed by alpha behind a mutex-guarded
/// shared_ptr swap, so concurrent rhs calls with different alpha are safe:
/// each call pins the factorization it uses before releasing the lock.
class RnfOde {
 public:
  explicit RnfOde(const NetworkMatrices& mats) : m_(mats) {}

  /// Throws StateDomainError when any density denominator
  /// (|B_s^T| s + |B_d^T| rho)_j falls below 1e-9.
  void rhs(const RnfState& state, const BoundaryInput& input,
           Eigen::VectorXd* rho_dot, Eigen::VectorXd* phi_dot) const;

  /// Dense Jacobian of the rhs with respect to (rho, phi), rho block first.
  Eigen::MatrixXd state_jacobian(const RnfState& state, const BoundaryInput& input) const;

  const NetworkMatrices& matrices() const { return m_; }

 private:
  struct WFactor;
  std::shared_ptr<const WFactor> w_factor(const Eigen::VectorXd& alpha) const;

  const NetworkMatrices& m_;
  mutable std::mutex cache_mutex_;
  mutable std::shared_ptr<const WFactor> cache_;
};

/// One-shot convenience wrapper around RnfOde::rhs.
RnfState rhs(const RnfState& state, const BoundaryInput& input, const NetworkMatrices& mats);

/// Solve the steady flow equations A_d phi = d together with the per-edge
/// momentum balance Lambda K phi|phi| = -(B^T rho^N) o (|B^T| rho^N) by
/// damped Newton on the coupled (rho, phi) system. s_dot is ignored.
/// Throws NoSteadyStateError when Newton fails to reach 1e-10.
RnfState steady_state(const NetworkMatrices& mats, const BoundaryInput& input);

/// Per-edge inlet/outlet densities rho^0 = alpha_from * rho^N_from,
/// rho^L = alpha_to * rho^N_to.
std::pair<Eigen::VectorXd, Eigen::VectorXd> endpoint_densities(
    const RnfState& state, const BoundaryInput& input, const NetworkMatrices& mats);

/// Per-edge endpoint fluxes: phi_minus = -1/4 Lambda (|B_s^T| s_dot + |B_d^T| rho_dot),
/// phi^0 = phi - phi_minus, phi^L = phi + phi_minus. Returns (phi^0, phi^L).
std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_endpoint_fluxes(
    const RnfState& state, const Eigen::VectorXd& rho_dot, const BoundaryInput& input,
    const NetworkMatrices& mats);

/// Line-pack: 1/2 * sum_k Lambda_k (rho^0_k + rho^L_k).
double total_mass(const RnfState& state, const BoundaryInput& input,
                  const NetworkMatrices& mats);

}  // namespace gasflow
