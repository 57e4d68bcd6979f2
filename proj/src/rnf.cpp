#include "gasflow/rnf.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>

#include "gasflow/errors.hpp"

namespace gasflow {

namespace {
constexpr double kMinDenominator = 1e-9;

/// Density at a vertex, read from s (slack) or rho (demand).
inline double vertex_density(int vertex, const NetworkMatrices& m,
                             const Eigen::VectorXd& s, const Eigen::VectorXd& rho) {
  const int d = m.demand_ordinal[vertex];
  return d >= 0 ? rho[d] : s[m.slack_ordinal[vertex]];
}

void check_sizes(const RnfState& st, const BoundaryInput& in, const NetworkMatrices& m) {
  if (st.rho.size() != m.num_demand || st.phi.size() != m.num_edges ||
      in.s.size() != m.num_slack || in.d.size() != m.num_demand ||
      in.alpha.size() != m.num_compressors())
    throw std::invalid_argument("state/input dimensions do not match network");
}
}  // namespace

struct RnfOde::WFactor {
  Eigen::VectorXd alpha;
  Eigen::SparseMatrix<double> W;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
};

std::shared_ptr<const RnfOde::WFactor> RnfOde::w_factor(const Eigen::VectorXd& alpha) const {
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (cache_ && cache_->alpha.size() == alpha.size() && cache_->alpha == alpha)
      return cache_;
  }
  auto f = std::make_shared<WFactor>();
  f->alpha = alpha;

  // W = |A_d| Lambda |B_d^T|: every edge couples its demand endpoints, the
  // column weight carrying the compression ratio of the column's end.
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < m_.num_edges; ++k) {
    const int du = m_.demand_ordinal[m_.edge_from[k]];
    const int dv = m_.demand_ordinal[m_.edge_to[k]];
    const double au = m_.alpha_at_from(k, alpha) * m_.lambda[k];
    const double av = m_.alpha_at_to(k, alpha) * m_.lambda[k];
    if (du >= 0) {
      trip.emplace_back(du, du, au);
      if (dv >= 0) trip.emplace_back(du, dv, av);
    }
    if (dv >= 0) {
      trip.emplace_back(dv, dv, av);
      if (du >= 0) trip.emplace_back(dv, du, au);
    }
  }
  f->W.resize(m_.num_demand, m_.num_demand);
  f->W.setFromTriplets(trip.begin(), trip.end());
  f->lu.compute(f->W);
  if (f->lu.info() != Eigen::Success)
    throw StateDomainError("singular demand-coupling matrix W(alpha)");

  std::lock_guard<std::mutex> lock(cache_mutex_);
  cache_ = f;
  return cache_;
}

void RnfOde::rhs(const RnfState& state, const BoundaryInput& input,
                 Eigen::VectorXd* rho_dot, Eigen::VectorXd* phi_dot) const {
  check_sizes(state, input, m_);
  const int E = m_.num_edges, M = m_.num_demand;

  Eigen::VectorXd pdot(E);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(M);
  for (int k = 0; k < E; ++k) {
    const int u = m_.edge_from[k], v = m_.edge_to[k];
    const double au = m_.alpha_at_from(k, input.alpha);
    const double av = m_.alpha_at_to(k, input.alpha);
    const double ru = vertex_density(u, m_, input.s, state.rho);
    const double rv = vertex_density(v, m_, input.s, state.rho);
    const double y = au * ru + av * rv;   // (|B^T| rho^N)_k
    const double z = -au * ru + av * rv;  // (B^T rho^N)_k
    if (y < kMinDenominator)
      throw StateDomainError("density denominator collapsed on edge " + std::to_string(k));
    pdot[k] = -z / m_.lambda[k] - m_.kappa[k] * state.phi[k] * std::abs(state.phi[k]) / y;

    // |A_d| Lambda |B_s^T| s_dot: slack ends feed the demand rows of the edge.
    double sterm = 0.0;
    if (m_.slack_ordinal[u] >= 0) sterm += au * input.s_dot[m_.slack_ordinal[u]];
    if (m_.slack_ordinal[v] >= 0) sterm += av * input.s_dot[m_.slack_ordinal[v]];
    if (sterm != 0.0) {
      const int du = m_.demand_ordinal[u], dv = m_.demand_ordinal[v];
      if (du >= 0) b[du] -= m_.lambda[k] * sterm;
      if (dv >= 0) b[dv] -= m_.lambda[k] * sterm;
    }
  }
  b += 4.0 * (m_.A_d * state.phi - input.d);

  auto f = w_factor(input.alpha);
  if (rho_dot) *rho_dot = f->lu.solve(b);
  if (phi_dot) *phi_dot = std::move(pdot);
}

Eigen::MatrixXd RnfOde::state_jacobian(const RnfState& state, const BoundaryInput& input) const {
  check_sizes(state, input, m_);
  const int E = m_.num_edges, M = m_.num_demand;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(M + E, M + E);

  // d(rho_dot)/d(phi) = 4 W^{-1} A_d; the rho block is zero. The solve must
  // land in a contiguous temporary: SparseLU cannot write into a block.
  auto f = w_factor(input.alpha);
  Eigen::MatrixXd rhs_cols = 4.0 * Eigen::MatrixXd(m_.A_d);
  Eigen::MatrixXd rho_by_phi = f->lu.solve(rhs_cols);
  J.block(0, M, M, E) = rho_by_phi;

  for (int k = 0; k < E; ++k) {
    const int u = m_.edge_from[k], v = m_.edge_to[k];
    const double au = m_.alpha_at_from(k, input.alpha);
    const double av = m_.alpha_at_to(k, input.alpha);
    const double ru = vertex_density(u, m_, input.s, state.rho);
    const double rv = vertex_density(v, m_, input.s, state.rho);
    const double y = au * ru + av * rv;
    if (y < kMinDenominator)
      throw StateDomainError("density denominator collapsed on edge " + std::to_string(k));
    const double drag = m_.kappa[k] * state.phi[k] * std::abs(state.phi[k]) / (y * y);
    const int du = m_.demand_ordinal[u], dv = m_.demand_ordinal[v];
    if (du >= 0) J(M + k, du) = au / m_.lambda[k] + au * drag;
    if (dv >= 0) J(M + k, dv) = -av / m_.lambda[k] + av * drag;
    J(M + k, M + k) = -2.0 * m_.kappa[k] * std::abs(state.phi[k]) / y;
  }
  return J;
}

RnfState rhs(const RnfState& state, const BoundaryInput& input, const NetworkMatrices& mats) {
  RnfOde ode(mats);
  RnfState out;
  ode.rhs(state, input, &out.rho, &out.phi);
  return out;
}

RnfState steady_state(const NetworkMatrices& m, const BoundaryInput& input) {
  const int E = m.num_edges, M = m.num_demand;
  if (input.s.size() != m.num_slack || input.d.size() != M ||
      input.alpha.size() != m.num_compressors())
    throw std::invalid_argument("boundary input dimensions do not match network");

  // Initial guess: exact flux balance via the minimum-norm solution of
  // A_d phi = d (normal equations on the full-row-rank A_d), uniform density.
  Eigen::SparseMatrix<double> AAt = m.A_d * Eigen::SparseMatrix<double>(m.A_d.transpose());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(AAt);
  if (ldlt.info() != Eigen::Success)
    throw NoSteadyStateError("flux balance system is rank deficient");
  Eigen::VectorXd phi = m.A_d.transpose() * ldlt.solve(input.d);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(M, input.s.mean());

  // Residual F = [A_d phi - d; Lambda K phi|phi| + z o y] with
  // z = B^T rho^N, y = |B^T| rho^N (momentum form has flow running downhill).
  auto residual = [&](const Eigen::VectorXd& r, const Eigen::VectorXd& p,
                      Eigen::VectorXd& F) -> bool {
    F.resize(M + E);
    F.head(M) = m.A_d * p - input.d;
    for (int k = 0; k < E; ++k) {
      const double au = m.alpha_at_from(k, input.alpha);
      const double av = m.alpha_at_to(k, input.alpha);
      const double ru = vertex_density(m.edge_from[k], m, input.s, r);
      const double rv = vertex_density(m.edge_to[k], m, input.s, r);
      const double y = au * ru + av * rv;
      if (y < kMinDenominator) return false;
      const double z = -au * ru + av * rv;
      F[M + k] = m.lambda[k] * m.kappa[k] * p[k] * std::abs(p[k]) + z * y;
    }
    return true;
  };

  Eigen::VectorXd F, F_try;
  if (!residual(rho, phi, F))
    throw NoSteadyStateError("initial guess leaves the model domain");

  const int max_iters = 100;
  double best = F.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < max_iters && best > 1e-12; ++it) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(M + E, M + E);
    J.block(0, M, M, E) = Eigen::MatrixXd(m.A_d);
    for (int k = 0; k < E; ++k) {
      const double au = m.alpha_at_from(k, input.alpha);
      const double av = m.alpha_at_to(k, input.alpha);
      const double ru = vertex_density(m.edge_from[k], m, input.s, rho);
      const double rv = vertex_density(m.edge_to[k], m, input.s, rho);
      const double y = au * ru + av * rv;
      const double z = -au * ru + av * rv;
      const int du = m.demand_ordinal[m.edge_from[k]];
      const int dv = m.demand_ordinal[m.edge_to[k]];
      if (du >= 0) J(M + k, du) = au * (z - y);
      if (dv >= 0) J(M + k, dv) = av * (z + y);
      J(M + k, M + k) = 2.0 * m.lambda[k] * m.kappa[k] * std::abs(phi[k]);
    }
    // Keep the flux diagonal invertible through phi = 0.
    for (int k = 0; k < E; ++k)
      if (J(M + k, M + k) < 1e-12) J(M + k, M + k) = 1e-12;

    Eigen::VectorXd step = Eigen::PartialPivLU<Eigen::MatrixXd>(J).solve(-F);
    double t = 1.0;
    bool accepted = false;
    for (int cut = 0; cut < 60; ++cut, t *= 0.5) {
      Eigen::VectorXd rho_try = rho + t * step.head(M);
      Eigen::VectorXd phi_try = phi + t * step.tail(E);
      if (!residual(rho_try, phi_try, F_try)) continue;
      if (F_try.lpNorm<Eigen::Infinity>() < (1.0 - 1e-4 * t) * best || t < 1e-12) {
        rho = std::move(rho_try);
        phi = std::move(phi_try);
        F = F_try;
        best = F.lpNorm<Eigen::Infinity>();
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (best > 1e-10)
    throw NoSteadyStateError("steady-state Newton stalled, residual " + std::to_string(best));
  return RnfState{std::move(rho), std::move(phi)};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> endpoint_densities(
    const RnfState& state, const BoundaryInput& input, const NetworkMatrices& m) {
  check_sizes(state, input, m);
  Eigen::VectorXd rho0(m.num_edges), rhoL(m.num_edges);
  for (int k = 0; k < m.num_edges; ++k) {
    rho0[k] = m.alpha_at_from(k, input.alpha) *
              vertex_density(m.edge_from[k], m, input.s, state.rho);
    rhoL[k] = m.alpha_at_to(k, input.alpha) *
              vertex_density(m.edge_to[k], m, input.s, state.rho);
  }
  return {rho0, rhoL};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_endpoint_fluxes(
    const RnfState& state, const Eigen::VectorXd& rho_dot, const BoundaryInput& input,
    const NetworkMatrices& m) {
  check_sizes(state, input, m);
  Eigen::VectorXd phi0(m.num_edges), phiL(m.num_edges);
  for (int k = 0; k < m.num_edges; ++k) {
    const int u = m.edge_from[k], v = m.edge_to[k];
    const double au = m.alpha_at_from(k, input.alpha);
    const double av = m.alpha_at_to(k, input.alpha);
    const double uddot = m.demand_ordinal[u] >= 0 ? rho_dot[m.demand_ordinal[u]]
                                                  : input.s_dot[m.slack_ordinal[u]];
    const double vddot = m.demand_ordinal[v] >= 0 ? rho_dot[m.demand_ordinal[v]]
                                                  : input.s_dot[m.slack_ordinal[v]];
    const double phi_minus = -0.25 * m.lambda[k] * (au * uddot + av * vddot);
    phi0[k] = state.phi[k] - phi_minus;
    phiL[k] = state.phi[k] + phi_minus;
  }
  return {phi0, phiL};
}

double total_mass(const RnfState& state, const BoundaryInput& input,
                  const NetworkMatrices& m) {
  auto [rho0, rhoL] = endpoint_densities(state, input, m);
  return 0.5 * m.lambda.dot(rho0 + rhoL);
}

}  // namespace gasflow
