#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "gasflow/matrices.hpp"
#include "gasflow/nlp.hpp"
#include "gasflow/scenario.hpp"
#include "gasflow/simulate.hpp"
#include "gasflow/spectral.hpp"

namespace gasflow {

/// Which optimal control problem to transcribe.
enum class OcpKind {
  Compression,  ///< minimize aggregate compressor power
  LoadShed,     ///< minimize weighted squared shortfall at sheddable nodes
};

enum class TerminalMode {
  Periodic,      ///< rho(0)=rho(T), phi(0)=phi(T) componentwise
  PeriodicMass,  ///< total line-pack equal at 0 and T (scalar condition)
};

/// A demand node whose delivery becomes a decision variable (load shedding).
/// The desired withdrawal is the scenario's profile for that node; `weight`
/// is the marginal quadratic cost c_j(t) of deviating from it.
struct ShedSpec {
  std::string node;
  Profile weight = Profile::constant(1.0);
};

struct OcpSpec {
  OcpKind kind = OcpKind::Compression;
  TerminalMode terminal = TerminalMode::Periodic;
  int order = 25;            ///< collocation polynomial degree N
  double smoothing = -1.0;   ///< ratio-derivative penalty weight mu; <0 -> N
  double flux_epsilon = 1e-6;  ///< |phi| smoothing scale in the power integrand
  std::vector<ShedSpec> shed;  ///< LoadShed only
};

/// Solution trajectories on the collocation grid, with interpolation.
class CollocationSolution {
 public:
  LglGrid grid;
  double horizon = 0.0;
  Eigen::MatrixXd rho;    ///< M x (N+1)
  Eigen::MatrixXd phi;    ///< E x (N+1)
  Eigen::MatrixXd alpha;  ///< C x (N+1)
  Eigen::MatrixXd shed;   ///< Sigma x (N+1) delivered withdrawals (LoadShed)
  std::vector<std::string> shed_nodes;
  double objective = 0.0;  ///< headline value, smoothing excluded
  double smoothing = 0.0;

  Eigen::VectorXd rho_at(double t) const;
  Eigen::VectorXd phi_at(double t) const;
  Eigen::VectorXd alpha_at(double t) const;
  Eigen::VectorXd shed_at(double t) const;

 private:
  Eigen::VectorXd interp(const Eigen::MatrixXd& block, double t) const;
};

/// Legendre-Gauss-Lobatto transcription of the reduced-model optimal control
/// problems into a sparse NLP. Variables are node-major blocks
/// [rho (M x N+1); phi (E x N+1); alpha (C x N+1); shed (Sigma x N+1)].
/// Dynamics rows use the mass-matrix form W(alpha_i) * sum_k D_ik rho_k =
/// (T/2) * b_i, which has the same solution set as the explicit form but a
/// sparser Jacobian; flux rows are collocated literally. Plain density and
/// ratio bounds are variable bounds; boosted densities alpha*rho enter as
/// two-sided inequality rows. Terminal conditions are periodicity rows (or
/// the scalar line-pack condition), plus alpha and shed periodicity.
class TranscribedNlp : public NlpProblem {
 public:
  TranscribedNlp(const RefinedNetwork& net, const NetworkMatrices& mats,
                 const Scenario& scenario, const OcpSpec& spec);

  int num_vars() const override { return num_vars_; }
  int num_cons() const override { return num_cons_; }
  void variable_bounds(Eigen::VectorXd* lo, Eigen::VectorXd* hi) const override;
  void constraint_bounds(Eigen::VectorXd* lo, Eigen::VectorXd* hi) const override;
  double objective(const Eigen::VectorXd& x) const override;
  void objective_gradient(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const override;
  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd* c) const override;
  const SparsityPattern& jacobian_pattern() const override { return pattern_; }
  void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd* values) const override;

  /// Headline objective (compression power or shedding cost) without the
  /// smoothing penalty, and the penalty itself.
  double headline_objective(const Eigen::VectorXd& x) const;
  double smoothing_penalty(const Eigen::VectorXd& x) const;

  /// Steady-state initial iterate: per-node steady solves at the collocation
  /// times with ratios pushed slightly inside their bounds.
  Eigen::VectorXd steady_guess() const;

  CollocationSolution extract(const Eigen::VectorXd& x) const;

  // Variable layout (ordinal within block, collocation node k).
  int rho_var(int v, int k) const { return v * (order_ + 1) + k; }
  int phi_var(int e, int k) const { return phi0_ + e * (order_ + 1) + k; }
  int alpha_var(int c, int k) const { return alpha0_ + c * (order_ + 1) + k; }
  int shed_var(int s, int k) const { return shed0_ + s * (order_ + 1) + k; }

  int order() const { return order_; }
  double horizon() const { return horizon_; }
  const LglGrid& grid() const { return grid_; }
  int num_shed() const { return static_cast<int>(shed_ordinals_.size()); }
  double jacobian_density() const {
    return static_cast<double>(pattern_.size()) /
           (static_cast<double>(num_cons_) * num_vars_);
  }

 private:
  // Walks dynamics/terminal/path rows in one fixed order, emitting constraint
  // values and/or Jacobian entries; the pattern is this walk with values
  // ignored, so value order matches the pattern by construction.
  template <class Emit>
  void walk(const Eigen::VectorXd* x, Eigen::VectorXd* cons, const Emit& emit) const;

  const NetworkMatrices& m_;
  OcpSpec spec_;
  int order_ = 0;
  double horizon_ = 0.0;
  double mu_ = 0.0;
  double two_m_ = 0.0;  ///< compressor power exponent 2m
  LglGrid grid_;

  int phi0_ = 0, alpha0_ = 0, shed0_ = 0;
  int num_vars_ = 0, num_cons_ = 0;
  int term0_ = 0;  ///< first terminal row
  int path0_ = 0;  ///< first inequality (boosted-density) row

  // boundary data at the collocation times
  Eigen::MatrixXd s_at_;      ///< num_slack x (N+1)
  Eigen::MatrixXd s_dot_at_;  ///< num_slack x (N+1)
  Eigen::MatrixXd d_at_;      ///< num_demand x (N+1), zero at shed nodes
  Eigen::MatrixXd desired_;   ///< Sigma x (N+1) target withdrawals d*
  Eigen::MatrixXd weight_;    ///< Sigma x (N+1) shedding cost weights

  std::vector<int> shed_ordinals_;          ///< demand ordinal per shed block
  std::vector<int> shed_block_of_demand_;   ///< demand ordinal -> block or -1
  std::vector<std::string> shed_nodes_;

  SparsityPattern pattern_;
};

/// Re-simulate the optimized controls with the adaptive integrator, starting
/// from the solution's initial state, and compare against the collocation
/// trajectories. `relative_*` errors are normalized by the trajectory ranges.
struct SolutionValidation {
  double max_density_error = 0.0;
  double max_flux_error = 0.0;
  double density_range = 0.0;
  double flux_range = 0.0;
  double relative_density_error = 0.0;
  double relative_flux_error = 0.0;
  double periodicity_residual = 0.0;  ///< |state(T) - state(0)| of the re-simulation
  SimulationResult simulation;
};

SolutionValidation validate_solution(const RefinedNetwork& net,
                                     const NetworkMatrices& mats,
                                     const Scenario& scenario,
                                     const CollocationSolution& sol,
                                     const IntegratorOptions& opts = {});

}  // namespace gasflow
