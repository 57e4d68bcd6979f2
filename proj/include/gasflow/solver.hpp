#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "gasflow/nlp.hpp"

namespace gasflow {

enum class SolveStatus { Optimal, MaxIterations, InfeasibleDetected, NumericalFailure };

const char* to_string(SolveStatus status);

struct SolverConfig {
  double kkt_tolerance = 1e-6;
  double constraint_tolerance = 1e-8;
  int max_iterations = 500;
  double initial_barrier = 0.1;  // interior-point barrier start
  double barrier_shrink = 0.2;   // multiplicative decrease per barrier stage
  double barrier_power = 1.5;    // superlinear decrease exponent
  double armijo_slope = 1e-4;    // sufficient-decrease coefficient
  double min_step_size = 1e-12;  // below this the line search gives up
  int quasi_newton_memory = 8;
  unsigned seed = 0;  // recorded for provenance; solve() itself is deterministic
  std::ostream* log = nullptr;  // optional line-oriented iteration log
};

struct IterationRecord {
  int iter = 0;
  int phase = 0;         // increments whenever restoration resets the search
  double barrier = 0.0;  // barrier parameter mu
  double theta = 0.0;    // scaled l1 infeasibility used by the step acceptance
  double objective = 0.0;
  double violation = 0.0;  // max-norm infeasibility, row-equilibrated units
  double kkt = 0.0;
  double step = 0.0;
  double merit = 0.0;  // barrier objective; accepted steps never worsen both
                       // this and theta within a (phase, barrier) stretch
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;              // one per constraint row
  Eigen::VectorXd bound_multipliers_lower;  // on the decision variables
  Eigen::VectorXd bound_multipliers_upper;
  double objective = 0.0;
  double kkt_residual = 0.0;
  // Max-norm constraint violation in row-equilibrated units (each row divided
  // by its initial magnitude when that exceeds one), matching the feasibility
  // component of the scaled KKT residual used for termination.
  double constraint_violation = 0.0;
  int iterations = 0;
  double wall_seconds = 0.0;
  std::string message;
  std::vector<IterationRecord> history;
};

// Primal-dual interior-point solve of a sparse NLP. General constraint rows
// are lifted to equalities with bounded slacks; search directions come from a
// regularized quasidefinite KKT factorization with a limited-memory
// quasi-Newton Lagrangian Hessian applied through a low-rank update. A
// Gauss-Newton feasibility restoration phase both rescues stalled iterations
// and certifies local infeasibility. Deterministic given config and init.
SolveResult solve(const NlpProblem& nlp, const SolverConfig& config,
                  const Eigen::VectorXd& init);

// Uniform draw strictly inside the variable box (1% margin of each range);
// free variables get a small perturbation around zero, one-sided bounds a
// small offset from the bound. Degenerate boxes (lower == upper) are
// rejected. Identical seeds give identical vectors.
Eigen::VectorXd random_feasible_init(const NlpProblem& nlp, unsigned seed);

// First-order optimality rebuilt from scratch in the original variable space,
// independent of solve()'s internal bookkeeping, for auditing results.
struct KktBreakdown {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  double overall() const;
};

KktBreakdown kkt_breakdown(const NlpProblem& nlp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& multipliers,
                           const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper);

}  // namespace gasflow
