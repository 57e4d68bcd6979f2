#pragma once

#include <Eigen/Dense>
#include <vector>

namespace gasflow {

/// Fixed nonzero pattern of a constraint Jacobian in triplet (row, col) form;
/// values are reported in this order on every evaluation.
struct SparsityPattern {
  std::vector<int> rows;
  std::vector<int> cols;
  std::size_t size() const { return rows.size(); }
};

/// Smooth nonlinear program
///   min f(x)   s.t.  cl <= c(x) <= cu,  xl <= x <= xu,
/// equality rows encoded as cl == cu. Evaluators must be pure in x (safe to
/// call concurrently at different points).
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_vars() const = 0;
  virtual int num_cons() const = 0;
  virtual void variable_bounds(Eigen::VectorXd* lo, Eigen::VectorXd* hi) const = 0;
  virtual void constraint_bounds(Eigen::VectorXd* lo, Eigen::VectorXd* hi) const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual void objective_gradient(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const = 0;
  virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd* c) const = 0;

  virtual const SparsityPattern& jacobian_pattern() const = 0;
  virtual void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd* values) const = 0;
};

/// Central finite-difference audit of the analytic derivatives at one point.
struct GradientCheck {
  double max_gradient_error = 0.0;  ///< relative, over all gradient entries
  double max_jacobian_error = 0.0;  ///< relative, over the sampled entries
  int jacobian_entries_checked = 0;
};

/// Compare the objective gradient (every entry) and at least `min_entries`
/// Jacobian pattern entries against central differences with step h.
/// Relative error uses max(1, |analytic|, |numeric|) as the denominator.
GradientCheck check_derivatives(const NlpProblem& nlp, const Eigen::VectorXd& x,
                                double h = 1e-6, int min_entries = 200,
                                unsigned seed = 0);

}  // namespace gasflow
