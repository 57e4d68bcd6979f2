#include "gasflow/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gasflow {

GradientCheck check_derivatives(const NlpProblem& nlp, const Eigen::VectorXd& x,
                                double h, int min_entries, unsigned seed) {
  const int n = nlp.num_vars();
  const int mcon = nlp.num_cons();
  GradientCheck report;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };

  Eigen::VectorXd grad;
  nlp.objective_gradient(x, &grad);
  Eigen::VectorXd xp = x;
  for (int j = 0; j < n; ++j) {
    xp[j] = x[j] + h;
    const double fp = nlp.objective(xp);
    xp[j] = x[j] - h;
    const double fm = nlp.objective(xp);
    xp[j] = x[j];
    report.max_gradient_error =
        std::max(report.max_gradient_error, rel(grad[j], (fp - fm) / (2.0 * h)));
  }

  const SparsityPattern& pat = nlp.jacobian_pattern();
  Eigen::VectorXd values;
  nlp.jacobian_values(x, &values);
  std::vector<std::vector<int>> by_col(n);
  for (std::size_t idx = 0; idx < pat.size(); ++idx)
    by_col[pat.cols[idx]].push_back(static_cast<int>(idx));

  std::vector<int> cols(n);
  std::iota(cols.begin(), cols.end(), 0);
  std::mt19937 rng(seed);
  std::shuffle(cols.begin(), cols.end(), rng);

  Eigen::VectorXd cp(mcon), cm(mcon);
  std::vector<char> in_pattern(mcon, 0);
  for (int col : cols) {
    if (report.jacobian_entries_checked >= min_entries) break;
    if (by_col[col].empty()) continue;
    xp[col] = x[col] + h;
    nlp.constraints(xp, &cp);
    xp[col] = x[col] - h;
    nlp.constraints(xp, &cm);
    xp[col] = x[col];
    for (int idx : by_col[col]) {
      const int r = pat.rows[idx];
      in_pattern[r] = 1;
      const double fd = (cp[r] - cm[r]) / (2.0 * h);
      report.max_jacobian_error = std::max(report.max_jacobian_error, rel(values[idx], fd));
      ++report.jacobian_entries_checked;
    }
    // derivatives outside the declared pattern must vanish
    for (int r = 0; r < mcon; ++r) {
      if (in_pattern[r]) continue;
      const double fd = (cp[r] - cm[r]) / (2.0 * h);
      report.max_jacobian_error = std::max(report.max_jacobian_error, rel(0.0, fd));
    }
    for (int idx : by_col[col]) in_pattern[pat.rows[idx]] = 0;
  }
  return report;
}

}  // namespace gasflow
