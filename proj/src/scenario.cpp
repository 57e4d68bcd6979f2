#include "gasflow/scenario.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "gasflow/errors.hpp"

namespace gasflow {

Profile Profile::constant(double value) {
  Profile p;
  p.kind_ = Kind::Constant;
  p.constant_ = value;
  return p;
}

Profile Profile::spline(std::vector<double> times, std::vector<double> values) {
  return build(Kind::Natural, std::move(times), std::move(values));
}

Profile Profile::periodic_spline(std::vector<double> times, std::vector<double> values) {
  return build(Kind::Periodic, std::move(times), std::move(values));
}

Profile Profile::build(Kind kind, std::vector<double> times, std::vector<double> values) {
  const int n = static_cast<int>(times.size());
  if (n < 2 || values.size() != times.size())
    throw ValidationError("profile needs at least two matching breakpoints");
  for (int i = 1; i < n; ++i)
    if (!(times[i] > times[i - 1]))
      throw ValidationError("profile breakpoint times must be strictly increasing");
  if (kind == Kind::Periodic &&
      std::abs(values.front() - values.back()) >
          1e-9 * std::max(1.0, std::abs(values.front())))
    throw ValidationError("periodic profile must have matching first/last values");

  Profile p;
  p.kind_ = kind;
  p.times_ = std::move(times);
  p.values_ = std::move(values);

  // Solve the (cyclic) tridiagonal system for the second derivatives M_i of
  // the interpolating cubic. Breakpoint counts are small; dense LU is fine.
  const auto& t = p.times_;
  const auto& y = p.values_;
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  auto h = [&](int i) { return t[i + 1] - t[i]; };
  for (int i = 1; i < n - 1; ++i) {
    sys(i, i - 1) = h(i - 1) / 6.0;
    sys(i, i) = (h(i - 1) + h(i)) / 3.0;
    sys(i, i + 1) = h(i) / 6.0;
    rhs[i] = (y[i + 1] - y[i]) / h(i) - (y[i] - y[i - 1]) / h(i - 1);
  }
  if (kind == Kind::Natural) {
    sys(0, 0) = 1.0;
    sys(n - 1, n - 1) = 1.0;
  } else {
    // Wrap M_{n-1} = M_0; first and last rows use the period-closing interval.
    const double h_last = h(n - 2);
    sys(0, 0) = (h_last + h(0)) / 3.0;
    sys(0, 1) += h(0) / 6.0;
    sys(0, n - 2) += h_last / 6.0;
    rhs[0] = (y[1] - y[0]) / h(0) - (y[n - 1] - y[n - 2]) / h_last;
    sys(n - 1, n - 1) = 1.0;
    sys(n - 1, 0) = -1.0;
  }
  Eigen::VectorXd m = sys.partialPivLu().solve(rhs);
  p.second_.assign(m.data(), m.data() + n);
  return p;
}

double Profile::wrap(double t) const {
  const double period = times_.back() - times_.front();
  double u = std::fmod(t - times_.front(), period);
  if (u < 0.0) u += period;
  return times_.front() + u;
}

int Profile::segment(double t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  int i = static_cast<int>(it - times_.begin()) - 1;
  return std::clamp(i, 0, static_cast<int>(times_.size()) - 2);
}

double Profile::value(double t) const {
  if (kind_ == Kind::Constant) return constant_;
  if (kind_ == Kind::Periodic) {
    t = wrap(t);
  } else if (t <= times_.front()) {
    return values_.front();
  } else if (t >= times_.back()) {
    return values_.back();
  }
  const int i = segment(t);
  const double h = times_[i + 1] - times_[i];
  const double a = (times_[i + 1] - t) / h;
  const double b = (t - times_[i]) / h;
  return a * values_[i] + b * values_[i + 1] +
         ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]) * h * h / 6.0;
}

double Profile::derivative(double t) const {
  if (kind_ == Kind::Constant) return 0.0;
  if (kind_ == Kind::Periodic) {
    t = wrap(t);
  } else if (t <= times_.front() || t >= times_.back()) {
    return 0.0;
  }
  const int i = segment(t);
  const double h = times_[i + 1] - times_[i];
  const double a = (times_[i + 1] - t) / h;
  const double b = (t - times_[i]) / h;
  return (values_[i + 1] - values_[i]) / h +
         (-(3.0 * a * a - 1.0) * second_[i] + (3.0 * b * b - 1.0) * second_[i + 1]) * h / 6.0;
}

BoundScenario::BoundScenario(const Scenario& scenario, const RefinedNetwork& net,
                             const NetworkMatrices& mats) {
  if (!(scenario.horizon > 0.0)) throw ValidationError("scenario horizon must be positive");
  horizon_ = scenario.horizon;

  auto vertex_of = [&](const std::string& id) {
    auto it = net.node_lookup.find(id);
    if (it == net.node_lookup.end())
      throw ValidationError("scenario references unknown node '" + id + "'");
    return it->second;
  };

  supply_.resize(mats.num_slack);
  std::vector<bool> have_supply(mats.num_slack, false);
  for (const auto& [id, profile] : scenario.supply) {
    const int v = vertex_of(id);
    if (mats.slack_ordinal[v] < 0)
      throw ValidationError("supply profile on non-slack node '" + id + "'");
    supply_[mats.slack_ordinal[v]] = profile;
    have_supply[mats.slack_ordinal[v]] = true;
  }
  for (int i = 0; i < mats.num_slack; ++i)
    if (!have_supply[i])
      throw ValidationError("slack node '" + net.nodes[mats.slack_vertices[i]].id +
                            "' has no supply profile");

  withdrawal_.assign(mats.num_demand, Profile::constant(0.0));
  for (const auto& [id, profile] : scenario.withdrawal) {
    const int v = vertex_of(id);
    if (mats.demand_ordinal[v] < 0)
      throw ValidationError("withdrawal profile on slack node '" + id + "'");
    withdrawal_[mats.demand_ordinal[v]] = profile;
  }

  control_.assign(mats.num_compressors(), Profile::constant(1.0));
  alpha_max_.resize(mats.num_compressors());
  for (int c = 0; c < mats.num_compressors(); ++c) alpha_max_[c] = mats.compressors[c].alpha_max;
  for (const auto& [id, profile] : scenario.control) {
    int found = -1;
    for (int c = 0; c < net.num_compressors(); ++c)
      if (net.compressors[c].id == id) found = c;
    if (found < 0) throw ValidationError("scenario references unknown compressor '" + id + "'");
    control_[found] = profile;
  }
}

BoundaryInput BoundScenario::operator()(double t) const {
  BoundaryInput in;
  in.s.resize(static_cast<Eigen::Index>(supply_.size()));
  in.s_dot.resize(in.s.size());
  for (Eigen::Index i = 0; i < in.s.size(); ++i) {
    in.s[i] = supply_[i].value(t);
    in.s_dot[i] = supply_[i].derivative(t);
  }
  in.d.resize(static_cast<Eigen::Index>(withdrawal_.size()));
  for (Eigen::Index i = 0; i < in.d.size(); ++i) in.d[i] = withdrawal_[i].value(t);
  in.alpha.resize(static_cast<Eigen::Index>(control_.size()));
  for (Eigen::Index c = 0; c < in.alpha.size(); ++c)
    in.alpha[c] = std::clamp(control_[c].value(t), 1.0, alpha_max_[c]);
  return in;
}

}  // namespace gasflow
