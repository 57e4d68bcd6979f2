#include "gasflow/transcribe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gasflow/errors.hpp"
#include "gasflow/rnf.hpp"

namespace gasflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Eigen::VectorXd CollocationSolution::interp(const Eigen::MatrixXd& block, double t) const {
  const double tau = to_reference_time(t, horizon);
  Eigen::VectorXd out(block.rows());
  for (Eigen::Index r = 0; r < block.rows(); ++r)
    out[r] = interpolate(grid, block.row(r), tau);
  return out;
}

Eigen::VectorXd CollocationSolution::rho_at(double t) const { return interp(rho, t); }
Eigen::VectorXd CollocationSolution::phi_at(double t) const { return interp(phi, t); }
Eigen::VectorXd CollocationSolution::alpha_at(double t) const { return interp(alpha, t); }
Eigen::VectorXd CollocationSolution::shed_at(double t) const { return interp(shed, t); }

TranscribedNlp::TranscribedNlp(const RefinedNetwork& net, const NetworkMatrices& mats,
                               const Scenario& scenario, const OcpSpec& spec)
    : m_(mats), spec_(spec), order_(spec.order) {
  if (spec.kind == OcpKind::Compression && !spec.shed.empty())
    throw ValidationError("shed set is only meaningful for the load-shedding problem");
  if (order_ < 2) throw ValidationError("collocation order must be at least 2");
  mu_ = spec.smoothing < 0.0 ? static_cast<double>(order_) : spec.smoothing;
  two_m_ = 2.0 * net.constants.power_exponent;
  grid_ = lgl_grid(order_);
  horizon_ = scenario.horizon;

  const int M = m_.num_demand, E = m_.num_edges, C = m_.num_compressors();
  const int Np1 = order_ + 1;

  shed_block_of_demand_.assign(M, -1);
  for (const ShedSpec& sh : spec.shed) {
    const auto it = net.node_lookup.find(sh.node);
    if (it == net.node_lookup.end())
      throw ValidationError("shed set references unknown node '" + sh.node + "'");
    const int ord = m_.demand_ordinal[it->second];
    if (ord < 0) throw ValidationError("shed node '" + sh.node + "' is a slack node");
    if (shed_block_of_demand_[ord] >= 0)
      throw ValidationError("shed node '" + sh.node + "' listed twice");
    shed_block_of_demand_[ord] = static_cast<int>(shed_ordinals_.size());
    shed_ordinals_.push_back(ord);
    shed_nodes_.push_back(sh.node);
  }
  const int S = num_shed();

  phi0_ = M * Np1;
  alpha0_ = (M + E) * Np1;
  shed0_ = (M + E + C) * Np1;
  num_vars_ = (M + E + C + S) * Np1;
  term0_ = (M + E) * Np1;
  const int term_count =
      (spec.terminal == TerminalMode::Periodic ? M + E : 1) + C + S;
  path0_ = term0_ + term_count;
  num_cons_ = path0_ + C * Np1;

  // Boundary data at the collocation times; shed nodes hand their withdrawal
  // over to the decision block, keeping the desired value as the target d*.
  const BoundScenario bound(scenario, net, mats);
  s_at_.resize(m_.num_slack, Np1);
  s_dot_at_.resize(m_.num_slack, Np1);
  d_at_.resize(M, Np1);
  desired_.resize(S, Np1);
  weight_.resize(S, Np1);
  for (int i = 0; i < Np1; ++i) {
    const double t = from_reference_time(grid_.nodes[i], horizon_);
    const BoundaryInput in = bound(t);
    s_at_.col(i) = in.s;
    s_dot_at_.col(i) = in.s_dot;
    d_at_.col(i) = in.d;
    for (int s = 0; s < S; ++s) {
      desired_(s, i) = in.d[shed_ordinals_[s]];
      d_at_(shed_ordinals_[s], i) = 0.0;
      weight_(s, i) = spec_.shed[s].weight.value(t);
    }
  }

  // Fix the Jacobian pattern with one walk at a benign interior point.
  Eigen::VectorXd probe = Eigen::VectorXd::Constant(num_vars_, 1.0);
  for (int e = 0; e < E; ++e)
    for (int k = 0; k < Np1; ++k) probe[phi_var(e, k)] = 0.01;
  walk(&probe, nullptr, [this](int r, int c, double) {
    pattern_.rows.push_back(r);
    pattern_.cols.push_back(c);
  });
}

void TranscribedNlp::variable_bounds(Eigen::VectorXd* lo, Eigen::VectorXd* hi) const {
  const int Np1 = order_ + 1;
  lo->setConstant(num_vars_, -kInf);
  hi->setConstant(num_vars_, kInf);
  for (int v = 0; v < m_.num_demand; ++v) {
    const int vx = m_.demand_vertices[v];
    for (int k = 0; k < Np1; ++k) {
      (*lo)[rho_var(v, k)] = m_.rho_min[vx];
      (*hi)[rho_var(v, k)] = m_.rho_max[vx];
    }
  }
  for (int c = 0; c < m_.num_compressors(); ++c)
    for (int k = 0; k < Np1; ++k) {
      (*lo)[alpha_var(c, k)] = 1.0;
      (*hi)[alpha_var(c, k)] = m_.compressors[c].alpha_max;
    }
  for (int s = 0; s < num_shed(); ++s)
    for (int k = 0; k < Np1; ++k) (*lo)[shed_var(s, k)] = 0.0;
}

void TranscribedNlp::constraint_bounds(Eigen::VectorXd* lo, Eigen::VectorXd* hi) const {
  const int Np1 = order_ + 1;
  lo->setZero(num_cons_);
  hi->setZero(num_cons_);
  for (int c = 0; c < m_.num_compressors(); ++c) {
    const int vx = m_.compressors[c].vertex;
    for (int k = 0; k < Np1; ++k) {
      (*lo)[path0_ + c * Np1 + k] = m_.rho_min[vx];
      (*hi)[path0_ + c * Np1 + k] = m_.rho_max[vx];
    }
  }
}

template <class Emit>
void TranscribedNlp::walk(const Eigen::VectorXd* x, Eigen::VectorXd* cons,
                          const Emit& emit) const {
  const int M = m_.num_demand, E = m_.num_edges, C = m_.num_compressors();
  const int S = num_shed();
  const int Np1 = order_ + 1;
  const double Th = horizon_ / 2.0;
  const Eigen::MatrixXd& D = grid_.D;

  Eigen::MatrixXd rho(M, Np1), phi(E, Np1), alpha(C, Np1), shed(S, Np1);
  for (int v = 0; v < M; ++v)
    for (int k = 0; k < Np1; ++k) rho(v, k) = (*x)[rho_var(v, k)];
  for (int e = 0; e < E; ++e)
    for (int k = 0; k < Np1; ++k) phi(e, k) = (*x)[phi_var(e, k)];
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < Np1; ++k) alpha(c, k) = (*x)[alpha_var(c, k)];
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < Np1; ++k) shed(s, k) = (*x)[shed_var(s, k)];
  const Eigen::MatrixXd drho = rho * D.transpose();  // (d/dtau rho_v) at node i
  const Eigen::MatrixXd dphi = phi * D.transpose();

  // adjacency: edges touching each demand vertex
  std::vector<std::vector<int>> edges_at(M);
  for (int e = 0; e < E; ++e) {
    if (const int u = m_.demand_ordinal[m_.edge_from[e]]; u >= 0) edges_at[u].push_back(e);
    if (const int v = m_.demand_ordinal[m_.edge_to[e]]; v >= 0) edges_at[v].push_back(e);
  }

  auto alpha_of = [&](int comp, int i) { return comp < 0 ? 1.0 : alpha(comp, i); };

  // mass-balance rows in the W-multiplied form: W(alpha_i) (D rho)_i = Th * b_i
  for (int v = 0; v < M; ++v) {
    for (int i = 0; i < Np1; ++i) {
      const int row = v * Np1 + i;
      std::map<int, double> wrow;  // demand ordinal -> W_{v,u}(alpha_i)
      double b = 0.0;
      for (int e : edges_at[v]) {
        const int f = m_.edge_from[e], t = m_.edge_to[e];
        const int cf = m_.comp_at_edge_from[e], ct = m_.comp_at_edge_to[e];
        const double af = alpha_of(cf, i), at = alpha_of(ct, i);
        const double lam = m_.lambda[e];
        const int fd = m_.demand_ordinal[f], td = m_.demand_ordinal[t];
        if (fd >= 0)
          wrow[fd] += lam * af;
        else
          b -= lam * af * s_dot_at_(m_.slack_ordinal[f], i);
        if (td >= 0)
          wrow[td] += lam * at;
        else
          b -= lam * at * s_dot_at_(m_.slack_ordinal[t], i);
        const double sign = (td == v) ? 1.0 : -1.0;  // edge enters or leaves v
        b += 4.0 * sign * phi(e, i);
        emit(row, phi_var(e, i), -Th * 4.0 * sign);
      }
      const int blk = shed_block_of_demand_[v];
      const double dv = d_at_(v, i) + (blk >= 0 ? shed(blk, i) : 0.0);
      b -= 4.0 * dv;
      if (blk >= 0) emit(row, shed_var(blk, i), Th * 4.0);

      double lhs = 0.0;
      for (const auto& [u, w] : wrow) {
        lhs += w * drho(u, i);
        for (int j = 0; j < Np1; ++j) emit(row, rho_var(u, j), w * D(i, j));
      }
      // ratio sensitivities of W and of the slack-derivative term
      for (int e : edges_at[v]) {
        const int f = m_.edge_from[e], t = m_.edge_to[e];
        const double lam = m_.lambda[e];
        if (const int cf = m_.comp_at_edge_from[e]; cf >= 0) {
          const int fd = m_.demand_ordinal[f];
          emit(row, alpha_var(cf, i),
               fd >= 0 ? lam * drho(fd, i)
                       : Th * lam * s_dot_at_(m_.slack_ordinal[f], i));
        }
        if (const int ct = m_.comp_at_edge_to[e]; ct >= 0) {
          const int td = m_.demand_ordinal[t];
          emit(row, alpha_var(ct, i),
               td >= 0 ? lam * drho(td, i)
                       : Th * lam * s_dot_at_(m_.slack_ordinal[t], i));
        }
      }
      if (cons) (*cons)[row] = lhs - Th * b;
    }
  }

  // momentum rows, collocated literally
  for (int e = 0; e < E; ++e) {
    const int f = m_.edge_from[e], t = m_.edge_to[e];
    const int fd = m_.demand_ordinal[f], td = m_.demand_ordinal[t];
    const int cf = m_.comp_at_edge_from[e], ct = m_.comp_at_edge_to[e];
    const double lam = m_.lambda[e], kap = m_.kappa[e];
    for (int i = 0; i < Np1; ++i) {
      const int row = phi0_ + e * Np1 + i;
      const double rf = fd >= 0 ? rho(fd, i) : s_at_(m_.slack_ordinal[f], i);
      const double rt = td >= 0 ? rho(td, i) : s_at_(m_.slack_ordinal[t], i);
      const double af = alpha_of(cf, i), at = alpha_of(ct, i);
      const double y = af * rf + at * rt;
      const double z = at * rt - af * rf;
      const double p = phi(e, i);
      const double drag = kap * p * std::abs(p) / y;
      const double phidot = -z / lam - drag;
      if (cons) (*cons)[row] = dphi(e, i) - Th * phidot;

      const double curv = kap * p * std::abs(p) / (y * y);  // d(drag)/dy * (-1)
      for (int j = 0; j < Np1; ++j)
        emit(row, phi_var(e, j),
             D(i, j) + (i == j ? Th * 2.0 * kap * std::abs(p) / y : 0.0));
      if (fd >= 0) emit(row, rho_var(fd, i), -Th * af * (1.0 / lam + curv));
      if (td >= 0) emit(row, rho_var(td, i), -Th * at * (-1.0 / lam + curv));
      if (cf >= 0) emit(row, alpha_var(cf, i), -Th * rf * (1.0 / lam + curv));
      if (ct >= 0) emit(row, alpha_var(ct, i), -Th * rt * (-1.0 / lam + curv));
    }
  }

  // terminal rows
  int row = term0_;
  if (spec_.terminal == TerminalMode::Periodic) {
    for (int v = 0; v < M; ++v, ++row) {
      if (cons) (*cons)[row] = rho(v, 0) - rho(v, order_);
      emit(row, rho_var(v, 0), 1.0);
      emit(row, rho_var(v, order_), -1.0);
    }
    for (int e = 0; e < E; ++e, ++row) {
      if (cons) (*cons)[row] = phi(e, 0) - phi(e, order_);
      emit(row, phi_var(e, 0), 1.0);
      emit(row, phi_var(e, order_), -1.0);
    }
  } else {
    // line-pack difference: sum_e lam_e (af rf + at rt)/2 at k=0 minus k=N
    double residual = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      const int k = pass == 0 ? 0 : order_;
      const double sign = pass == 0 ? 1.0 : -1.0;
      std::map<int, double> coeff;  // demand ordinal -> d(mass)/d(rho)
      for (int e = 0; e < E; ++e) {
        const int f = m_.edge_from[e], t = m_.edge_to[e];
        const int fd = m_.demand_ordinal[f], td = m_.demand_ordinal[t];
        const int cf = m_.comp_at_edge_from[e], ct = m_.comp_at_edge_to[e];
        const double af = alpha_of(cf, k), at = alpha_of(ct, k);
        const double half_lam = 0.5 * m_.lambda[e];
        const double rf = fd >= 0 ? rho(fd, k) : s_at_(m_.slack_ordinal[f], k);
        const double rt = td >= 0 ? rho(td, k) : s_at_(m_.slack_ordinal[t], k);
        residual += sign * half_lam * (af * rf + at * rt);
        if (fd >= 0) coeff[fd] += half_lam * af;
        if (td >= 0) coeff[td] += half_lam * at;
        if (cf >= 0) emit(row, alpha_var(cf, k), sign * half_lam * rf);
        if (ct >= 0) emit(row, alpha_var(ct, k), sign * half_lam * rt);
      }
      for (const auto& [u, w] : coeff) emit(row, rho_var(u, k), sign * w);
    }
    if (cons) (*cons)[row] = residual;
    ++row;
  }
  for (int c = 0; c < C; ++c, ++row) {
    if (cons) (*cons)[row] = alpha(c, 0) - alpha(c, order_);
    emit(row, alpha_var(c, 0), 1.0);
    emit(row, alpha_var(c, order_), -1.0);
  }
  for (int s = 0; s < S; ++s, ++row) {
    if (cons) (*cons)[row] = shed(s, 0) - shed(s, order_);
    emit(row, shed_var(s, 0), 1.0);
    emit(row, shed_var(s, order_), -1.0);
  }

  // boosted-density path rows alpha * rho in [rho_min, rho_max]
  for (int c = 0; c < C; ++c) {
    const int vx = m_.compressors[c].vertex;
    const int vd = m_.demand_ordinal[vx];
    for (int k = 0; k < Np1; ++k) {
      const int r = path0_ + c * Np1 + k;
      if (vd >= 0) {
        if (cons) (*cons)[r] = alpha(c, k) * rho(vd, k);
        emit(r, alpha_var(c, k), rho(vd, k));
        emit(r, rho_var(vd, k), alpha(c, k));
      } else {
        const double s = s_at_(m_.slack_ordinal[vx], k);
        if (cons) (*cons)[r] = alpha(c, k) * s;
        emit(r, alpha_var(c, k), s);
      }
    }
  }
}

void TranscribedNlp::constraints(const Eigen::VectorXd& x, Eigen::VectorXd* c) const {
  c->resize(num_cons_);
  walk(&x, c, [](int, int, double) {});
}

void TranscribedNlp::jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd* values) const {
  values->resize(static_cast<Eigen::Index>(pattern_.size()));
  std::size_t at = 0;
  walk(&x, nullptr, [&](int, int, double v) { (*values)[static_cast<Eigen::Index>(at++)] = v; });
}

double TranscribedNlp::headline_objective(const Eigen::VectorXd& x) const {
  const int Np1 = order_ + 1;
  const double Th = horizon_ / 2.0;
  double J = 0.0;
  if (spec_.kind == OcpKind::Compression) {
    for (int c = 0; c < m_.num_compressors(); ++c) {
      const int e = m_.compressors[c].edge;
      const double eta = m_.compressors[c].efficiency;
      for (int k = 0; k < Np1; ++k) {
        const double p = x[phi_var(e, k)];
        const double a = x[alpha_var(c, k)];
        const double mag = std::sqrt(p * p + spec_.flux_epsilon * spec_.flux_epsilon);
        J += Th * grid_.weights[k] * (mag / eta) * (std::pow(a, two_m_) - 1.0);
      }
    }
  } else {
    for (int s = 0; s < num_shed(); ++s)
      for (int k = 0; k < Np1; ++k) {
        const double gap = x[shed_var(s, k)] - desired_(s, k);
        J += Th * grid_.weights[k] * weight_(s, k) * gap * gap;
      }
  }
  return J;
}

double TranscribedNlp::smoothing_penalty(const Eigen::VectorXd& x) const {
  const int Np1 = order_ + 1;
  double J = 0.0;
  for (int c = 0; c < m_.num_compressors(); ++c) {
    for (int i = 0; i < Np1; ++i) {
      double da = 0.0;
      for (int k = 0; k < Np1; ++k) da += grid_.D(i, k) * x[alpha_var(c, k)];
      J += grid_.weights[i] * da * da;
    }
  }
  return mu_ * (2.0 / horizon_) * J;
}

double TranscribedNlp::objective(const Eigen::VectorXd& x) const {
  return headline_objective(x) + smoothing_penalty(x);
}

void TranscribedNlp::objective_gradient(const Eigen::VectorXd& x,
                                        Eigen::VectorXd* grad) const {
  const int Np1 = order_ + 1;
  const double Th = horizon_ / 2.0;
  grad->setZero(num_vars_);
  if (spec_.kind == OcpKind::Compression) {
    for (int c = 0; c < m_.num_compressors(); ++c) {
      const int e = m_.compressors[c].edge;
      const double eta = m_.compressors[c].efficiency;
      for (int k = 0; k < Np1; ++k) {
        const double p = x[phi_var(e, k)];
        const double a = x[alpha_var(c, k)];
        const double mag = std::sqrt(p * p + spec_.flux_epsilon * spec_.flux_epsilon);
        const double wk = Th * grid_.weights[k];
        (*grad)[phi_var(e, k)] += wk * (p / mag) / eta * (std::pow(a, two_m_) - 1.0);
        (*grad)[alpha_var(c, k)] +=
            wk * (mag / eta) * two_m_ * std::pow(a, two_m_ - 1.0);
      }
    }
  } else {
    for (int s = 0; s < num_shed(); ++s)
      for (int k = 0; k < Np1; ++k)
        (*grad)[shed_var(s, k)] += Th * grid_.weights[k] * weight_(s, k) * 2.0 *
                                   (x[shed_var(s, k)] - desired_(s, k));
  }
  // smoothing: mu (2/T) sum_i w_i (D alpha)_i^2
  for (int c = 0; c < m_.num_compressors(); ++c) {
    Eigen::VectorXd a(Np1);
    for (int k = 0; k < Np1; ++k) a[k] = x[alpha_var(c, k)];
    const Eigen::VectorXd da = grid_.D * a;
    const Eigen::VectorXd g =
        2.0 * mu_ * (2.0 / horizon_) * grid_.D.transpose() * grid_.weights.cwiseProduct(da);
    for (int k = 0; k < Np1; ++k) (*grad)[alpha_var(c, k)] += g[k];
  }
}

Eigen::VectorXd TranscribedNlp::steady_guess() const {
  const int M = m_.num_demand, E = m_.num_edges, C = m_.num_compressors();
  const int S = num_shed();
  const int Np1 = order_ + 1;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(num_vars_);

  BoundaryInput in;
  in.alpha = Eigen::VectorXd::Ones(C);
  in.s_dot = Eigen::VectorXd::Zero(m_.num_slack);
  RnfState prev;
  bool have_prev = false;
  for (int i = 0; i < Np1; ++i) {
    in.s = s_at_.col(i);
    in.d = d_at_.col(i);
    for (int s = 0; s < S; ++s) in.d[shed_ordinals_[s]] = desired_(s, i);
    RnfState st;
    try {
      st = steady_state(m_, in);
      prev = st;
      have_prev = true;
    } catch (const NoSteadyStateError&) {
      if (have_prev) {
        st = prev;
      } else {
        st.rho = Eigen::VectorXd::Constant(M, in.s.mean());
        st.phi = Eigen::VectorXd::Zero(E);
      }
    }
    for (int v = 0; v < M; ++v) x[rho_var(v, i)] = st.rho[v];
    for (int e = 0; e < E; ++e) x[phi_var(e, i)] = st.phi[e];
    for (int c = 0; c < C; ++c)
      x[alpha_var(c, i)] = 1.0 + 0.05 * (m_.compressors[c].alpha_max - 1.0);
    for (int s = 0; s < S; ++s) x[shed_var(s, i)] = desired_(s, i);
  }
  return x;
}

CollocationSolution TranscribedNlp::extract(const Eigen::VectorXd& x) const {
  const int M = m_.num_demand, E = m_.num_edges, C = m_.num_compressors();
  const int S = num_shed();
  const int Np1 = order_ + 1;
  CollocationSolution sol;
  sol.grid = grid_;
  sol.horizon = horizon_;
  sol.rho.resize(M, Np1);
  sol.phi.resize(E, Np1);
  sol.alpha.resize(C, Np1);
  sol.shed.resize(S, Np1);
  sol.shed_nodes = shed_nodes_;
  for (int v = 0; v < M; ++v)
    for (int k = 0; k < Np1; ++k) sol.rho(v, k) = x[rho_var(v, k)];
  for (int e = 0; e < E; ++e)
    for (int k = 0; k < Np1; ++k) sol.phi(e, k) = x[phi_var(e, k)];
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < Np1; ++k) sol.alpha(c, k) = x[alpha_var(c, k)];
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < Np1; ++k) sol.shed(s, k) = x[shed_var(s, k)];
  sol.objective = headline_objective(x);
  sol.smoothing = smoothing_penalty(x);
  return sol;
}

SolutionValidation validate_solution(const RefinedNetwork& net,
                                     const NetworkMatrices& mats,
                                     const Scenario& scenario,
                                     const CollocationSolution& sol,
                                     const IntegratorOptions& opts) {
  const BoundScenario bound(scenario, net, mats);
  std::vector<int> shed_ord;
  for (const std::string& id : sol.shed_nodes)
    shed_ord.push_back(mats.demand_ordinal[net.node_lookup.at(id)]);

  Eigen::VectorXd alpha_max(mats.num_compressors());
  for (int c = 0; c < mats.num_compressors(); ++c)
    alpha_max[c] = mats.compressors[c].alpha_max;

  auto boundary = [&](double t) {
    BoundaryInput in = bound(t);
    if (mats.num_compressors() > 0) {
      const Eigen::VectorXd a = sol.alpha_at(t);
      for (int c = 0; c < mats.num_compressors(); ++c)
        in.alpha[c] = std::clamp(a[c], 1.0, alpha_max[c]);
    }
    if (!shed_ord.empty()) {
      const Eigen::VectorXd delivered = sol.shed_at(t);
      for (std::size_t s = 0; s < shed_ord.size(); ++s)
        in.d[shed_ord[s]] = std::max(0.0, delivered[static_cast<Eigen::Index>(s)]);
    }
    return in;
  };

  const RnfOde ode(mats);
  RnfState start{sol.rho.col(0), sol.phi.col(0)};
  SolutionValidation out;
  out.simulation = simulate(ode, start, boundary, 0.0, sol.horizon, opts);

  const int Sn = static_cast<int>(out.simulation.times.size());
  for (int j = 0; j < Sn; ++j) {
    const double t = out.simulation.times[j];
    const Eigen::VectorXd rho_c = sol.rho_at(t);
    const Eigen::VectorXd phi_c = sol.phi_at(t);
    out.max_density_error = std::max(
        out.max_density_error,
        (rho_c - out.simulation.density.col(j)).cwiseAbs().maxCoeff());
    out.max_flux_error = std::max(
        out.max_flux_error, (phi_c - out.simulation.flux.col(j)).cwiseAbs().maxCoeff());
  }
  out.density_range = sol.rho.maxCoeff() - sol.rho.minCoeff();
  out.flux_range = sol.phi.maxCoeff() - sol.phi.minCoeff();
  out.relative_density_error = out.max_density_error / std::max(out.density_range, 1e-12);
  out.relative_flux_error = out.max_flux_error / std::max(out.flux_range, 1e-12);

  const double drho = (out.simulation.final_state.rho - sol.rho.col(0)).cwiseAbs().maxCoeff();
  const double dphi = (out.simulation.final_state.phi - sol.phi.col(0)).cwiseAbs().maxCoeff();
  out.periodicity_residual = std::max(drho, dphi);
  return out;
}

}  // namespace gasflow
