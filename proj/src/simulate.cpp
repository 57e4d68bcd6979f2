#include "gasflow/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gasflow/errors.hpp"

namespace gasflow {

namespace {

// One-step trapezoidal/BDF2 pair with gamma = 2 - sqrt(2): both implicit
// stages share the iteration matrix I - h*d*J (d = gamma/2), and the
// companion third-order weights give an embedded error estimate that is
// filtered through the same matrix before the step-size test.
constexpr double kGamma = 0.5857864376269049;  // 2 - sqrt(2)
constexpr double kDiag = 0.2928932188134524;   // gamma / 2
constexpr double kB1 = 0.3535533905932738;     // sqrt(2)/4
constexpr double kB2 = kB1;
// b - bh, bh being the third-order companion weights
constexpr double kE1 = 0.1380711874576983;  // (sqrt(2)-1)/3
constexpr double kE2 = -1.0 / 3.0;
constexpr double kE3 = 0.1952621458756350;  // (2-sqrt(2))/3

constexpr double kNewtonTol = 0.03;

double hermite(double theta, double h, double y0, double f0, double y1, double f1) {
  const double t2 = theta * theta, t3 = t2 * theta;
  return (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + theta) * h * f0 +
         (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * f1;
}

}  // namespace

SimulationResult simulate(const RnfOde& ode, const RnfState& initial,
                          const BoundaryFn& boundary, double t0, double t1,
                          const IntegratorOptions& opts) {
  const NetworkMatrices& m = ode.matrices();
  const int M = m.num_demand, E = m.num_edges, n = M + E;
  if (initial.rho.size() != M || initial.phi.size() != E)
    throw std::invalid_argument("initial state does not match the network");
  if (!(t1 > t0)) throw std::invalid_argument("simulation interval is empty");
  const double span = t1 - t0;
  const double max_step = opts.max_step > 0.0 ? opts.max_step : span / 8.0;
  const int S = std::max(2, opts.num_samples);

  SimulationResult res;
  res.times.resize(S);
  for (int i = 0; i < S; ++i) res.times[i] = t0 + span * i / (S - 1);
  res.density.resize(M, S);
  res.flux.resize(E, S);

  auto unpack = [&](const Eigen::VectorXd& y) {
    return RnfState{y.head(M), y.tail(E)};
  };
  auto eval = [&](double t, const Eigen::VectorXd& y) {
    const RnfState st = unpack(y);
    Eigen::VectorXd rd, pd, f(n);
    ode.rhs(st, boundary(t), &rd, &pd);
    ++res.rhs_evaluations;
    f << rd, pd;
    return f;
  };
  auto wrms = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& ya,
                  const Eigen::VectorXd& yb) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = opts.atol + opts.rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
      const double q = v[i] / w;
      acc += q * q;
    }
    return std::sqrt(acc / n);
  };

  double t = t0;
  Eigen::VectorXd y(n);
  y << initial.rho, initial.phi;
  Eigen::VectorXd f1 = eval(t, y);  // invalid initial states propagate as-is
  res.mass_initial = total_mass(initial, boundary(t0), m);

  Eigen::MatrixXd jac;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  bool have_jac = false, jac_fresh = false;
  double h_factored = -1.0;
  int jac_age = 0;

  auto refresh_jac = [&](void) {
    jac = ode.state_jacobian(unpack(y), boundary(t));
    ++res.jacobians;
    have_jac = jac_fresh = true;
    jac_age = 0;
    h_factored = -1.0;
  };

  double h = opts.initial_step > 0.0 ? opts.initial_step : span / 100.0;
  h = std::min(h, max_step);

  // Newton on G(Y) = Y - c - h*d*f(ts, Y) with the shared iteration matrix.
  int stage_iters = 0;
  auto solve_stage = [&](double ts, const Eigen::VectorXd& c, Eigen::VectorXd& Y) {
    double prev = 0.0;
    for (int k = 0; k < opts.max_newton; ++k) {
      const Eigen::VectorXd f = eval(ts, Y);
      const Eigen::VectorXd delta = lu.solve(c + h * kDiag * f - Y);
      Y += delta;
      ++res.newton_iterations;
      stage_iters = std::max(stage_iters, k + 1);
      const double norm = wrms(delta, y, Y);
      if (norm <= kNewtonTol) return true;
      if (k > 0 && norm > 0.9 * prev) return false;  // diverging under stale J
      prev = norm;
    }
    return false;
  };

  // Dense-output bookkeeping.
  res.density.col(0) = initial.rho;
  res.flux.col(0) = initial.phi;
  res.knots.push_back(t0);
  int next_sample = 1;
  const double t_eps = 1e-12 * span;

  Eigen::VectorXd Y2(n), Y3(n), f2(n), f3(n);
  while (t < t1 - t_eps) {
    if (static_cast<int>(res.steps + res.rejected) >= opts.max_steps)
      throw IntegrationError("step budget exhausted", t);
    h = std::min(h, t1 - t);
    if (h < opts.min_step && t1 - t >= opts.min_step)
      throw IntegrationError("step size fell below minimum", t);

    if (!have_jac) refresh_jac();
    if (h_factored != h) {
      lu.compute(Eigen::MatrixXd::Identity(n, n) - h * kDiag * jac);
      h_factored = h;
    }

    bool ok = false;
    double err = 0.0;
    stage_iters = 0;
    try {
      Eigen::VectorXd c2 = y + h * kDiag * f1;
      Y2 = y + kGamma * h * f1;
      ok = solve_stage(t + kGamma * h, c2, Y2);
      if (ok) {
        f2 = (Y2 - c2) / (h * kDiag);
        Eigen::VectorXd c3 = y + h * (kB1 * f1 + kB2 * f2);
        Y3 = y + (Y2 - y) / kGamma;
        ok = solve_stage(t + h, c3, Y3);
        if (ok) {
          f3 = (Y3 - c3) / (h * kDiag);
          const Eigen::VectorXd est = lu.solve(h * (kE1 * f1 + kE2 * f2 + kE3 * f3));
          err = wrms(est, y, Y3);
        }
      }
    } catch (const StateDomainError&) {
      ok = false;  // trial state left the model's domain; shrink the step
    }

    if (!ok) {
      ++res.rejected;
      if (!jac_fresh)
        refresh_jac();
      else
        h *= 0.5;
      continue;
    }
    if (err > 1.0) {
      ++res.rejected;
      h *= std::clamp(0.9 * std::pow(err, -1.0 / 3.0), 0.1, 0.5);
      continue;
    }

    const double t_new = t + h;
    while (next_sample < S && res.times[next_sample] <= t_new + t_eps) {
      const double theta = (res.times[next_sample] - t) / h;
      for (int i = 0; i < n; ++i) {
        const double v = hermite(theta, h, y[i], f1[i], Y3[i], f3[i]);
        if (i < M)
          res.density(i, next_sample) = v;
        else
          res.flux(i - M, next_sample) = v;
      }
      ++next_sample;
    }
    res.knots.push_back(t_new);
    ++res.steps;
    t = t_new;
    y = Y3;
    f1 = f3;  // stiffly accurate: implied end-of-step derivative
    jac_fresh = false;
    if (++jac_age >= 25 || stage_iters >= opts.max_newton - 2) have_jac = false;
    h = std::min(max_step, h * std::clamp(0.9 * std::pow(std::max(err, 1e-10), -1.0 / 3.0),
                                          0.2, 5.0));
  }

  res.final_state = unpack(y);
  res.mass_final = total_mass(res.final_state, boundary(t1), m);

  // Scan the samples for density-bound violations, one record per node/side.
  for (int i = 0; i < M; ++i) {
    const int v = m.demand_vertices[i];
    BoundViolation below{m.vertex_ids[v], 0.0, res.density(i, 0), m.rho_min[v], true};
    BoundViolation above{m.vertex_ids[v], 0.0, res.density(i, 0), m.rho_max[v], false};
    bool has_below = false, has_above = false;
    for (int j = 0; j < S; ++j) {
      const double value = res.density(i, j);
      if (value < m.rho_min[v] - 1e-9) {
        if (!has_below || value < below.worst_value) below.worst_value = value;
        if (!has_below) below.first_time = res.times[j];
        has_below = true;
      }
      if (value > m.rho_max[v] + 1e-9) {
        if (!has_above || value > above.worst_value) above.worst_value = value;
        if (!has_above) above.first_time = res.times[j];
        has_above = true;
      }
    }
    if (has_below) res.violations.push_back(below);
    if (has_above) res.violations.push_back(above);
  }
  std::sort(res.violations.begin(), res.violations.end(),
            [](const BoundViolation& a, const BoundViolation& b) {
              return a.first_time < b.first_time;
            });
  return res;
}

SimulationResult simulate(const RnfOde& ode, const RnfState& initial,
                          const BoundScenario& scenario, const IntegratorOptions& opts) {
  return simulate(
      ode, initial, [&scenario](double t) { return scenario(t); }, 0.0,
      scenario.horizon(), opts);
}

ConsistencyStudy consistency_study(const GasNetwork& base, const Scenario& scenario,
                                   const std::vector<int>& levels,
                                   const IntegratorOptions& opts) {
  if (levels.size() < 2) throw std::invalid_argument("need at least two refinement levels");
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (levels[i] < 1 || (i > 0 && levels[i] <= levels[i - 1]))
      throw std::invalid_argument("refinement levels must be positive and increasing");

  double max_len = 0.0;
  for (const Pipe& p : base.pipes) max_len = std::max(max_len, p.length);

  std::vector<std::string> probes;
  for (const Node& nd : base.nodes)
    if (nd.kind == NodeKind::Demand) probes.push_back(nd.id);

  ConsistencyStudy study;
  study.levels = levels;
  const int S = std::max(2, opts.num_samples);
  std::vector<Eigen::MatrixXd> traces;
  for (int level : levels) {
    const double seg = max_len / level;
    study.segment_max.push_back(seg);
    const RefinedNetwork net = refine(base, seg);
    const NetworkMatrices mats = assemble_matrices(net);
    const RnfOde ode(mats);
    const BoundScenario bound(scenario, net, mats);
    const RnfState start = steady_state(mats, bound(0.0));
    const SimulationResult sim = simulate(ode, start, bound, opts);

    Eigen::MatrixXd trace(probes.size(), S);
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const int ord = mats.demand_ordinal[net.node_lookup.at(probes[p])];
      trace.row(static_cast<Eigen::Index>(p)) = sim.density.row(ord);
    }
    traces.push_back(std::move(trace));
  }

  const double dt = scenario.horizon / (S - 1);
  for (std::size_t l = 0; l + 1 < traces.size(); ++l) {
    const Eigen::MatrixXd diff = traces[l] - traces[l + 1];
    double acc = 0.0;
    for (int j = 0; j < S; ++j) {
      const double w = (j == 0 || j == S - 1) ? dt / 2.0 : dt;
      acc += diff.col(j).squaredNorm() * w;
    }
    study.distances.push_back(std::sqrt(acc));
  }
  for (std::size_t l = 0; l + 1 < study.distances.size(); ++l)
    study.ratios.push_back(study.distances[l] / study.distances[l + 1]);
  return study;
}

}  // namespace gasflow
