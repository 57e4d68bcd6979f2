#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "gasflow/errors.hpp"
#include "gasflow/rnf.hpp"
#include "gasflow/units.hpp"
#include "helpers.hpp"

using namespace gasflow;
using testing::chain_network;
using testing::random_tree;

namespace {

/// Independent steady-state oracle: residuals written directly from the pipe
/// list (nodal flux balance + per-edge momentum drop), dense
/// finite-difference Newton with backtracking, multiple random starts.
struct SteadyOracle {
  const RefinedNetwork& net;
  const BoundaryInput& in;
  int M, E;

  Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
    Eigen::VectorXd F(M + E);
    Eigen::VectorXd rho = x.head(M), phi = x.tail(E);
    for (int u = 0; u < M; ++u) {
      double balance = -in.d[u];
      for (int k = 0; k < E; ++k) {
        if (net.edge_to[k] == net.demand_vertices[u]) balance += phi[k];
        if (net.edge_from[k] == net.demand_vertices[u]) balance -= phi[k];
      }
      F[u] = balance;
    }
    for (int k = 0; k < E; ++k) {
      const Pipe& p = net.pipes[k];
      const double lam = p.length / net.constants.nominal_length;
      const double kap = net.constants.nominal_length * p.friction / p.diameter;
      double a_from = 1.0, a_to = 1.0;
      for (size_t c = 0; c < net.compressors.size(); ++c) {
        if (net.compressors[c].edge != p.id) continue;
        if (net.compressors[c].orientation == Orientation::FromSide)
          a_from = in.alpha[c];
        else
          a_to = in.alpha[c];
      }
      auto density = [&](int v) {
        return net.demand_ordinal[v] >= 0 ? rho[net.demand_ordinal[v]]
                                          : in.s[net.slack_ordinal[v]];
      };
      const double r0 = a_from * density(net.edge_from[k]);
      const double rL = a_to * density(net.edge_to[k]);
      F[M + k] = lam * kap * phi[k] * std::abs(phi[k]) - (r0 * r0 - rL * rL);
    }
    return F;
  }

  bool solve(Eigen::VectorXd& x, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int attempt = 0; attempt < 5; ++attempt) {
      Eigen::VectorXd guess(M + E);
      for (int i = 0; i < M; ++i) guess[i] = in.s.mean() + jitter(rng);
      for (int k = 0; k < E; ++k) guess[M + k] = jitter(rng) * 0.2;
      if (newton(guess)) {
        x = guess;
        return true;
      }
    }
    return false;
  }

  bool newton(Eigen::VectorXd& x) const {
    for (int it = 0; it < 200; ++it) {
      Eigen::VectorXd F = residual(x);
      if (F.lpNorm<Eigen::Infinity>() < 1e-12) return true;
      Eigen::MatrixXd J(M + E, M + E);
      for (int j = 0; j < M + E; ++j) {
        const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (residual(xp) - residual(xm)) / (2.0 * h);
      }
      Eigen::VectorXd step = J.fullPivLu().solve(-F);
      double t = 1.0;
      const double f0 = F.norm();
      bool ok = false;
      for (int cut = 0; cut < 50; ++cut, t *= 0.5) {
        if (residual(x + t * step).norm() < f0 * (1.0 - 1e-4 * t)) {
          x += t * step;
          ok = true;
          break;
        }
      }
      if (!ok) return false;
    }
    return false;
  }
};

BoundaryInput zero_input(const NetworkMatrices& m) {
  BoundaryInput in;
  in.s = Eigen::VectorXd::Zero(m.num_slack);
  in.s_dot = Eigen::VectorXd::Zero(m.num_slack);
  in.d = Eigen::VectorXd::Zero(m.num_demand);
  in.alpha = Eigen::VectorXd::Ones(m.num_compressors());
  return in;
}

}  // namespace

TEST_SUITE_BEGIN("rnf");

TEST_CASE("uniform no-flow state is an equilibrium") {
  NetworkMatrices m = assemble_matrices(refine(chain_network(4, 10.0e3), 10.0e3));
  BoundaryInput in = zero_input(m);
  in.s.setConstant(1.2);
  RnfState st{Eigen::VectorXd::Constant(m.num_demand, 1.2),
              Eigen::VectorXd::Zero(m.num_edges)};
  RnfState dot = rhs(st, in, m);
  CHECK(dot.rho.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(dot.phi.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("two-segment chain matches the hand-expanded component form") {
  // One 20 km pipe split in two: Lambda = 1 per segment, slack - n? - n2.
  GasNetwork base = chain_network(2, 20.0e3);
  NetworkMatrices m = assemble_matrices(refine(base, 10.0e3));
  REQUIRE(m.num_demand == 2);
  REQUIRE(m.num_edges == 2);

  // Demand ordering: original n2 first (input order), then the added node.
  // Map to chain positions: rho1 = interior node, rho2 = far end.
  const int i1 = m.demand_ordinal[m.edge_to[0]];   // interior node (end of seg 1)
  const int i2 = m.demand_ordinal[m.edge_to[1]];   // far node

  BoundaryInput in = zero_input(m);
  const double s = 1.3, sdot = 0.05;
  in.s.setConstant(s);
  in.s_dot.setConstant(sdot);
  in.d[i1] = 0.01;
  in.d[i2] = 0.02;
  RnfState st;
  st.rho = Eigen::VectorXd::Zero(2);
  st.rho[i1] = 1.25;
  st.rho[i2] = 1.20;
  st.phi = Eigen::VectorXd::Zero(2);
  st.phi[0] = 0.03;
  st.phi[1] = -0.01;

  RnfState dot = rhs(st, in, m);

  // Hand expansion with Lambda = 1, K = l*lambda/D:
  //   W = [[2, 1], [1, 1]],  b = [4(phi1 - phi2 - d1) - sdot; 4(phi2 - d2)]
  //   rho1_dot = b1 - b2, rho2_dot = -b1 + 2 b2   (W^{-1} = [[1,-1],[-1,2]])
  //   phi1_dot = -(rho1 - s) - K phi1|phi1|/(s + rho1)
  //   phi2_dot = -(rho2 - rho1) - K phi2|phi2|/(rho1 + rho2)
  const double K = 10.0e3 * 0.01 / 0.9144;
  const double b1 = 4.0 * (st.phi[0] - st.phi[1] - in.d[i1]) - sdot;
  const double b2 = 4.0 * (st.phi[1] - in.d[i2]);
  CHECK(dot.rho[i1] == doctest::Approx(b1 - b2).epsilon(1e-13));
  CHECK(dot.rho[i2] == doctest::Approx(-b1 + 2.0 * b2).epsilon(1e-13));
  const double r1 = st.rho[i1], r2 = st.rho[i2];
  CHECK(dot.phi[0] == doctest::Approx(-(r1 - s) - K * st.phi[0] * std::abs(st.phi[0]) / (s + r1))
                          .epsilon(1e-13));
  CHECK(dot.phi[1] == doctest::Approx(-(r2 - r1) - K * st.phi[1] * std::abs(st.phi[1]) / (r1 + r2))
                          .epsilon(1e-13));
}

TEST_CASE("state jacobian matches finite differences") {
  GasNetwork net = chain_network(4, 20.0e3);
  net.compressors.push_back({"c1", "e1", Orientation::FromSide, 2.0, 0.9});
  NetworkMatrices m = assemble_matrices(refine(net, 10.0e3));
  RnfOde ode(m);

  BoundaryInput in = zero_input(m);
  in.s.setConstant(1.3);
  in.alpha.setConstant(1.4);
  in.d.setConstant(0.005);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> rdist(1.1, 1.4), pdist(-0.05, 0.05);
  RnfState st;
  st.rho.resize(m.num_demand);
  st.phi.resize(m.num_edges);
  for (int i = 0; i < m.num_demand; ++i) st.rho[i] = rdist(rng);
  for (int k = 0; k < m.num_edges; ++k) st.phi[k] = pdist(rng);

  Eigen::MatrixXd J = ode.state_jacobian(st, in);
  const int n = m.num_demand + m.num_edges;
  auto eval = [&](const RnfState& s_) {
    Eigen::VectorXd rd, pd;
    ode.rhs(s_, in, &rd, &pd);
    Eigen::VectorXd out(n);
    out << rd, pd;
    return out;
  };
  for (int j = 0; j < n; ++j) {
    RnfState sp = st, sm = st;
    const double h = 1e-6;
    if (j < m.num_demand) {
      sp.rho[j] += h;
      sm.rho[j] -= h;
    } else {
      sp.phi[j - m.num_demand] += h;
      sm.phi[j - m.num_demand] -= h;
    }
    Eigen::VectorXd fd = (eval(sp) - eval(sm)) / (2.0 * h);
    CHECK((J.col(j) - fd).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("single-edge steady state has the closed form") {
  GasNetwork net = chain_network(2, 10.0e3);
  net.compressors.push_back({"c1", "e1", Orientation::FromSide, 2.0, 0.9});
  NetworkMatrices m = assemble_matrices(refine(net, 10.0e3));

  BoundaryInput in = zero_input(m);
  in.s.setConstant(1.0);
  in.alpha.setConstant(1.3);
  in.d.setConstant(0.04);

  RnfState st = steady_state(m, in);
  const double lamK = m.lambda[0] * m.kappa[0];
  CHECK(st.phi[0] == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(st.rho[0] ==
        doctest::Approx(std::sqrt(1.3 * 1.3 - lamK * 0.04 * 0.04)).epsilon(1e-12));

  // rhs vanishes at the steady state.
  RnfState dot = rhs(st, in, m);
  CHECK(dot.rho.lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(dot.phi.lpNorm<Eigen::Infinity>() < 1e-10);

  // Zero withdrawal degenerates to uniform density at the boosted supply.
  in.d.setConstant(0.0);
  RnfState idle = steady_state(m, in);
  CHECK(idle.phi[0] == doctest::Approx(0.0));
  CHECK(idle.rho[0] == doctest::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("steady state agrees with the dense finite-difference oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> sdist(1.0, 1.4), ddist(-0.015, 0.015),
      adist(1.0, 1.3), unit(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 3 + static_cast<int>(unit(rng) * 4);  // 3..6 nodes
    const int b = unit(rng) < 0.3 ? 2 : 1;
    GasNetwork net = random_tree(rng, n, std::min(b, n - 1));
    if (unit(rng) < 0.5)
      net.compressors.push_back({"c1", net.pipes[0].id,
                                 unit(rng) < 0.5 ? Orientation::FromSide : Orientation::ToSide,
                                 2.0, 0.9});
    RefinedNetwork r = refine(net, 100.0e3);  // no splitting: keep the oracle dense and tiny
    NetworkMatrices m = assemble_matrices(r);

    BoundaryInput in = zero_input(m);
    for (int i = 0; i < m.num_slack; ++i) in.s[i] = sdist(rng);
    for (int i = 0; i < m.num_demand; ++i) in.d[i] = ddist(rng);
    for (int c = 0; c < m.num_compressors(); ++c) in.alpha[c] = adist(rng);

    SteadyOracle oracle{r, in, m.num_demand, m.num_edges};
    Eigen::VectorXd x_oracle;
    if (!oracle.solve(x_oracle, rng)) continue;  // skip unphysical draws
    ++solved;

    RnfState st = steady_state(m, in);
    CHECK((st.rho - x_oracle.head(m.num_demand)).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK((st.phi - x_oracle.tail(m.num_edges)).lpNorm<Eigen::Infinity>() < 1e-8);

    RnfState dot = rhs(st, in, m);
    CHECK(dot.rho.lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(dot.phi.lpNorm<Eigen::Infinity>() < 1e-8);
  }
  CHECK(solved >= 8);  // the draws are tuned so most are physical
}

TEST_CASE("steady state satisfies the dimensional pressure-drop relation") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> sdist(1.1, 1.4), ddist(-0.01, 0.01);
  for (int trial = 0; trial < 5; ++trial) {
    GasNetwork net = random_tree(rng, 6);
    RefinedNetwork r = refine(net, 100.0e3);
    NetworkMatrices m = assemble_matrices(r);
    BoundaryInput in = zero_input(m);
    for (int i = 0; i < m.num_slack; ++i) in.s[i] = sdist(rng);
    for (int i = 0; i < m.num_demand; ++i) in.d[i] = ddist(rng);

    RnfState st = steady_state(m, in);
    auto [rho0, rhoL] = endpoint_densities(st, in, m);
    const GasConstants& c = r.constants;
    for (int k = 0; k < m.num_edges; ++k) {
      // -(lambda ZRT L / D) Phi|Phi| = (p^L)^2 - (p^0)^2 with ZRT = a^2,
      // p = a^2 rho_dim and Phi the dimensional mass flux.
      const Pipe& p = r.pipes[k];
      const double Phi = st.phi[k] * c.flux_scale();
      const double pL = rhoL[k] * c.nominal_density * c.sound_speed * c.sound_speed;
      const double p0 = rho0[k] * c.nominal_density * c.sound_speed * c.sound_speed;
      const double lhs = -(p.friction * c.sound_speed * c.sound_speed * p.length / p.diameter) *
                         Phi * std::abs(Phi);
      const double rhs_val = pL * pL - p0 * p0;
      const double scale = std::max({std::abs(lhs), std::abs(rhs_val), 1.0});
      CHECK(std::abs(lhs - rhs_val) / scale < 1e-8);
    }
  }
}

TEST_CASE("endpoint flux recovery balances withdrawals") {
  GasNetwork net = chain_network(4, 30.0e3);
  net.compressors.push_back({"c1", "e2", Orientation::FromSide, 2.0, 0.9});
  NetworkMatrices m = assemble_matrices(refine(net, 10.0e3));

  BoundaryInput in = zero_input(m);
  in.s.setConstant(1.25);
  in.s_dot.setConstant(-0.003);
  in.alpha.setConstant(1.2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> rdist(1.05, 1.35), pdist(-0.04, 0.04),
      ddist(-0.01, 0.01);
  RnfState st;
  st.rho.resize(m.num_demand);
  st.phi.resize(m.num_edges);
  for (int i = 0; i < m.num_demand; ++i) {
    st.rho[i] = rdist(rng);
    in.d[i] = ddist(rng);
  }
  for (int k = 0; k < m.num_edges; ++k) st.phi[k] = pdist(rng);

  Eigen::VectorXd rho_dot, phi_dot;
  RnfOde(m).rhs(st, in, &rho_dot, &phi_dot);
  auto [phi0, phiL] = recover_endpoint_fluxes(st, rho_dot, in, m);

  // A_L phi^L + A_0 phi^0 = d whenever rho_dot comes from the dynamics.
  Eigen::VectorXd balance = m.A_L * phiL + m.A_0 * phi0 - in.d;
  CHECK(balance.lpNorm<Eigen::Infinity>() < 1e-10);

  // phi is the endpoint average.
  CHECK(((phi0 + phiL) / 2.0 - st.phi).lpNorm<Eigen::Infinity>() < 1e-14);

  // At a steady state the endpoint fluxes coincide with phi.
  BoundaryInput steady_in = in;
  steady_in.s_dot.setZero();
  RnfState ss = steady_state(m, steady_in);
  RnfOde(m).rhs(ss, steady_in, &rho_dot, &phi_dot);
  auto [p0s, pLs] = recover_endpoint_fluxes(ss, rho_dot, steady_in, m);
  CHECK((p0s - ss.phi).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK((pLs - ss.phi).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("line-pack of the uniform state is the total non-dimensional length") {
  NetworkMatrices m = assemble_matrices(refine(chain_network(5, 25.0e3), 10.0e3));
  BoundaryInput in = zero_input(m);
  in.s.setConstant(1.0);
  RnfState st{Eigen::VectorXd::Ones(m.num_demand), Eigen::VectorXd::Zero(m.num_edges)};
  CHECK(total_mass(st, in, m) == doctest::Approx(m.lambda.sum()).epsilon(1e-14));
}

TEST_CASE("friction always opposes the flow") {
  NetworkMatrices m = assemble_matrices(refine(chain_network(3, 15.0e3), 10.0e3));
  BoundaryInput in = zero_input(m);
  in.s.setConstant(1.2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> rdist(1.0, 1.4), pdist(-0.1, 0.1);
  for (int trial = 0; trial < 50; ++trial) {
    RnfState st;
    st.rho.resize(m.num_demand);
    st.phi.resize(m.num_edges);
    for (int i = 0; i < m.num_demand; ++i) st.rho[i] = rdist(rng);
    for (int k = 0; k < m.num_edges; ++k) st.phi[k] = pdist(rng);
    RnfState dot = rhs(st, in, m);

    for (int k = 0; k < m.num_edges; ++k) {
      auto density = [&](int v) {
        return m.demand_ordinal[v] >= 0 ? st.rho[m.demand_ordinal[v]]
                                        : in.s[m.slack_ordinal[v]];
      };
      const double z = -density(m.edge_from[k]) + density(m.edge_to[k]);
      const double friction_term = dot.phi[k] + z / m.lambda[k];
      CHECK(friction_term * st.phi[k] <= 0.0);  // decelerates whatever moves
    }
  }
}

TEST_CASE("collapsing density denominator raises a domain error") {
  NetworkMatrices m = assemble_matrices(refine(chain_network(2, 10.0e3), 10.0e3));
  BoundaryInput in = zero_input(m);
  in.s.setConstant(1.0);
  RnfState st{Eigen::VectorXd::Constant(1, -1.0 + 1e-12), Eigen::VectorXd::Zero(1)};
  CHECK_THROWS_AS(rhs(st, in, m), StateDomainError);
}

TEST_SUITE_END();
