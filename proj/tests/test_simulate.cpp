#include <doctest.h>

#include <cmath>

#include "gasflow/errors.hpp"
#include "gasflow/matrices.hpp"
#include "gasflow/rnf.hpp"
#include "gasflow/scenario.hpp"
#include "gasflow/simulate.hpp"
#include "helpers.hpp"

using namespace gasflow;

namespace {

struct Fixture {
  RefinedNetwork net;
  NetworkMatrices mats;

  explicit Fixture(int nodes = 3, double pipe_len = 20e3, double seg = 10e3)
      : net(refine(testing::chain_network(nodes, pipe_len), seg)),
        mats(assemble_matrices(net)) {}
};

Scenario steady_scenario(double horizon, double withdrawal) {
  Scenario sc;
  sc.horizon = horizon;
  sc.supply["n1"] = Profile::constant(1.2);
  sc.withdrawal["n3"] = Profile::constant(withdrawal);
  return sc;
}

// withdrawal swinging around `base` with one full period over the horizon
Scenario swing_scenario(double horizon, double base, double amp) {
  Scenario sc;
  sc.horizon = horizon;
  sc.supply["n1"] = Profile::constant(1.2);
  std::vector<double> ts, ys;
  for (int i = 0; i <= 12; ++i) {
    ts.push_back(horizon * i / 12.0);
    ys.push_back(base + amp * std::sin(2.0 * M_PI * i / 12.0));
  }
  sc.withdrawal["n3"] = Profile::periodic_spline(ts, ys);
  return sc;
}

}  // namespace

TEST_SUITE_BEGIN("simulate");

TEST_CASE("holds a steady state") {
  const Fixture f;
  const RnfOde ode(f.mats);
  const BoundScenario bound(steady_scenario(500.0, 0.03), f.net, f.mats);
  const RnfState steady = steady_state(f.mats, bound(0.0));
  const SimulationResult res = simulate(ode, steady, bound);

  CHECK((res.final_state.rho - steady.rho).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((res.final_state.phi - steady.phi).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(res.violations.empty());
  CHECK(res.mass_final == doctest::Approx(res.mass_initial).epsilon(1e-6));
  CHECK(res.times.size() == 201);
  CHECK(res.times[0] == 0.0);
  CHECK(res.times[200] == doctest::Approx(500.0));
  CHECK(res.density.col(0).isApprox(steady.rho, 1e-14));
  CHECK(res.steps >= 1);
  CHECK(res.knots.front() == 0.0);
  CHECK(res.knots.back() == doctest::Approx(500.0));
}

TEST_CASE("tightening tolerances converges to a reference") {
  const Fixture f;
  const RnfOde ode(f.mats);
  const BoundScenario bound(swing_scenario(400.0, 0.03, 0.015), f.net, f.mats);
  const RnfState start = steady_state(f.mats, bound(0.0));

  IntegratorOptions ref_opts;
  ref_opts.rtol = 1e-11;
  ref_opts.atol = 1e-13;
  const SimulationResult ref = simulate(ode, start, bound, ref_opts);

  double prev = 1e100;
  for (double rtol : {1e-3, 1e-5, 1e-7}) {
    IntegratorOptions opts;
    opts.rtol = rtol;
    opts.atol = rtol * 1e-2;
    const SimulationResult res = simulate(ode, start, bound, opts);
    const double err = (res.density - ref.density).cwiseAbs().maxCoeff();
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 5e-6);  // the rtol=1e-7 run (dense output limits below that)
}

TEST_CASE("perturbations decay back to steady flow") {
  const Fixture f;
  const RnfOde ode(f.mats);
  const BoundScenario bound(steady_scenario(2000.0, 0.03), f.net, f.mats);
  const RnfState steady = steady_state(f.mats, bound(0.0));

  RnfState kicked = steady;
  kicked.phi *= 1.3;
  kicked.rho.array() += 0.02;
  const double d0 = std::hypot((kicked.rho - steady.rho).norm(),
                               (kicked.phi - steady.phi).norm());
  const SimulationResult res = simulate(ode, kicked, bound);
  const double d1 = std::hypot((res.final_state.rho - steady.rho).norm(),
                               (res.final_state.phi - steady.phi).norm());
  CHECK(d1 < 0.05 * d0);
}

TEST_CASE("flags density bound violations") {
  const Fixture f;
  const RnfOde ode(f.mats);
  // pull hard enough that the far end dips under rho_min = 1.0
  const BoundScenario bound(steady_scenario(800.0, 0.0), f.net, f.mats);
  const RnfState start = steady_state(f.mats, bound(0.0));

  // steady far-end density at d=0.045 is ~0.74: below rho_min=1 yet well clear
  // of vacuum, so the run finishes and reports instead of aborting
  Scenario pull = steady_scenario(800.0, 0.0);
  pull.withdrawal["n3"] = Profile::spline({0.0, 300.0, 800.0}, {0.0, 0.045, 0.045});
  const BoundScenario hard(pull, f.net, f.mats);
  const SimulationResult res = simulate(ode, start, hard);

  REQUIRE(!res.violations.empty());
  bool n3_below = false;
  for (const BoundViolation& v : res.violations) {
    CHECK(v.below);
    CHECK(v.worst_value < v.bound);
    CHECK(v.first_time > 0.0);
    if (v.node == "n3") n3_below = true;
  }
  CHECK(n3_below);
}

TEST_CASE("reports where integration breaks down") {
  const Fixture f;
  const RnfOde ode(f.mats);
  const BoundScenario bound(steady_scenario(400.0, 0.02), f.net, f.mats);
  const RnfState start = steady_state(f.mats, bound(0.0));

  Scenario crush = steady_scenario(400.0, 0.02);
  crush.withdrawal["n3"] = Profile::constant(5.0);  // drains the line
  const BoundScenario lethal(crush, f.net, f.mats);
  try {
    simulate(ode, start, lethal);
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    CHECK(e.last_valid_time >= 0.0);
    CHECK(e.last_valid_time < 400.0);
  }
}

TEST_CASE("spatial refinement self-converges") {
  GasNetwork net = testing::chain_network(2, 50e3);
  Scenario sc;
  sc.horizon = 700.0;
  sc.supply["n1"] = Profile::constant(1.2);
  std::vector<double> ts, ys;
  for (int i = 0; i <= 12; ++i) {
    ts.push_back(sc.horizon * i / 12.0);
    ys.push_back(0.03 + 0.02 * std::sin(2.0 * M_PI * i / 12.0));
  }
  sc.withdrawal["n2"] = Profile::periodic_spline(ts, ys);

  const ConsistencyStudy study = consistency_study(net, sc, {2, 4, 8, 16});
  REQUIRE(study.distances.size() == 3);
  REQUIRE(study.ratios.size() == 2);
  CHECK(study.segment_max[0] == doctest::Approx(25e3));
  CHECK(study.segment_max[3] == doctest::Approx(3125.0));
  for (double d : study.distances) CHECK(d > 0.0);
  for (double r : study.ratios) CHECK(r >= 1.8);
}

TEST_SUITE_END();
