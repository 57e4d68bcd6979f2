#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "gasflow/spectral.hpp"

using namespace gasflow;

namespace {

/// Lagrange basis polynomial through the grid nodes, direct product form
/// (independent of the library's barycentric evaluation).
double lagrange_basis(const Eigen::VectorXd& nodes, int j, double t) {
  double v = 1.0;
  for (int k = 0; k < nodes.size(); ++k)
    if (k != j) v *= (t - nodes[k]) / (nodes[j] - nodes[k]);
  return v;
}

/// Composite Simpson integration of f on [-1, 1].
template <typename F>
double simpson(F f, int intervals) {
  const double h = 2.0 / intervals;
  double sum = f(-1.0) + f(1.0);
  for (int i = 1; i < intervals; ++i) sum += f(-1.0 + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

}  // namespace

TEST_SUITE_BEGIN("spectral");

TEST_CASE("frozen low-order grids") {
  LglGrid g1 = lgl_grid(1);
  CHECK(g1.nodes[0] == doctest::Approx(-1.0));
  CHECK(g1.nodes[1] == doctest::Approx(1.0));
  CHECK(g1.weights[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(g1.weights[1] == doctest::Approx(1.0).epsilon(1e-14));

  LglGrid g2 = lgl_grid(2);
  CHECK(g2.nodes[1] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(g2.weights[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(g2.weights[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(g2.weights[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  // Order 5: interior nodes +-sqrt((7 +- 2 sqrt(7))/21), standard weights.
  LglGrid g5 = lgl_grid(5);
  const double s7 = std::sqrt(7.0);
  CHECK(g5.nodes[1] == doctest::Approx(-std::sqrt((7.0 + 2.0 * s7) / 21.0)).epsilon(1e-13));
  CHECK(g5.nodes[2] == doctest::Approx(-std::sqrt((7.0 - 2.0 * s7) / 21.0)).epsilon(1e-13));
  CHECK(g5.weights[0] == doctest::Approx(1.0 / 15.0).epsilon(1e-13));
  CHECK(g5.weights[1] == doctest::Approx(0.378474956297847).epsilon(1e-12));
  CHECK(g5.weights[2] == doctest::Approx(0.554858377035486).epsilon(1e-12));

  CHECK(lgl_grid(25).nodes.size() == 26);
  CHECK_THROWS_AS(lgl_grid(0), std::invalid_argument);
}

TEST_CASE("grid symmetry, weight sum and corner derivatives") {
  for (int N : {2, 5, 10, 25}) {
    LglGrid g = lgl_grid(N);
    CHECK(g.weights.sum() == doctest::Approx(2.0).epsilon(1e-13));
    for (int i = 0; i <= N; ++i) {
      CHECK(g.nodes[i] == doctest::Approx(-g.nodes[N - i]).epsilon(1e-13));
      CHECK(g.weights[i] == doctest::Approx(g.weights[N - i]).epsilon(1e-12));
    }
    CHECK(g.D(0, 0) == doctest::Approx(-N * (N + 1.0) / 4.0).epsilon(1e-13));
    CHECK(g.D(N, N) == doctest::Approx(N * (N + 1.0) / 4.0).epsilon(1e-13));
    // Row sums vanish: the derivative of a constant is zero.
    CHECK(g.D.rowwise().sum().lpNorm<Eigen::Infinity>() < 1e-10);
    // D annihilates exactly the constants: rank N.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.D);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > 1e-9 * svd.singularValues()[0]) ++rank;
    CHECK(rank == N);
  }
}

TEST_CASE("weights equal the integrals of the Lagrange basis") {
  // Independent oracle: numerically integrate each basis polynomial.
  for (int N : {3, 7}) {
    LglGrid g = lgl_grid(N);
    for (int j = 0; j <= N; ++j) {
      const double integral =
          simpson([&](double t) { return lagrange_basis(g.nodes, j, t); }, 20000);
      CHECK(g.weights[j] == doctest::Approx(integral).epsilon(1e-9));
    }
  }
}

TEST_CASE("quadrature is exact through degree 2N-1") {
  for (int N : {2, 5, 10, 25}) {
    LglGrid g = lgl_grid(N);
    // Monomial integrals: int t^p = 2/(p+1) for even p, 0 for odd.
    for (int p = 0; p <= 2 * N - 1; ++p) {
      Eigen::VectorXd f(N + 1);
      for (int i = 0; i <= N; ++i) f[i] = std::pow(g.nodes[i], p);
      const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
      CHECK(quadrature(g, f) == doctest::Approx(exact).epsilon(1e-12));
    }
  }
  // Degree 2N misses: t^{2N} integrates to 2/(2N+1) but the rule returns
  // strictly more. The defect shrinks rapidly with N, so probe low orders.
  for (int N : {2, 5}) {
    LglGrid g = lgl_grid(N);
    Eigen::VectorXd f(N + 1);
    for (int i = 0; i <= N; ++i) f[i] = std::pow(g.nodes[i], 2 * N);
    CHECK(quadrature(g, f) > 2.0 / (2 * N + 1) + 1e-9);
  }
}

TEST_CASE("differentiation is exact on polynomials up to degree N") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  for (int N : {3, 8, 15}) {
    LglGrid g = lgl_grid(N);
    Eigen::VectorXd c(N + 1);
    for (int k = 0; k <= N; ++k) c[k] = coeff(rng);
    Eigen::VectorXd f(N + 1), df(N + 1);
    for (int i = 0; i <= N; ++i) {
      double v = 0.0, dv = 0.0;
      for (int k = 0; k <= N; ++k) {
        v += c[k] * std::pow(g.nodes[i], k);
        if (k > 0) dv += k * c[k] * std::pow(g.nodes[i], k - 1);
      }
      f[i] = v;
      df[i] = dv;
    }
    CHECK((differentiate(g, f) - df).lpNorm<Eigen::Infinity>() < 1e-10);
  }

  // Spectral accuracy on a smooth non-polynomial.
  LglGrid g = lgl_grid(25);
  Eigen::VectorXd f(26), df(26);
  for (int i = 0; i <= 25; ++i) {
    f[i] = std::cos(M_PI * g.nodes[i]);
    df[i] = -M_PI * std::sin(M_PI * g.nodes[i]);
  }
  CHECK((differentiate(g, f) - df).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("interpolation reproduces nodal data and polynomials") {
  LglGrid g = lgl_grid(9);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  Eigen::VectorXd c(10);
  for (int k = 0; k < 10; ++k) c[k] = coeff(rng);
  auto poly = [&](double t) {
    double v = 0.0;
    for (int k = 0; k < 10; ++k) v += c[k] * std::pow(t, k);
    return v;
  };
  Eigen::VectorXd f(10);
  for (int i = 0; i < 10; ++i) f[i] = poly(g.nodes[i]);

  for (int i = 0; i < 10; ++i) CHECK(interpolate(g, f, g.nodes[i]) == doctest::Approx(f[i]));
  std::uniform_real_distribution<double> tdist(-1.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const double t = tdist(rng);
    CHECK(interpolate(g, f, t) == doctest::Approx(poly(t)).epsilon(1e-10));
  }
}

TEST_CASE("reference time map round trips") {
  const double T = 3265.7;
  CHECK(to_reference_time(0.0, T) == doctest::Approx(-1.0));
  CHECK(to_reference_time(T, T) == doctest::Approx(1.0));
  for (double t : {0.0, 0.3 * T, 0.77 * T, T})
    CHECK(from_reference_time(to_reference_time(t, T), T) == doctest::Approx(t).epsilon(1e-14));
}

TEST_SUITE_END();
