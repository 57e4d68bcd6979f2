#include "gasflow/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gasflow {

void legendre(int N, double t, double* value, double* derivative) {
  double pm1 = 1.0, p = t;
  if (N == 0) {
    if (value) *value = 1.0;
    if (derivative) *derivative = 0.0;
    return;
  }
  for (int k = 1; k < N; ++k) {
    const double next = ((2 * k + 1) * t * p - k * pm1) / (k + 1);
    pm1 = p;
    p = next;
  }
  if (value) *value = p;
  if (derivative) {
    const double denom = t * t - 1.0;
    if (std::abs(denom) < 1e-12) {
      // L_N'(1) = N(N+1)/2 and L_N'(-1) = (-1)^{N-1} N(N+1)/2.
      const double mag = N * (N + 1) / 2.0;
      *derivative = t > 0 ? mag : (N % 2 ? mag : -mag);
    } else {
      // (t^2 - 1) L_N' = N (t L_N - L_{N-1}).
      *derivative = N * (t * p - pm1) / denom;
    }
  }
}

LglGrid lgl_grid(int N) {
  if (N < 1) throw std::invalid_argument("grid order must be at least 1");
  LglGrid g;
  g.order = N;
  g.nodes.resize(N + 1);
  g.nodes[0] = -1.0;
  g.nodes[N] = 1.0;

  // Interior nodes: roots of L_N', Newton from Chebyshev-Lobatto guesses.
  for (int i = 1; i < N; ++i) {
    double t = -std::cos(std::numbers::pi * i / N);
    for (int iter = 0; iter < 100; ++iter) {
      double LN, dLN;
      legendre(N, t, &LN, &dLN);
      // L_N'' from the Legendre equation: (1-t^2) L'' - 2 t L' + N(N+1) L = 0.
      const double d2 = (2.0 * t * dLN - N * (N + 1.0) * LN) / (1.0 - t * t);
      const double step = dLN / d2;
      t -= step;
      if (std::abs(step) < 1e-14) break;
    }
    g.nodes[i] = t;
  }
  for (int i = 0; i < N; ++i)
    if (!(g.nodes[i] < g.nodes[i + 1]))
      throw std::runtime_error("LGL node computation failed to separate roots");

  g.weights.resize(N + 1);
  Eigen::VectorXd LN_at(N + 1);
  for (int i = 0; i <= N; ++i) {
    double LN;
    legendre(N, g.nodes[i], &LN, nullptr);
    LN_at[i] = LN;
    g.weights[i] = 2.0 / (N * (N + 1.0) * LN * LN);
  }

  g.D = Eigen::MatrixXd::Zero(N + 1, N + 1);
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      if (i != j) g.D(i, j) = LN_at[i] / (LN_at[j] * (g.nodes[i] - g.nodes[j]));
  g.D(0, 0) = -N * (N + 1.0) / 4.0;
  g.D(N, N) = N * (N + 1.0) / 4.0;
  return g;
}

double quadrature(const LglGrid& grid, const Eigen::VectorXd& samples) {
  if (samples.size() != grid.weights.size())
    throw std::invalid_argument("sample count does not match grid");
  return grid.weights.dot(samples);
}

Eigen::VectorXd differentiate(const LglGrid& grid, const Eigen::VectorXd& samples) {
  if (samples.size() != grid.nodes.size())
    throw std::invalid_argument("sample count does not match grid");
  return grid.D * samples;
}

double interpolate(const LglGrid& grid, const Eigen::VectorXd& samples, double t) {
  const int n = static_cast<int>(grid.nodes.size());
  if (samples.size() != n) throw std::invalid_argument("sample count does not match grid");

  // Barycentric weights 1/prod(t_j - t_k); rescaled, so only ratios matter.
  Eigen::VectorXd bary(n);
  for (int j = 0; j < n; ++j) {
    double w = 1.0;
    for (int k = 0; k < n; ++k)
      if (k != j) w *= grid.nodes[j] - grid.nodes[k];
    bary[j] = 1.0 / w;
  }
  double num = 0.0, den = 0.0;
  for (int j = 0; j < n; ++j) {
    const double diff = t - grid.nodes[j];
    if (std::abs(diff) < 1e-14) return samples[j];
    const double c = bary[j] / diff;
    num += c * samples[j];
    den += c;
  }
  return num / den;
}

double to_reference_time(double t, double horizon) { return (2.0 * t - horizon) / horizon; }

double from_reference_time(double t_ref, double horizon) { return horizon * (t_ref + 1.0) / 2.0; }

}  // namespace gasflow
