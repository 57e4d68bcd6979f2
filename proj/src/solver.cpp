#include "gasflow/solver.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <random>

#include "gasflow/errors.hpp"

namespace gasflow {
namespace {

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
}

// The NLP lifted to z = [x; s]: every general constraint row becomes an
// equality, c_i(x) - s_k = 0 for range rows and c_i(x) - cl_i = 0 for
// equality rows, so only simple bounds remain as inequalities.
struct Lifted {
  const NlpProblem* nlp;
  int n = 0;   // original variables
  int m = 0;   // constraint rows
  int ni = 0;  // rows carrying a slack
  std::vector<int> slack_of_row;  // -1 on equality rows
  Eigen::VectorXd eq_shift;       // cl on equality rows, 0 elsewhere
  Eigen::VectorXd lo, hi;         // bounds on z
  SparsityPattern jac;            // pattern of dc_hat/dz (x block then slacks)
  std::vector<int> lo_idx, hi_idx;
  // Internal row equilibration: rows are divided by their initial Jacobian
  // magnitude so constraint and objective scales are comparable, which keeps
  // the multiplier estimates (and the fixed dual regularization) well sized.
  Eigen::VectorXd row_scale;

  explicit Lifted(const NlpProblem& p) : nlp(&p) {
    n = p.num_vars();
    m = p.num_cons();
    Eigen::VectorXd cl, cu, xl, xu;
    p.constraint_bounds(&cl, &cu);
    p.variable_bounds(&xl, &xu);

    slack_of_row.assign(m, -1);
    eq_shift = Eigen::VectorXd::Zero(m);
    std::vector<double> slo, shi;
    for (int r = 0; r < m; ++r) {
      if (cl[r] == cu[r]) {
        eq_shift[r] = cl[r];
      } else {
        slack_of_row[r] = ni++;
        slo.push_back(cl[r]);
        shi.push_back(cu[r]);
      }
    }

    lo.resize(n + ni);
    hi.resize(n + ni);
    lo.head(n) = xl;
    hi.head(n) = xu;
    for (int k = 0; k < ni; ++k) {
      lo[n + k] = slo[k];
      hi[n + k] = shi[k];
    }
    // A degenerate box pins the variable; widen infinitesimally so the
    // barrier machinery can hold it there instead of dividing by zero.
    for (int j = 0; j < n + ni; ++j) {
      if (std::isfinite(lo[j]) && lo[j] == hi[j]) {
        lo[j] -= 1e-12;
        hi[j] += 1e-12;
      }
      if (std::isfinite(lo[j])) lo_idx.push_back(j);
      if (std::isfinite(hi[j])) hi_idx.push_back(j);
    }

    jac = p.jacobian_pattern();
    for (int r = 0; r < m; ++r)
      if (slack_of_row[r] >= 0) {
        jac.rows.push_back(r);
        jac.cols.push_back(n + slack_of_row[r]);
      }
    row_scale = Eigen::VectorXd::Ones(m);
  }

  void equilibrate_rows(const Eigen::VectorXd& z) {
    Eigen::VectorXd g0, jv0;
    if (!eval_gj(z, &g0, &jv0)) return;  // keep unit scales
    Eigen::VectorXd mx = Eigen::VectorXd::Zero(m);
    for (std::size_t e = 0; e < jac.size(); ++e) {
      const int r = jac.rows[e];
      mx[r] = std::max(mx[r], std::abs(jv0[static_cast<Eigen::Index>(e)]));
    }
    row_scale = mx.cwiseMax(1.0);
  }

  int nz() const { return n + ni; }

  bool eval_fc(const Eigen::VectorXd& z, double* f, Eigen::VectorXd* c) const {
    try {
      const Eigen::VectorXd x = z.head(n);
      *f = nlp->objective(x);
      Eigen::VectorXd cx;
      nlp->constraints(x, &cx);
      *c = cx - eq_shift;
      for (int r = 0; r < m; ++r) {
        if (slack_of_row[r] >= 0) (*c)[r] -= z[n + slack_of_row[r]];
        (*c)[r] /= row_scale[r];
      }
      return std::isfinite(*f) && c->allFinite();
    } catch (const std::exception&) {
      return false;
    }
  }

  bool eval_gj(const Eigen::VectorXd& z, Eigen::VectorXd* g,
               Eigen::VectorXd* jv) const {
    try {
      const Eigen::VectorXd x = z.head(n);
      Eigen::VectorXd gx, jx;
      nlp->objective_gradient(x, &gx);
      nlp->jacobian_values(x, &jx);
      g->setZero(nz());
      g->head(n) = gx;
      jv->resize(static_cast<Eigen::Index>(jac.size()));
      jv->head(jx.size()) = jx;
      jv->tail(ni).setConstant(-1.0);
      for (std::size_t e = 0; e < jac.size(); ++e)
        (*jv)[static_cast<Eigen::Index>(e)] /= row_scale[jac.rows[e]];
      return g->allFinite() && jv->allFinite();
    } catch (const std::exception&) {
      return false;
    }
  }

  Eigen::VectorXd jac_transpose_times(const Eigen::VectorXd& jv,
                                      const Eigen::VectorXd& y) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(nz());
    for (std::size_t e = 0; e < jac.size(); ++e)
      out[jac.cols[e]] += jv[static_cast<Eigen::Index>(e)] * y[jac.rows[e]];
    return out;
  }

  Eigen::VectorXd jac_times(const Eigen::VectorXd& jv,
                            const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
    for (std::size_t e = 0; e < jac.size(); ++e)
      out[jac.rows[e]] += jv[static_cast<Eigen::Index>(e)] * v[jac.cols[e]];
    return out;
  }
};

struct Evaluation {
  double f = 0.0;
  Eigen::VectorXd c, g, jv;
};

// Damped limited-memory BFGS of the Lagrangian Hessian in compact form
// B = sigma*I - Phi * M^{-1} * Phi^T, kept positive definite by Powell
// damping so the low-rank correction can ride on a quasidefinite base.
struct Lbfgs {
  int mem = 8;
  double sigma = 1.0;
  std::deque<Eigen::VectorXd> S, Y;
  Eigen::MatrixXd Phi, M;
  Eigen::PartialPivLU<Eigen::MatrixXd> Mlu;

  bool empty() const { return S.empty(); }

  void reset() {
    S.clear();
    Y.clear();
    sigma = 1.0;
  }

  void rebuild() {
    const int k = static_cast<int>(S.size());
    if (k == 0) return;
    const Eigen::Index nz = S.front().size();
    Phi.resize(nz, 2 * k);
    for (int i = 0; i < k; ++i) {
      Phi.col(i) = sigma * S[static_cast<std::size_t>(i)];
      Phi.col(k + i) = Y[static_cast<std::size_t>(i)];
    }
    M.setZero(2 * k, 2 * k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        const double ss =
            S[static_cast<std::size_t>(i)].dot(S[static_cast<std::size_t>(j)]);
        M(i, j) = sigma * ss;
        const double sy =
            S[static_cast<std::size_t>(i)].dot(Y[static_cast<std::size_t>(j)]);
        if (i > j) {  // strictly lower triangle L and its transpose
          M(i, k + j) = sy;
          M(k + j, i) = sy;
        }
        if (i == j) M(k + i, k + j) = -sy;  // -D
      }
    Mlu.compute(M);
  }

  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd r = sigma * v;
    if (!S.empty()) r.noalias() -= Phi * Mlu.solve(Phi.transpose() * v);
    return r;
  }

  void update(const Eigen::VectorXd& s, Eigen::VectorXd y) {
    const double ss = s.squaredNorm();
    if (!(ss > 1e-28) || !y.allFinite()) return;
    const Eigen::VectorXd Bs = multiply(s);
    const double sBs = s.dot(Bs);
    double sy = s.dot(y);
    if (sy < 0.2 * sBs) {  // Powell damping keeps B positive definite
      const double theta = 0.8 * sBs / (sBs - sy);
      y = theta * y + (1.0 - theta) * Bs;
      sy = s.dot(y);
    }
    if (!(sy > 1e-12 * std::sqrt(ss) * y.norm())) return;
    S.push_back(s);
    Y.push_back(std::move(y));
    while (static_cast<int>(S.size()) > mem) {
      S.pop_front();
      Y.pop_front();
    }
    sigma = std::clamp(Y.back().squaredNorm() / sy, 1e-6, 1e6);
    rebuild();
  }
};

// Quasidefinite base matrix [diag1, J^T; J, -diag2*I] factored once per
// iteration; the quasi-Newton low rank part is applied via the
// Sherman-Morrison-Woodbury identity on top of it.
struct KktFactor {
  const Lifted* lift;
  Eigen::SparseMatrix<double> K;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt;
  bool analyzed = false;

  explicit KktFactor(const Lifted& l) : lift(&l) {}

  void assemble(const Eigen::VectorXd& diag1, const Eigen::VectorXd& jv,
                double diag2) {
    const int nz = lift->nz(), m = lift->m;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(nz + m) + lift->jac.size());
    for (int j = 0; j < nz; ++j) trips.emplace_back(j, j, diag1[j]);
    for (std::size_t e = 0; e < lift->jac.size(); ++e)
      trips.emplace_back(nz + lift->jac.rows[e], lift->jac.cols[e],
                         jv[static_cast<Eigen::Index>(e)]);
    for (int r = 0; r < m; ++r)
      trips.emplace_back(nz + r, nz + r, -diag2);
    K.resize(nz + m, nz + m);
    K.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      ldlt.analyzePattern(K);
      analyzed = true;
    }
  }

  // Factorize and verify quasidefinite inertia: exactly m negative pivots.
  bool factorize() {
    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success) return false;
    const auto& d = ldlt.vectorD();
    int neg = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (!std::isfinite(d[i]) || d[i] == 0.0) return false;
      if (d[i] < 0.0) ++neg;
    }
    return neg == lift->m;
  }

  Eigen::VectorXd apply(const Lbfgs& B, const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = K.selfadjointView<Eigen::Lower>() * v;
    if (!B.empty()) {
      const Eigen::VectorXd t =
          B.Mlu.solve(B.Phi.transpose() * v.head(lift->nz()));
      out.head(lift->nz()).noalias() -= B.Phi * t;
    }
    return out;
  }

  // Solve (K - PhiHat M^{-1} PhiHat^T) d = r with one refinement sweep.
  Eigen::VectorXd solve(const Lbfgs& B, const Eigen::VectorXd& r) const {
    const int nz = lift->nz(), m = lift->m;
    auto base_solve = [&](const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
      Eigen::VectorXd u = ldlt.solve(rhs);
      if (!B.empty()) {
        const int k2 = static_cast<int>(B.Phi.cols());
        Eigen::MatrixXd G(nz + m, k2);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(nz + m);
        for (int j = 0; j < k2; ++j) {
          e.head(nz) = B.Phi.col(j);
          G.col(j) = ldlt.solve(e);
        }
        const Eigen::MatrixXd inner = B.M - B.Phi.transpose() * G.topRows(nz);
        const Eigen::VectorXd t = B.Phi.transpose() * u.head(nz);
        u += G * inner.lu().solve(t);
      }
      return u;
    };
    Eigen::VectorXd d = base_solve(r);
    d += base_solve(r - apply(B, d));
    return d;
  }
};

double fraction_to_boundary(const Lifted& L, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& dz, double tau) {
  double alpha = 1.0;
  for (int j : L.lo_idx)
    if (dz[j] < 0.0) alpha = std::min(alpha, -tau * (z[j] - L.lo[j]) / dz[j]);
  for (int j : L.hi_idx)
    if (dz[j] > 0.0) alpha = std::min(alpha, tau * (L.hi[j] - z[j]) / dz[j]);
  return alpha;
}

double dual_fraction_to_boundary(const std::vector<int>& idx,
                                 const Eigen::VectorXd& w,
                                 const Eigen::VectorXd& dw, double tau) {
  double alpha = 1.0;
  for (int j : idx)
    if (dw[j] < 0.0) alpha = std::min(alpha, -tau * w[j] / dw[j]);
  return alpha;
}

void push_interior(const Lifted& L, Eigen::VectorXd* z) {
  for (int j = 0; j < L.nz(); ++j) {
    const bool fl = std::isfinite(L.lo[j]), fh = std::isfinite(L.hi[j]);
    if (fl && fh) {
      const double range = L.hi[j] - L.lo[j];
      const double pl = std::min(0.01 * std::max(1.0, std::abs(L.lo[j])),
                                 0.01 * range);
      const double pu = std::min(0.01 * std::max(1.0, std::abs(L.hi[j])),
                                 0.01 * range);
      (*z)[j] = std::clamp((*z)[j], L.lo[j] + pl, L.hi[j] - pu);
    } else if (fl) {
      (*z)[j] = std::max((*z)[j], L.lo[j] + 0.01 * std::max(1.0, std::abs(L.lo[j])));
    } else if (fh) {
      (*z)[j] = std::min((*z)[j], L.hi[j] - 0.01 * std::max(1.0, std::abs(L.hi[j])));
    }
  }
}

double barrier_value(const Lifted& L, const Eigen::VectorXd& z, double mu) {
  double b = 0.0;
  for (int j : L.lo_idx) b -= std::log(z[j] - L.lo[j]);
  for (int j : L.hi_idx) b -= std::log(L.hi[j] - z[j]);
  return mu * b;
}

// Gauss-Newton / Levenberg-Marquardt descent on 0.5*||c||^2 over the strict
// interior of the box. `target` is measured in the caller's original
// constraint units (before row equilibration) so that success here lines up
// with the violation the caller reports. Returns true when the violation
// reaches `target`; false signals a stall, i.e. a (local) infeasibility
// certificate.
bool restore_feasibility(const Lifted& L, KktFactor& kkt, Eigen::VectorXd* z,
                         double target, int max_iter,
                         std::ostream* log = nullptr) {
  double delta = 1e-4;
  double f = 0.0;
  Eigen::VectorXd c, g, jv;
  if (!L.eval_fc(*z, &f, &c) || !L.eval_gj(*z, &g, &jv)) return false;

  // Progress is judged over a window: near-dependent rows shrink through
  // curvature only, a fraction of a percent per step, so a per-iteration
  // guard would quit during a legitimate slow crawl.
  double window_best = inf_norm(c);
  for (int it = 0; it < max_iter; ++it) {
    const double vi = inf_norm(c);
    if (vi <= target) return true;
    if (it % 25 == 24) {
      if (vi > (1.0 - 1e-3) * window_best) {
        if (log)  // TEMPDBG
          (*log) << "[rst] flatline it=" << it << " vo=" << vi << "\n";
        return false;  // violation has flatlined: local infeasibility evidence
      }
      window_best = vi;
    }
    const Eigen::VectorXd grad = L.jac_transpose_times(jv, c);
    // projected-gradient stall test: components pushing into a near-active
    // bound cannot produce progress and are discounted. The threshold must be
    // far below the violation scale: nearly dependent constraint rows produce
    // legitimately tiny gradients long before the residual is minimized.
    Eigen::VectorXd pg = grad;
    for (int j : L.lo_idx)
      if ((*z)[j] - L.lo[j] < 1e-8 && pg[j] > 0.0) pg[j] = 0.0;
    for (int j : L.hi_idx)
      if (L.hi[j] - (*z)[j] < 1e-8 && pg[j] < 0.0) pg[j] = 0.0;
    if (inf_norm(pg) <= 1e-12 * std::max(1.0, vi)) {
      if (log)  // TEMPDBG
        (*log) << "[rst] pg-stall it=" << it << " vo=" << vi << "\n";
      return false;
    }

    bool stepped = false;
    while (delta <= 1e8) {
      kkt.assemble(Eigen::VectorXd::Constant(L.nz(), delta), jv, 1.0);
      if (!kkt.factorize()) {
        delta *= 10.0;
        continue;
      }
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(L.nz() + L.m);
      rhs.tail(L.m) = -c;
      static const Lbfgs kNoCurvature;  // pure Gauss-Newton step
      Eigen::VectorXd d = kkt.solve(kNoCurvature, rhs).head(L.nz());
      double alpha_cap = std::min(1.0, fraction_to_boundary(L, *z, d, 0.99));
      if (alpha_cap < 0.01) {
        // The raw step is strangled by a nearly active bound. Drop the
        // blocked components and move within the remaining face; feasibility
        // frequently lies along an active bound and is unreachable otherwise.
        for (int j : L.lo_idx)
          if (d[j] < 0.0 && (*z)[j] - L.lo[j] < -0.03 * d[j]) d[j] = 0.0;
        for (int j : L.hi_idx)
          if (d[j] > 0.0 && L.hi[j] - (*z)[j] < 0.03 * d[j]) d[j] = 0.0;
        alpha_cap = std::min(1.0, fraction_to_boundary(L, *z, d, 0.99));
      }
      const double slope = d.dot(grad);
      if (!(slope < 0.0)) {
        delta *= 10.0;
        continue;
      }
      double alpha = alpha_cap;
      const double h0 = 0.5 * c.squaredNorm();
      bool accepted = false;
      while (alpha > 1e-12) {
        const Eigen::VectorXd trial = *z + alpha * d;
        double ft;
        Eigen::VectorXd ct;
        if (L.eval_fc(trial, &ft, &ct) &&
            0.5 * ct.squaredNorm() <= h0 + 1e-4 * alpha * slope) {
          *z = trial;
          c = ct;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (accepted) {
        if (!L.eval_gj(*z, &g, &jv)) return false;
        delta = std::max(1e-10, delta / 3.0);
        stepped = true;
        if (log && it % 5 == 0)  // TEMPDBG
          (*log) << "[rst] it=" << it << " v=" << inf_norm(c)
                 << " delta=" << delta << " alpha=" << alpha
                 << " dn=" << inf_norm(d) << "\n";
        break;
      }
      delta *= 10.0;
    }
    if (!stepped) {
      if (log)  // TEMPDBG
        (*log) << "[rst] no-descent it=" << it << " v=" << inf_norm(c)
               << " delta=" << delta << "\n";
      return false;  // no descent possible; stalled
    }
  }
  return inf_norm(c) <= target;
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIterations: return "max-iter";
    case SolveStatus::InfeasibleDetected: return "infeasible-detected";
    case SolveStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

double KktBreakdown::overall() const {
  return std::max({stationarity, feasibility, complementarity});
}

SolveResult solve(const NlpProblem& nlp, const SolverConfig& config,
                  const Eigen::VectorXd& init) {
  if (!(config.kkt_tolerance > 0.0) || !(config.constraint_tolerance > 0.0))
    throw ValidationError("solver tolerances must be positive");
  if (config.max_iterations < 1)
    throw ValidationError("solver needs at least one iteration");
  if (init.size() != nlp.num_vars())
    throw ValidationError("initial point has wrong dimension");

  const auto t_start = std::chrono::steady_clock::now();
  Lifted L(nlp);
  const int nz = L.nz(), m = L.m;
  KktFactor kkt(L);
  Lbfgs bfgs;
  bfgs.mem = std::max(1, config.quasi_newton_memory);

  SolveResult res;
  res.x = init;

  // Initial interior point: original variables from init, slacks from the
  // constraint values, everything pushed strictly inside the box.
  Eigen::VectorXd z(nz);
  z.head(L.n) = init;
  z.tail(L.ni).setZero();
  push_interior(L, &z);
  L.equilibrate_rows(z);
  {
    // seed each slack with its row's constraint value, then push inside
    double f0;
    Eigen::VectorXd c0;
    if (L.eval_fc(z, &f0, &c0)) {
      for (int r = 0; r < m; ++r)
        if (L.slack_of_row[r] >= 0)
          z[L.n + L.slack_of_row[r]] += c0[r] * L.row_scale[r];
    }
    push_interior(L, &z);
  }

  Evaluation cur;
  if (!L.eval_fc(z, &cur.f, &cur.c) || !L.eval_gj(z, &cur.g, &cur.jv)) {
    res.status = SolveStatus::NumericalFailure;
    res.message = "problem functions not evaluable at the initial point";
    res.x = z.head(L.n);
    return res;
  }

  double mu = config.initial_barrier;
  const double mu_floor = config.kkt_tolerance / 100.0;
  double delta_w = 0.0;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd wl = Eigen::VectorXd::Zero(nz), wu = Eigen::VectorXd::Zero(nz);
  for (int j : L.lo_idx) wl[j] = mu / (z[j] - L.lo[j]);
  for (int j : L.hi_idx) wu[j] = mu / (L.hi[j] - z[j]);

  int phase = 0, ls_failures = 0, clean_steps = 0, restorations = 0;
  int mu_stall = 0;
  double last_step = 0.0;
  double theta_rescue = std::numeric_limits<double>::infinity();
  res.status = SolveStatus::MaxIterations;
  res.message = "iteration limit reached";

  // Two-measure filter over (theta, phi) = (scaled l1 infeasibility, barrier
  // objective). An entry marks the corner of a forbidden half-open region;
  // trial points dominating no entry are acceptable. Margins follow the
  // standard filter line-search parameterization.
  constexpr double kGammaTheta = 1e-5, kGammaPhi = 1e-5;
  constexpr double kSTheta = 1.1, kSPhi = 2.3, kDeltaSw = 1.0, kEtaPhi = 1e-8;
  std::vector<std::pair<double, double>> filter;
  const auto reset_filter = [&]() {
    filter.clear();
    filter.emplace_back(1e4 * std::max(1.0, cur.c.lpNorm<1>()),
                        -std::numeric_limits<double>::infinity());
  };
  const auto augment_filter = [&](double th, double ph) {
    const double t_new = (1.0 - kGammaTheta) * th;
    const double f_new = ph - kGammaPhi * th;
    filter.erase(std::remove_if(filter.begin(), filter.end(),
                                [&](const std::pair<double, double>& e) {
                                  return e.first >= t_new && e.second >= f_new;
                                }),
                 filter.end());
    filter.emplace_back(t_new, f_new);
  };
  reset_filter();

  int iter = 0;
  for (; iter < config.max_iterations; ++iter) {
    const Eigen::VectorXd jt_lambda = L.jac_transpose_times(cur.jv, lambda);
    const Eigen::VectorXd r_dual = cur.g + jt_lambda - wl + wu;
    double comp0 = 0.0, comp_mu = 0.0;
    for (int j : L.lo_idx) {
      const double gw = (z[j] - L.lo[j]) * wl[j];
      comp0 = std::max(comp0, std::abs(gw));
      comp_mu = std::max(comp_mu, std::abs(gw - mu));
    }
    for (int j : L.hi_idx) {
      const double gw = (L.hi[j] - z[j]) * wu[j];
      comp0 = std::max(comp0, std::abs(gw));
      comp_mu = std::max(comp_mu, std::abs(gw - mu));
    }
    const double viol = inf_norm(cur.c);
    // Scaled optimality measures: stationarity and complementarity are judged
    // relative to the average multiplier magnitude, so that problems whose
    // constraint qualification degenerates at the solution (and whose true
    // multipliers are therefore huge) remain terminable.
    const double nb = double(L.lo_idx.size() + L.hi_idx.size());
    const double mult_mass = lambda.lpNorm<1>() + wl.lpNorm<1>() + wu.lpNorm<1>();
    const double s_d =
        std::max(100.0, mult_mass / std::max(1.0, double(m) + nb)) / 100.0;
    const double s_c =
        std::max(100.0, (wl.lpNorm<1>() + wu.lpNorm<1>()) / std::max(1.0, nb)) /
        100.0;
    const double e0 = std::max({inf_norm(r_dual) / s_d, viol, comp0 / s_c});
    const double e_mu =
        std::max({inf_norm(r_dual) / s_d, viol, comp_mu / s_c});

    IterationRecord rec;
    rec.iter = iter;
    rec.phase = phase;
    rec.barrier = mu;
    rec.theta = cur.c.lpNorm<1>();
    rec.objective = cur.f;
    rec.violation = viol;
    rec.kkt = e0;
    rec.step = last_step;
    rec.merit = cur.f + barrier_value(L, z, mu);
    res.history.push_back(rec);
    if (config.log)
      (*config.log) << "iter " << iter << " obj " << cur.f << " viol "
                    << viol << " kkt " << e0 << " step " << last_step
                    << " mu " << mu << " | stat=" << inf_norm(r_dual) / s_d
                    << " cs=" << viol << " comp=" << comp0 / s_c
                    << " sd=" << s_d << " lmax=" << inf_norm(lambda) << '\n';

    if (e0 <= config.kkt_tolerance && viol <= config.constraint_tolerance) {
      res.status = SolveStatus::Optimal;
      res.message = "first-order optimality reached";
      break;
    }
    if (e_mu <= 10.0 * mu && mu > mu_floor) {
      mu = std::max(mu_floor, std::min(config.barrier_shrink * mu,
                                       std::pow(mu, config.barrier_power)));
      mu_stall = 0;
      reset_filter();
      continue;
    }
    // A barrier subproblem does not need to be solved to full accuracy for
    // the continuation to work; force the barrier down when one stalls, but
    // never below the scale of the current infeasibility (the barrier must
    // not outrun the constraints, or the boundary clamps every step).
    if (mu > mu_floor && mu > 0.1 * viol && ++mu_stall >= 30) {
      mu = std::max({mu_floor, 0.1 * viol, config.barrier_shrink * mu});
      mu_stall = 0;
      reset_filter();
    }

    // Assemble and factor the regularized KKT base matrix. The dual
    // regularization tracks the current infeasibility: on problems whose
    // equality rows become dependent at the solution, a fixed tiny value
    // would convert the irreducible residual along the dependent directions
    // into a multiplier increment of c_null / delta_c every iteration, an
    // unbounded ratchet that destroys the Lagrangian model. Tying delta_c to
    // ||c|| keeps that increment O(1) without biasing the step.
    const double delta_c = std::max(1e-8, std::min(1e-4, viol));
    Eigen::VectorXd diag1 = Eigen::VectorXd::Constant(nz, bfgs.sigma + delta_w);
    for (int j : L.lo_idx) diag1[j] += wl[j] / (z[j] - L.lo[j]);
    for (int j : L.hi_idx) diag1[j] += wu[j] / (L.hi[j] - z[j]);
    bool factored = false;
    while (true) {
      kkt.assemble(diag1, cur.jv, delta_c);
      if (kkt.factorize()) {
        factored = true;
        break;
      }
      const double bump = delta_w == 0.0 ? 1e-8 : delta_w * 10.0;
      diag1.array() += bump - delta_w;
      delta_w = bump;
      bfgs.reset();
      if (delta_w > 1e10) break;
    }
    if (!factored) {
      res.status = SolveStatus::NumericalFailure;
      res.message = "KKT factorization failed despite regularization";
      break;
    }

    // When stationarity lags far behind the barrier target, refresh the
    // equality multipliers with an absolute least-squares estimate from the
    // factored system (adopted only if it actually reduces the dual residual).
    // Incremental dlambda updates converge too slowly when the degenerate
    // rows demand very large multipliers.
    Eigen::VectorXd lambda_work = lambda;
    if (m > 0 && inf_norm(r_dual) / s_d > 10.0 * mu) {
      Eigen::VectorXd rhs_ls(nz + m);
      rhs_ls.head(nz) = -(cur.g - wl + wu);
      rhs_ls.tail(m).setZero();
      const Eigen::VectorXd lam_cand = kkt.solve(bfgs, rhs_ls).tail(m);
      if (lam_cand.allFinite()) {
        const Eigen::VectorXd r_cand =
            cur.g + L.jac_transpose_times(cur.jv, lam_cand) - wl + wu;
        if (inf_norm(r_cand) < 0.9 * inf_norm(r_dual)) lambda_work = lam_cand;
      }
    }

    Eigen::VectorXd rhs(nz + m);
    rhs.head(nz) = -(cur.g + L.jac_transpose_times(cur.jv, lambda_work));
    for (int j : L.lo_idx) rhs[j] += mu / (z[j] - L.lo[j]);
    for (int j : L.hi_idx) rhs[j] -= mu / (L.hi[j] - z[j]);
    rhs.tail(m) = -cur.c;
    const Eigen::VectorXd sol = kkt.solve(bfgs, rhs);
    Eigen::VectorXd dz = sol.head(nz);
    Eigen::VectorXd dlambda = sol.tail(m);
    if (!dz.allFinite() || !dlambda.allFinite()) {
      res.status = SolveStatus::NumericalFailure;
      res.message = "search direction overflowed";
      break;
    }

    // A single multiplier update must not run away along nearly dependent
    // constraint rows; preserve the direction and let later iterations extend
    // it once the primal pair has caught up.
    const double dual_cap = 1e3 * std::max(10.0, inf_norm(lambda_work));
    if (inf_norm(dlambda) > dual_cap) dlambda *= dual_cap / inf_norm(dlambda);

    Eigen::VectorXd dwl = Eigen::VectorXd::Zero(nz), dwu = Eigen::VectorXd::Zero(nz);
    for (int j : L.lo_idx) {
      const double gap = z[j] - L.lo[j];
      dwl[j] = (mu - gap * wl[j] - wl[j] * dz[j]) / gap;
    }
    for (int j : L.hi_idx) {
      const double gap = L.hi[j] - z[j];
      dwu[j] = (mu - gap * wu[j] + wu[j] * dz[j]) / gap;
    }

    // Step acceptance is governed by a two-measure filter on (theta, phi) =
    // (scaled l1 infeasibility, barrier objective). A single penalty merit
    // would need a weight above the multiplier scale, which the degenerate
    // periodicity rows push to astronomical values; the filter instead
    // accepts any step that improves one measure without spoiling the other
    // beyond margins, which tolerates the unavoidable infeasibility wiggle
    // along the nearly singular directions.
    const double theta_k = cur.c.lpNorm<1>();
    const double phi_k = cur.f + barrier_value(L, z, mu);
    double grad_phi_d = cur.g.dot(dz);
    for (int j : L.lo_idx) grad_phi_d -= mu / (z[j] - L.lo[j]) * dz[j];
    for (int j : L.hi_idx) grad_phi_d += mu / (L.hi[j] - z[j]) * dz[j];

    const auto filter_ok = [&](double th, double ph) {
      for (const auto& e : filter)
        if (th >= e.first && ph >= e.second) return false;
      return true;
    };
    const auto pair_ok = [&](double th, double ph) {
      return th <= (1.0 - kGammaTheta) * theta_k ||
             ph <= phi_k - kGammaPhi * theta_k;
    };
    const auto switching = [&](double a) {
      return grad_phi_d < 0.0 && a * std::pow(-grad_phi_d, kSPhi) >
                                     kDeltaSw * std::pow(theta_k, kSTheta);
    };
    const auto armijo_phi = [&](double ph, double a) {
      return ph <= phi_k + kEtaPhi * a * grad_phi_d;
    };

    const double tau = std::max(0.99, 1.0 - mu);
    const double alpha_max = fraction_to_boundary(L, z, dz, tau);
    double alpha_dual = std::min(dual_fraction_to_boundary(L.lo_idx, wl, dwl, tau),
                                 dual_fraction_to_boundary(L.hi_idx, wu, dwu, tau));

    double alpha_min = 0.05 * kGammaTheta;
    if (grad_phi_d < 0.0) {
      double lim = kGammaPhi * theta_k / (-grad_phi_d);
      lim = std::min(lim, kDeltaSw * std::pow(theta_k, kSTheta) /
                              std::pow(-grad_phi_d, kSPhi));
      alpha_min = 0.05 * std::min(kGammaTheta, lim);
    }
    alpha_min = std::max(alpha_min, config.min_step_size);

    bool accepted = false, ftype = false;
    double alpha = alpha_max, alpha_used = 0.0;
    Eigen::VectorXd z_new, dl_used = dlambda;
    Evaluation next;
    int trial_idx = 0;
    while (alpha >= alpha_min && !accepted) {
      const Eigen::VectorXd trial = z + alpha * dz;
      double ft;
      Eigen::VectorXd ct;
      if (L.eval_fc(trial, &ft, &ct)) {
        const double th = ct.lpNorm<1>();
        const double ph = ft + barrier_value(L, trial, mu);
        const bool sw = switching(alpha);
        if (filter_ok(th, ph) &&
            (sw ? armijo_phi(ph, alpha) : pair_ok(th, ph))) {
          accepted = true;
          ftype = sw;
          z_new = trial;
          next.f = ft;
          next.c = std::move(ct);
          alpha_used = alpha;
          break;
        }
        // One second-order correction at the first (largest) trial: re-target
        // the constraints at the trial point through the same factorization.
        // This recovers full steps along curved constraint surfaces.
        if (trial_idx == 0 && m > 0 && th >= theta_k) {
          Eigen::VectorXd rhs_soc = rhs;
          rhs_soc.tail(m) = -(alpha * cur.c + ct);
          const Eigen::VectorXd sol_soc = kkt.solve(bfgs, rhs_soc);
          if (sol_soc.allFinite()) {
            const Eigen::VectorXd dz_soc = sol_soc.head(nz);
            const double a_soc =
                std::min(alpha, fraction_to_boundary(L, z, dz_soc, tau));
            const Eigen::VectorXd trial2 = z + a_soc * dz_soc;
            double ft2;
            Eigen::VectorXd ct2;
            if (a_soc > alpha_min && L.eval_fc(trial2, &ft2, &ct2)) {
              const double th2 = ct2.lpNorm<1>();
              const double ph2 = ft2 + barrier_value(L, trial2, mu);
              if (filter_ok(th2, ph2) &&
                  (sw ? armijo_phi(ph2, alpha) : pair_ok(th2, ph2))) {
                accepted = true;
                ftype = sw;
                z_new = trial2;
                next.f = ft2;
                next.c = std::move(ct2);
                alpha_used = a_soc;
                dl_used = sol_soc.tail(m);
                if (inf_norm(dl_used) > dual_cap)
                  dl_used *= dual_cap / inf_norm(dl_used);
                break;
              }
            }
          }
        }
      }
      ++trial_idx;
      alpha *= 0.5;
    }

    if (accepted) {
      if (!ftype) augment_filter(theta_k, phi_k);
      if (!L.eval_gj(z_new, &next.g, &next.jv)) {
        res.status = SolveStatus::NumericalFailure;
        res.message = "derivatives not evaluable at accepted point";
        break;
      }
      const Eigen::VectorXd lambda_new = lambda_work + alpha_used * dl_used;
      // quasi-Newton pair for the Lagrangian at the new multipliers
      const Eigen::VectorXd y = (next.g + L.jac_transpose_times(next.jv, lambda_new)) -
                                (cur.g + L.jac_transpose_times(cur.jv, lambda_new));
      bfgs.update(z_new - z, y);
      z = z_new;
      lambda = lambda_new;
      wl += alpha_dual * dwl;
      wu += alpha_dual * dwu;
      for (int j : L.lo_idx) {
        const double gap = z[j] - L.lo[j];
        wl[j] = std::clamp(wl[j], mu / (1e10 * gap), 1e10 * mu / gap);
      }
      for (int j : L.hi_idx) {
        const double gap = L.hi[j] - z[j];
        wu[j] = std::clamp(wu[j], mu / (1e10 * gap), 1e10 * mu / gap);
      }
      cur = std::move(next);
      last_step = alpha_used;
      ls_failures = 0;
      if (++clean_steps >= 3 && delta_w > 0.0) {
        delta_w = delta_w > 1e-10 ? delta_w * 0.1 : 0.0;
        clean_steps = 0;
      }
      continue;
    }

    // Step rejected outright: block this neighborhood in the filter, retry
    // with a fresh Hessian model and stronger regularization a couple of
    // times, then hand over to feasibility restoration.
    if (config.log)  // TEMPDBG
      (*config.log) << "[reject] it=" << res.history.size()
                    << " theta=" << theta_k << " phi=" << phi_k
                    << " viol=" << viol << " amax=" << alpha_max
                    << " amin=" << alpha_min << " gphi_d=" << grad_phi_d
                    << " fsz=" << filter.size() << " mu=" << mu
                    << " dznorm=" << inf_norm(dz) << "\n";
    augment_filter(theta_k, phi_k);
    ++ls_failures;
    clean_steps = 0;
    last_step = 0.0;
    if (ls_failures <= 2) {
      bfgs.reset();
      delta_w = delta_w == 0.0 ? 1e-8 : std::min(delta_w * 100.0, 1e6);
      continue;
    }
    // Persistent rejection is usually the accumulated multiplier drift along
    // nearly dependent rows poisoning the dual residual, not true
    // infeasibility. As long as the infeasibility keeps shrinking between
    // rescues, replace the multipliers with a fresh least-squares estimate
    // and restart the search state before resorting to restoration.
    if (m > 0 && theta_k < 0.99 * theta_rescue) {
      Eigen::VectorXd rhs_ls(nz + m);
      rhs_ls.head(nz) = -(cur.g - wl + wu);
      rhs_ls.tail(m).setZero();
      const Eigen::VectorXd lam_cand = kkt.solve(bfgs, rhs_ls).tail(m);
      if (lam_cand.allFinite()) {
        if (config.log)  // TEMPDBG
          (*config.log) << "[rescue] theta=" << theta_k
                        << " lmax_old=" << inf_norm(lambda)
                        << " lmax_new=" << inf_norm(lam_cand) << "\n";
        lambda = lam_cand;
        bfgs.reset();
        delta_w = 0.0;
        reset_filter();
        ls_failures = 0;
        theta_rescue = theta_k;
        continue;
      }
    }
    if (viol <= 10.0 * config.constraint_tolerance) {
      res.status = SolveStatus::NumericalFailure;
      res.message = "line search stalled on a feasible iterate";
      break;
    }
    if (++restorations > 3) {
      res.status = SolveStatus::InfeasibleDetected;
      res.message = "feasibility restoration exhausted";
      break;
    }
    const double target =
        std::max(10.0 * config.constraint_tolerance, 0.1 * viol);
    if (config.log)  // TEMPDBG
      (*config.log) << "[restore-in] viol=" << viol << " target=" << target << "\n";
    const bool restored =
        restore_feasibility(L, kkt, &z, target, 300, config.log);
    if (config.log) {  // TEMPDBG
      double ftmp;
      Eigen::VectorXd ctmp;
      L.eval_fc(z, &ftmp, &ctmp);
      (*config.log) << "[restore-out] ok=" << restored
                    << " viol=" << inf_norm(ctmp) << "\n";
    }
    double f_r;
    Eigen::VectorXd c_r;
    if (!L.eval_fc(z, &f_r, &c_r) || !L.eval_gj(z, &cur.g, &cur.jv)) {
      res.status = SolveStatus::NumericalFailure;
      res.message = "restoration left an unevaluable point";
      break;
    }
    cur.f = f_r;
    cur.c = std::move(c_r);
    if (!restored) {
      if (inf_norm(cur.c) > 10.0 * config.constraint_tolerance) {
        res.status = SolveStatus::InfeasibleDetected;
        res.message = "feasibility restoration stalled at a nonzero violation";
      } else {
        res.status = SolveStatus::NumericalFailure;
        res.message = "restoration stalled near feasibility";
      }
      break;
    }
    lambda.setZero();
    for (int j : L.lo_idx) wl[j] = mu / (z[j] - L.lo[j]);
    for (int j : L.hi_idx) wu[j] = mu / (L.hi[j] - z[j]);
    bfgs.reset();
    reset_filter();
    ls_failures = 0;
    ++phase;
  }

  res.iterations = static_cast<int>(res.history.size());
  res.x = z.head(L.n);
  res.multipliers = lambda.cwiseQuotient(L.row_scale);
  res.bound_multipliers_lower = wl.head(L.n);
  res.bound_multipliers_upper = wu.head(L.n);
  res.objective = cur.f;
  {
    const Eigen::VectorXd r_dual =
        cur.g + L.jac_transpose_times(cur.jv, lambda) - wl + wu;
    double comp0 = 0.0;
    for (int j : L.lo_idx) comp0 = std::max(comp0, std::abs((z[j] - L.lo[j]) * wl[j]));
    for (int j : L.hi_idx) comp0 = std::max(comp0, std::abs((L.hi[j] - z[j]) * wu[j]));
    const double nb = double(L.lo_idx.size() + L.hi_idx.size());
    const double s_d = std::max(100.0, (lambda.lpNorm<1>() + wl.lpNorm<1>() +
                                        wu.lpNorm<1>()) /
                                           std::max(1.0, double(m) + nb)) /
                       100.0;
    const double s_c =
        std::max(100.0, (wl.lpNorm<1>() + wu.lpNorm<1>()) / std::max(1.0, nb)) /
        100.0;
    res.constraint_violation = inf_norm(cur.c);
    res.kkt_residual =
        std::max({inf_norm(r_dual) / s_d, inf_norm(cur.c), comp0 / s_c});
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return res;
}

Eigen::VectorXd random_feasible_init(const NlpProblem& nlp, unsigned seed) {
  Eigen::VectorXd lo, hi;
  nlp.variable_bounds(&lo, &hi);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> inside(0.01, 0.99);
  std::uniform_real_distribution<double> small(-0.05, 0.05);
  Eigen::VectorXd x(nlp.num_vars());
  for (int j = 0; j < nlp.num_vars(); ++j) {
    const bool fl = std::isfinite(lo[j]), fh = std::isfinite(hi[j]);
    if (fl && fh) {
      if (!(hi[j] > lo[j]))
        throw ValidationError("variable box is degenerate; nothing to draw from");
      x[j] = lo[j] + inside(rng) * (hi[j] - lo[j]);
    } else if (fl) {
      x[j] = lo[j] + 0.01 * std::max(1.0, std::abs(lo[j])) * (1.0 + std::abs(small(rng)));
    } else if (fh) {
      x[j] = hi[j] - 0.01 * std::max(1.0, std::abs(hi[j])) * (1.0 + std::abs(small(rng)));
    } else {
      x[j] = small(rng);
    }
  }
  return x;
}

KktBreakdown kkt_breakdown(const NlpProblem& nlp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& multipliers,
                           const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper) {
  KktBreakdown out;
  Eigen::VectorXd g, c, jv, cl, cu, xl, xu;
  nlp.objective_gradient(x, &g);
  nlp.constraints(x, &c);
  nlp.jacobian_values(x, &jv);
  nlp.constraint_bounds(&cl, &cu);
  nlp.variable_bounds(&xl, &xu);
  const SparsityPattern& pat = nlp.jacobian_pattern();

  Eigen::VectorXd stat = g - lower + upper;
  for (std::size_t e = 0; e < pat.size(); ++e)
    stat[pat.cols[e]] += jv[static_cast<Eigen::Index>(e)] * multipliers[pat.rows[e]];
  // Stationarity and complementarity are reported relative to the average
  // multiplier magnitude (the usual scaled-residual convention, matching the
  // solver's own termination measure).
  const double mult_mass =
      multipliers.lpNorm<1>() + lower.lpNorm<1>() + upper.lpNorm<1>();
  const double denom =
      std::max(1.0, double(nlp.num_cons()) + 2.0 * double(nlp.num_vars()));
  const double s_d = std::max(100.0, mult_mass / denom) / 100.0;
  out.stationarity = inf_norm(stat) / s_d;

  for (int r = 0; r < nlp.num_cons(); ++r) {
    if (std::isfinite(cl[r]))
      out.feasibility = std::max(out.feasibility, cl[r] - c[r]);
    if (std::isfinite(cu[r]))
      out.feasibility = std::max(out.feasibility, c[r] - cu[r]);
    if (cl[r] == cu[r]) continue;  // equality rows carry no sign condition
    const double pos = std::max(multipliers[r], 0.0);
    const double neg = std::max(-multipliers[r], 0.0);
    out.complementarity = std::max(
        out.complementarity, std::isfinite(cu[r]) ? pos * (cu[r] - c[r]) : pos);
    out.complementarity = std::max(
        out.complementarity, std::isfinite(cl[r]) ? neg * (c[r] - cl[r]) : neg);
  }
  for (int j = 0; j < nlp.num_vars(); ++j) {
    if (std::isfinite(xl[j]))
      out.feasibility = std::max(out.feasibility, xl[j] - x[j]);
    if (std::isfinite(xu[j]))
      out.feasibility = std::max(out.feasibility, x[j] - xu[j]);
    out.complementarity = std::max(out.complementarity, std::max(-lower[j], 0.0));
    out.complementarity = std::max(out.complementarity, std::max(-upper[j], 0.0));
    if (std::isfinite(xl[j]))
      out.complementarity =
          std::max(out.complementarity, std::abs(lower[j] * (x[j] - xl[j])));
    else
      out.complementarity = std::max(out.complementarity, std::abs(lower[j]));
    if (std::isfinite(xu[j]))
      out.complementarity =
          std::max(out.complementarity, std::abs(upper[j] * (xu[j] - x[j])));
    else
      out.complementarity = std::max(out.complementarity, std::abs(upper[j]));
  }
  out.complementarity /= s_d;
  return out;
}

}  // namespace gasflow
