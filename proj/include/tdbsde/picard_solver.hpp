#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tdbsde/assumptions.hpp"
#include "tdbsde/errors.hpp"
#include "tdbsde/norms.hpp"
#include "tdbsde/path_array.hpp"
#include "tdbsde/problem.hpp"
#include "tdbsde/regression.hpp"
#include "tdbsde/stochastic_engine.hpp"

namespace tdbsde {

enum class Scheme { explicit_euler, implicit_euler };

struct SolverOptions {
  double tol = 1e-12;  ///< on the squared equivalent norm of the Picard increment
  std::size_t max_iter = 50;
  Scheme scheme = Scheme::explicit_euler;
  RegressionBasis basis;
  unsigned threads = 1;
  /// Solve even if (H1)/(H2) fail on some sampled path; the failure is kept as a warning.
  bool override_assumptions = false;
  double slack = 0.1;
  /// b = lambda / 2 - bdg_constant.
  double bdg_constant = 144.0;
  std::size_t implicit_max_inner = 20;
  double implicit_tol = 1e-12;
};

/// Y (m components) and Z (m x d, row-major per path) on the ensemble grid.
/// Both carry ghost nodes before t_0: Y holds Y(0), Z is zero.
struct SolutionPair {
  GridPtr grid;
  PathArray Y;
  PathArray Z;
};

struct GammaArtifacts {
  PathArray B;                        ///< B(t) = int_0^t G(s, U(s), U_s) dA(s)
  std::vector<double> shifted_terminal;  ///< xi + B(T), path-major (paths x m)
};

struct IterationRecord {
  std::size_t iteration = 0;
  double norm = 0.0;   ///< squared equivalent norm of (Y^k - Y^{k-1}, Z^k - Z^{k-1})
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double mu_lambda = 0.0;
  /// E int e^{alpha s + beta A} <dY, dZ dW>; zero in continuous time.
  double martingale_residual = 0.0;
};

struct SolveResult {
  SolutionPair solution;
  PathEnsemble ensemble;  ///< with A realized
  std::vector<IterationRecord> diagnostics;
  LambdaChoice lambda;
  double alpha = 0.0;
  double a = 0.0;
  double b = 0.0;
  std::optional<ConditionCheck> H1;
  std::optional<ConditionCheck> H2;
  std::vector<std::string> warnings;
  bool converged = false;
  double self_consistency = 0.0;  ///< squared norm of the last Picard increment
};

/// Number of grid steps spanned by delta; the grid must be uniform.
inline std::size_t delay_window(const TimeGrid& g, double delta) {
  if (g.delay() > 0.0 && std::abs(g.delay() - delta) <= TimeGrid::kAlignTol * std::max(1.0, delta)) {
    return g.delay_steps();
  }
  if (!g.is_uniform()) throw GridAlignmentError("delayed problems need a uniform grid");
  const double ratio = delta / g.step(0);
  const double k = std::round(ratio);
  if (k < 1.0 || std::abs(ratio - k) > TimeGrid::kAlignTol * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << "delay " << delta << " is not a whole number of steps " << g.step(0);
    if (auto n = nearest_aligned_steps(g.horizon(), delta, g.steps())) os << "; nearest valid n_steps = " << *n;
    throw GridAlignmentError(os.str());
  }
  return static_cast<std::size_t>(k);
}

/// Zero solution with ghost nodes sized for the problem's delay.
inline SolutionPair zero_solution(const ProblemSpec& pb, const PathEnsemble& ens) {
  const std::size_t k = delay_window(*ens.grid, pb.delta);
  return SolutionPair{ens.grid, PathArray(ens.nodes(), ens.paths(), pb.m, k, Prolongation::hold_initial),
                      PathArray(ens.nodes(), ens.paths(), pb.m * pb.d, k, Prolongation::zero)};
}

namespace detail {

inline GeneratorArgs base_args(const TimeGrid& g, std::size_t i, std::size_t p, const PathEnsemble& ens) {
  GeneratorArgs a;
  a.t = g[i];
  a.step = i;
  a.path = p;
  a.omega = &ens;
  return a;
}

inline void require_finite(std::span<const double> v, const char* what, double t, std::size_t p) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      std::ostringstream os;
      os << what << " is not finite at t=" << t << " on path " << p;
      throw GeneratorError(os.str());
    }
  }
}

inline void require_A(const PathEnsemble& ens) {
  if (!ens.A) throw DomainError("solver: increasing process not realized on the ensemble");
  if (!ens.W) throw DomainError("solver: ensemble has no Brownian paths");
}

}  // namespace detail

/// Left-point accumulation of G(t, U(t), U_t) dA along each path, plus xi + B(T).
inline GammaArtifacts build_B(const PathArray& U, const ProblemSpec& pb, const PathEnsemble& ens,
                              unsigned threads = 1) {
  detail::require_A(ens);
  const TimeGrid& g = *ens.grid;
  const std::size_t n = ens.paths();
  const std::size_t M = g.steps();
  const std::size_t m = pb.m;
  const std::size_t k = delay_window(g, pb.delta);
  const double h = g.step(0);
  GammaArtifacts out{PathArray(g.size(), n, m), std::vector<double>(n * m)};
  parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> gv(m), xi(m);
    for (std::size_t p = b; p < e; ++p) {
      if (!pb.G.is_zero()) {
        for (std::size_t i = 0; i < M; ++i) {
          GeneratorArgs a = detail::base_args(g, i, p, ens);
          a.y = U.at(i, p);
          a.y_seg = U.segment(i, p, k, h);
          pb.G(a, gv);
          detail::require_finite(gv, "G", g[i], p);
          const double dA = (*ens.A)(i + 1, p) - (*ens.A)(i, p);
          for (std::size_t c = 0; c < m; ++c) out.B(i + 1, p, c) = out.B(i, p, c) + gv[c] * dA;
        }
      }
      pb.xi(TerminalArgs{p, &ens}, xi);
      detail::require_finite(xi, "xi", g.horizon(), p);
      for (std::size_t c = 0; c < m; ++c) out.shifted_terminal[p * m + c] = xi[c] + out.B(M, p, c);
    }
  });
  return out;
}

/// State variables of the regression at node i: W(t_i), A(t_i) when A is
/// random, and rho-averages of the W segment when a generator is delayed.
/// None of them depend on the Picard iterate, so the projection at each step
/// is one fixed linear map for the whole solve.
inline Eigen::MatrixXd regression_state(const ProblemSpec& pb, const PathEnsemble& ens, std::size_t i) {
  const TimeGrid& g = *ens.grid;
  const std::size_t n = ens.paths();
  const std::size_t d = ens.dim();
  const std::size_t k = delay_window(g, pb.delta);
  const double h = g.step(0);
  const bool use_A = ens.A_is_stochastic();
  std::vector<const AtomMeasure*> measures;
  if (pb.F.delayed) measures.push_back(&pb.rho);
  if (pb.G.delayed) measures.push_back(&pb.rho_tilde);
  Eigen::MatrixXd state(n, static_cast<Eigen::Index>(d * (1 + measures.size()) + (use_A ? 1 : 0)));
  for (std::size_t p = 0; p < n; ++p) {
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < d; ++j) state(p, col++) = (*ens.W)(i, p, j);
    if (use_A) state(p, col++) = (*ens.A)(i, p);
    for (const AtomMeasure* mu : measures) {
      for (std::size_t j = 0; j < d; ++j) {
        double v = 0.0;
        for (std::size_t a = 0; a < mu->theta().size(); ++a) {
          const double off = std::clamp(std::round((mu->theta()[a] + pb.delta) / h), 0.0, static_cast<double>(k));
          const std::ptrdiff_t node = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(k) +
                                      static_cast<std::ptrdiff_t>(off);
          v += mu->weight()[a] * (*ens.W)(static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, node)), p, j);
        }
        state(p, col++) = v;
      }
    }
  }
  return state;
}

/// One least-squares projector per step t_0..t_{M-1}.
using StepProjectors = std::vector<LeastSquaresProjector>;

inline StepProjectors build_projectors(const ProblemSpec& pb, const PathEnsemble& ens, const RegressionBasis& basis) {
  StepProjectors out;
  out.reserve(ens.grid->steps());
  for (std::size_t i = 0; i < ens.grid->steps(); ++i) {
    out.emplace_back(polynomial_design(regression_state(pb, ens, i), basis.degree), basis.ridge);
  }
  return out;
}

/// One application of the map (U, V) -> (Y, Z): backward least-squares Monte
/// Carlo for Yhat = Y + B with generator F(t, Yhat - B, Z, U_t, V_t), segments
/// frozen at the previous iterate. Regression targets are centred by the
/// known value B(t_i).
inline SolutionPair gamma_step(const SolutionPair& in, const ProblemSpec& pb, const PathEnsemble& ens,
                               const SolverOptions& opt = {}, const StepProjectors* projectors = nullptr) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  detail::require_A(ens);
  const TimeGrid& g = *ens.grid;
  const std::size_t n = ens.paths();
  const std::size_t M = g.steps();
  const std::size_t m = pb.m;
  const std::size_t d = pb.d;
  if (ens.dim() != d) throw DomainError("solver: Brownian dimension differs from problem d");
  const std::size_t k = delay_window(g, pb.delta);
  const double h = g.step(0);
  const PathArray& U = in.Y;
  const PathArray& V = in.Z;
  if (U.paths() != n || U.nodes() != g.size() || U.ghosts() < k || V.ghosts() < k) {
    throw DomainError("gamma_step: iterate does not match the ensemble");
  }
  StepProjectors local;
  if (!projectors) {
    local = build_projectors(pb, ens, opt.basis);
    projectors = &local;
  }
  if (projectors->size() != M) throw DomainError("gamma_step: projector count does not match the grid");

  const GammaArtifacts art = build_B(U, pb, ens, opt.threads);
  SolutionPair out = zero_solution(pb, ens);

  RowMat Yhat(n, m);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < m; ++c) Yhat(p, c) = art.shifted_terminal[p * m + c];
  }
  // Y(T) = xi exactly, not xi + B(T) - B(T).
  {
    std::vector<double> xi(m);
    for (std::size_t p = 0; p < n; ++p) {
      pb.xi(TerminalArgs{p, &ens}, xi);
      for (std::size_t c = 0; c < m; ++c) out.Y(M, p, c) = xi[c];
    }
  }

  RowMat centred(n, m), Zt(n, m * d), target(n, m), Yi(n, m);
  for (std::size_t ii = M; ii-- > 0;) {
    const std::size_t i = ii;
    const LeastSquaresProjector& proj = (*projectors)[i];
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t c = 0; c < m; ++c) centred(p, c) = Yhat(p, c) - art.B(i, p, c);
    }
    const RowMat cond = proj.project(centred);

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t c = 0; c < m; ++c) {
        const double dev = centred(p, c) - cond(p, c);
        for (std::size_t j = 0; j < d; ++j) {
          Zt(p, c * d + j) = dev * ((*ens.W)(i + 1, p, j) - (*ens.W)(i, p, j)) / g.step(i);
        }
      }
    }
    const RowMat Zi = proj.project(Zt);

    parallel_for(n, opt.threads, [&](std::size_t b, std::size_t e) {
      std::vector<double> y(m), f(m);
      for (std::size_t p = b; p < e; ++p) {
        GeneratorArgs a = detail::base_args(g, i, p, ens);
        a.y = y;
        a.z = std::span<const double>(Zi.data() + p * m * d, m * d);
        a.y_seg = U.segment(i, p, k, h);
        a.z_seg = V.segment(i, p, k, h);
        if (opt.scheme == Scheme::explicit_euler) {
          for (std::size_t c = 0; c < m; ++c) y[c] = centred(p, c);
          pb.F(a, f);
          detail::require_finite(f, "F", g[i], p);
          for (std::size_t c = 0; c < m; ++c) target(p, c) = centred(p, c) + f[c] * g.step(i);
        } else {
          for (std::size_t c = 0; c < m; ++c) Yi(p, c) = cond(p, c);
          for (std::size_t it = 0; it < opt.implicit_max_inner; ++it) {
            for (std::size_t c = 0; c < m; ++c) y[c] = Yi(p, c);
            pb.F(a, f);
            detail::require_finite(f, "F", g[i], p);
            double change = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
              const double v = cond(p, c) + f[c] * g.step(i);
              change = std::max(change, std::abs(v - Yi(p, c)));
              Yi(p, c) = v;
            }
            if (change <= opt.implicit_tol) break;
          }
        }
      }
    });
    if (opt.scheme == Scheme::explicit_euler) Yi = proj.project(target);
    if (!Yi.allFinite()) {
      std::ostringstream os;
      os << "solver: Yhat became non-finite at step " << i << " (t=" << g[i] << ")";
      throw BlowupError(os.str());
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t c = 0; c < m; ++c) {
        out.Y(i, p, c) = Yi(p, c);
        Yhat(p, c) = Yi(p, c) + art.B(i, p, c);
      }
      for (std::size_t c = 0; c < m * d; ++c) out.Z(i, p, c) = Zi(p, c);
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < m * d; ++c) out.Z(M, p, c) = out.Z(M - 1, p, c);
  }
  out.Y.fill_ghosts();
  out.Z.fill_ghosts();
  return out;
}

namespace detail {

inline PathArray difference(const PathArray& x, const PathArray& y) {
  PathArray out(x.nodes(), x.paths(), x.dim());
  for (std::size_t i = 0; i < x.nodes(); ++i) {
    for (std::size_t p = 0; p < x.paths(); ++p) {
      for (std::size_t c = 0; c < x.dim(); ++c) out(i, p, c) = x(i, p, c) - y(i, p, c);
    }
  }
  return out;
}

/// E sum_i w(t_i) <dY(t_i), dZ(t_i) dW_i>.
inline double martingale_residual(const PathArray& dY, const PathArray& dZ, const PathEnsemble& ens, double alpha,
                                  double beta) {
  const TimeGrid& g = *ens.grid;
  const std::size_t m = dY.dim();
  const std::size_t d = ens.dim();
  double total = 0.0;
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
      const double w = std::exp(alpha * g[i] + beta * (*ens.A)(i, p));
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        double zdw = 0.0;
        for (std::size_t j = 0; j < d; ++j) zdw += dZ(i, p, c * d + j) * ((*ens.W)(i + 1, p, j) - (*ens.W)(i, p, j));
        s += dY(i, p, c) * zdw;
      }
      total += w * s;
    }
  }
  return total / static_cast<double>(ens.paths());
}

}  // namespace detail

/// Picard iteration of gamma_step from (0, 0) until the squared equivalent
/// norm of the increment drops below opt.tol.
inline SolveResult solve(const ProblemSpec& pb, const PathEnsemble& ensemble, const SolverOptions& opt = {}) {
  pb.validate();
  if (!(opt.tol > 0.0)) throw DomainError("solve: tol must be positive");
  if (opt.max_iter == 0) throw DomainError("solve: max_iter must be positive");
  if (!ensemble.W) throw DomainError("solve: ensemble has no Brownian paths");
  if (std::abs(ensemble.grid->horizon() - pb.T) > TimeGrid::kAlignTol * std::max(1.0, pb.T)) {
    throw GridAlignmentError("solve: grid horizon differs from problem T");
  }
  SolveResult res;
  res.ensemble = ensemble.A ? ensemble : realize_increasing_process(pb.A, ensemble, opt.threads);
  const PathEnsemble& ens = res.ensemble;

  const double c = pb.constants.c;
  res.H1 = check_H1(pb, ens, c);
  res.H2 = check_H2(pb, ens, c);
  for (const ConditionCheck* chk : {&*res.H1, &*res.H2}) {
    if (chk->all_pass()) continue;
    std::ostringstream os;
    os << chk->name << " fails on " << chk->fail_fraction * 100.0 << "% of paths (worst margin " << chk->worst_margin
       << ")";
    if (!opt.override_assumptions) throw AssumptionError("solve: " + os.str());
    res.warnings.push_back(os.str() + "; continuing because the override flag is set");
  }

  res.lambda = select_lambda(c, pb.constants.beta, pb.constants.L_tilde);
  res.alpha = 8.0 * pb.constants.L * pb.constants.L + 0.5;
  res.a = res.lambda.lambda * pb.constants.beta / 2.0;
  res.b = res.lambda.lambda / 2.0 - opt.bdg_constant;
  if (!(res.b > 0.0)) throw ConstraintViolation("solve: lambda / 2 must exceed the BDG constant");

  const StepProjectors projectors = build_projectors(pb, ens, opt.basis);
  SolutionPair cur = zero_solution(pb, ens);
  double prev = 0.0;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    SolutionPair next = gamma_step(cur, pb, ens, opt, &projectors);
    const PathArray dY = detail::difference(next.Y, cur.Y);
    const PathArray dZ = detail::difference(next.Z, cur.Z);
    IterationRecord rec;
    rec.iteration = it;
    rec.norm = equivalent_norm(dY, dZ, *ens.A, *ens.grid, res.alpha, pb.constants.beta, res.a, res.b).total();
    if (it > 1) rec.ratio = prev > 0.0 ? rec.norm / prev : 0.0;
    rec.mu_lambda = res.lambda.mu;
    rec.martingale_residual = detail::martingale_residual(dY, dZ, ens, res.alpha, pb.constants.beta);
    res.diagnostics.push_back(rec);
    prev = rec.norm;
    cur = std::move(next);
    if (rec.norm < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.self_consistency = res.diagnostics.back().norm;
  res.solution = std::move(cur);
  if (!res.converged) {
    const double last = res.diagnostics.back().ratio;
    if (!(last < 1.0)) {
      std::ostringstream os;
      os << "solve: no convergence after " << opt.max_iter << " iterations; empirical ratio " << last
         << " vs mu_lambda " << res.lambda.mu;
      throw NonContractionError(os.str());
    }
    std::ostringstream os;
    os << "max_iter reached with last increment " << res.self_consistency << " >= tol " << opt.tol;
    res.warnings.push_back(os.str());
  }
  return res;
}

enum class Verdict { pass, fail, inconclusive };

inline const char* to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    default: return "INCONCLUSIVE";
  }
}

struct ContractionReport {
  std::vector<double> ratios;  ///< r_k = norm_{k+1} / norm_k
  double mu_lambda = 0.0;
  double max_tail = 0.0;       ///< max of r_2, r_3, ...
  Verdict verdict = Verdict::inconclusive;
  bool insufficient_history = false;
};

/// Empirical contraction ratios against mu_lambda + slack.
inline ContractionReport contraction_report(const std::vector<IterationRecord>& diag, double slack = 0.1) {
  ContractionReport r;
  if (!diag.empty()) r.mu_lambda = diag.front().mu_lambda;
  for (std::size_t k = 1; k < diag.size(); ++k) {
    r.ratios.push_back(diag[k - 1].norm > 0.0 ? diag[k].norm / diag[k - 1].norm : 0.0);
  }
  for (std::size_t k = 1; k < r.ratios.size(); ++k) r.max_tail = std::max(r.max_tail, r.ratios[k]);
  r.insufficient_history = diag.size() < 3;
  if (r.insufficient_history) {
    r.verdict = Verdict::inconclusive;
  } else {
    r.verdict = r.max_tail <= r.mu_lambda + slack ? Verdict::pass : Verdict::fail;
  }
  return r;
}

}  // namespace tdbsde
