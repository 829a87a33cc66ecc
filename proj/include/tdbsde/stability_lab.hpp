#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tdbsde/assumptions.hpp"
#include "tdbsde/errors.hpp"
#include "tdbsde/path_calculus.hpp"
#include "tdbsde/picard_solver.hpp"

namespace tdbsde {

/// Base problem plus perturbed members indexed by n.
struct PerturbationFamily {
  ProblemSpec base;
  std::vector<double> index;         ///< n of each member
  std::vector<ProblemSpec> members;  ///< (xi^n, F^n, G^n, A^n)
  double p = 2.0;

  double q() const noexcept { return p / (p - 1.0); }

  void validate() const {
    if (!(p > 1.0)) throw DomainError("family: p must exceed 1");
    if (index.size() != members.size()) throw DomainError("family: index/member count mismatch");
    if (members.empty()) throw DomainError("family: no members");
    base.validate();
    for (std::size_t j = 0; j < members.size(); ++j) {
      const ProblemSpec& mb = members[j];
      if (mb.T != base.T || mb.delta != base.delta || mb.m != base.m || mb.d != base.d) {
        std::ostringstream os;
        os << "family member n=" << index[j] << " changes T, delta or dimensions";
        throw FamilyInvalidError(os.str());
      }
      const Constants& a = mb.constants;
      const Constants& b = base.constants;
      if (a.beta != b.beta || a.L != b.L || a.L_tilde != b.L_tilde || a.c != b.c) {
        std::ostringstream os;
        os << "family member n=" << index[j] << " does not share beta, c, L, L_tilde with the base";
        throw FamilyInvalidError(os.str());
      }
    }
  }
};

/// Argument ranges for sup estimates of generator differences.
struct SupSampleSpec {
  std::size_t m = 1;
  std::size_t d = 1;
  double T = 1.0;
  double delta = 0.1;
  std::size_t window = 10;
  std::size_t samples = 4096;
  double box = 5.0;
};

struct SupEstimate {
  double value = 0.0;  ///< lower bound on the true sup
  std::size_t samples = 0;
  double box = 0.0;
};

/// Radical inverse of `index` in base `b` (one Halton coordinate).
inline double radical_inverse(std::uint64_t index, unsigned b) noexcept {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= b;
    r += f * static_cast<double>(index % b);
    index /= b;
  }
  return r;
}

inline std::vector<unsigned> first_primes(std::size_t count) {
  std::vector<unsigned> out;
  for (unsigned c = 2; out.size() < count; ++c) {
    bool prime = true;
    for (unsigned q : out) {
      if (q * q > c) break;
      if (c % q == 0) {
        prime = false;
        break;
      }
    }
    if (prime) out.push_back(c);
  }
  return out;
}

/// max |F^n - F| over a Halton sample of (t, y, z) in [0,T] x box and of
/// segments interpolating linearly between two points of the box.
inline SupEstimate delta_sup_estimate(const Driver& Fn, const Driver& F, DriverRole role, const SupSampleSpec& spec) {
  const std::size_t m = spec.m;
  const std::size_t zd = role == DriverRole::F ? spec.m * spec.d : 0;
  const std::size_t cnt = spec.window + 1;
  const double dtheta = spec.window > 0 ? spec.delta / static_cast<double>(spec.window) : 0.0;
  const std::size_t dims = 1 + m + zd + 2 * m + 2 * zd;
  const auto primes = first_primes(dims);
  std::vector<double> y(m), z(zd), ys(cnt * m), zs(cnt * zd), a(m), b(m);
  std::vector<double> u(dims);
  SupEstimate est;
  est.samples = spec.samples;
  est.box = spec.box;
  auto in_box = [&](double x) { return -spec.box + 2.0 * spec.box * x; };
  for (std::size_t s = 1; s <= spec.samples; ++s) {
    for (std::size_t k = 0; k < dims; ++k) u[k] = radical_inverse(s, primes[k]);
    std::size_t k = 0;
    const double t = spec.T * u[k++];
    for (auto& v : y) v = in_box(u[k++]);
    for (auto& v : z) v = in_box(u[k++]);
    auto fill_segment = [&](std::vector<double>& seg, std::size_t dim) {
      for (std::size_t c = 0; c < dim; ++c) {
        const double lo = in_box(u[k++]);
        const double hi = in_box(u[k++]);
        for (std::size_t j = 0; j < cnt; ++j) {
          const double w = cnt > 1 ? static_cast<double>(j) / static_cast<double>(cnt - 1) : 1.0;
          seg[j * dim + c] = lo + (hi - lo) * w;
        }
      }
    };
    fill_segment(ys, m);
    fill_segment(zs, zd);
    GeneratorArgs args;
    args.t = t;
    args.y = y;
    args.z = z;
    args.y_seg = SegmentView{ys.data(), static_cast<std::ptrdiff_t>(m), m, cnt, dtheta};
    if (zd) args.z_seg = SegmentView{zs.data(), static_cast<std::ptrdiff_t>(zd), zd, cnt, dtheta};
    Fn(args, a);
    F(args, b);
    double d2 = 0.0;
    for (std::size_t c = 0; c < m; ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
    est.value = std::max(est.value, std::sqrt(d2));
  }
  return est;
}

/// Spearman rank correlation (average ranks for ties); 0 when undefined.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

/// Default nu grid 0.01 * 2^j, j = 0..10.
inline std::vector<double> default_nu_grid() {
  std::vector<double> out;
  for (int j = 0; j <= 10; ++j) out.push_back(0.01 * std::ldexp(1.0, j));
  return out;
}

/// |H(0)| + partition variation of each path of a one-dimensional-or-more array.
inline std::vector<double> pathwise_bv(const PathArray& H) {
  std::vector<double> out(H.paths());
  for (std::size_t p = 0; p < H.paths(); ++p) {
    double v = std::sqrt(detail::squared_norm(H.at(0, p)));
    for (std::size_t i = 0; i + 1 < H.nodes(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < H.dim(); ++c) s += (H(i + 1, p, c) - H(i, p, c)) * (H(i + 1, p, c) - H(i, p, c));
      v += std::sqrt(s);
    }
    out[p] = v;
  }
  return out;
}

struct TailPoint {
  double nu = 0.0;
  double fraction = 0.0;
};

/// nu -> max_n fraction of paths with ||H_n||_BV > nu.
inline std::vector<TailPoint> bv_tail_curve(const std::vector<PathArray>& H, const std::vector<double>& nu_grid) {
  std::vector<TailPoint> curve;
  std::vector<std::vector<double>> bv;
  for (const auto& h : H) bv.push_back(pathwise_bv(h));
  for (double nu : nu_grid) {
    double worst = 0.0;
    for (const auto& v : bv) {
      const auto above = std::count_if(v.begin(), v.end(), [nu](double x) { return x > nu; });
      worst = std::max(worst, static_cast<double>(above) / static_cast<double>(std::max<std::size_t>(1, v.size())));
    }
    curve.push_back({nu, worst});
  }
  return curve;
}

struct StabilityRow {
  double n = 0.0;
  double delta_xi = 0.0;  ///< E|xi^n - xi|^p
  double delta_F = 0.0;
  double delta_G = 0.0;
  double sup_A_diff = 0.0;  ///< E sup_t |A^n - A|
  double bv_H = 0.0;        ///< E ||A^n - A||_BV
  double exp_q_moment = 0.0;  ///< E exp(q beta A^n(T))
  double error = 0.0;       ///< E sup|Y^n - Y|^2 + E int |Z^n - Z|^2 dt
};

struct StabilityOptions {
  SolverOptions solver;
  double threshold = 1e-3;
  double box = 5.0;
  std::size_t sup_samples = 4096;
  std::vector<double> nu_grid = default_nu_grid();
  /// Keep Y and A of base and members in the report (for Helly-Bray checks).
  bool keep_paths = false;
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  std::vector<TailPoint> tail;
  double spearman = 0.0;  ///< rank correlation of error against n
  double box = 0.0;
  std::size_t sup_samples = 0;
  bool trend_decreasing = false;
  bool final_below_threshold = false;
  double base_norm = 0.0;  ///< E sup|Y|^2 + E int |Z|^2 dt of the base solution
  /// Filled when StabilityOptions::keep_paths is set.
  PathArray base_Y, base_A;
  std::vector<PathArray> member_Y, member_A;

  Verdict verdict() const noexcept {
    return trend_decreasing && final_below_threshold ? Verdict::pass : Verdict::fail;
  }
};

/// E sup_t |Y1 - Y2|^2 + E int |Z1 - Z2|^2 dt with left-point sums.
inline double solution_distance(const SolutionPair& a, const SolutionPair& b) {
  const TimeGrid& g = *a.grid;
  const std::size_t n = a.Y.paths();
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double sup = 0.0, integral = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double dy = 0.0;
      for (std::size_t c = 0; c < a.Y.dim(); ++c) dy += (a.Y(i, p, c) - b.Y(i, p, c)) * (a.Y(i, p, c) - b.Y(i, p, c));
      sup = std::max(sup, dy);
      if (i + 1 < g.size()) {
        double dz = 0.0;
        for (std::size_t c = 0; c < a.Z.dim(); ++c) dz += (a.Z(i, p, c) - b.Z(i, p, c)) * (a.Z(i, p, c) - b.Z(i, p, c));
        integral += dz * g.step(i);
      }
    }
    total += sup + integral;
  }
  return total / static_cast<double>(n);
}

namespace detail {

inline PathEnsemble without_A(PathEnsemble e) {
  e.A.reset();
  e.A_spec.reset();
  return e;
}

inline SolveResult solve_member(const ProblemSpec& pb, const PathEnsemble& W, const SolverOptions& opt,
                                const std::string& who) {
  try {
    return solve(pb, realize_increasing_process(pb.A, W, opt.threads), opt);
  } catch (const AssumptionError& e) {
    throw FamilyInvalidError(who + ": " + e.what());
  }
}

}  // namespace detail

/// Solves the base problem and every member on the same Brownian paths and
/// measures the coupled distance between solutions.
inline StabilityReport run_stability(const PerturbationFamily& fam, const PathEnsemble& ensemble,
                                     const StabilityOptions& opt = {}) {
  fam.validate();
  const PathEnsemble W = detail::without_A(ensemble);
  const SolveResult base = detail::solve_member(fam.base, W, opt.solver, "base problem");
  const std::size_t n_paths = W.paths();
  const TimeGrid& g = *W.grid;
  const std::size_t M = g.steps();
  const std::size_t m = fam.base.m;

  StabilityReport rep;
  rep.box = opt.box;
  rep.sup_samples = opt.sup_samples;
  {
    const SolutionPair zero = zero_solution(fam.base, base.ensemble);
    rep.base_norm = solution_distance(base.solution, zero);
  }
  SupSampleSpec sup;
  sup.m = m;
  sup.d = fam.base.d;
  sup.T = fam.base.T;
  sup.delta = fam.base.delta;
  sup.window = delay_window(g, fam.base.delta);
  sup.samples = opt.sup_samples;
  sup.box = opt.box;

  std::vector<PathArray> H;
  std::vector<double> errors;
  for (std::size_t j = 0; j < fam.members.size(); ++j) {
    const ProblemSpec& mb = fam.members[j];
    std::ostringstream who;
    who << "family member n=" << fam.index[j];
    const SolveResult res = detail::solve_member(mb, W, opt.solver, who.str());
    StabilityRow row;
    row.n = fam.index[j];
    row.error = solution_distance(res.solution, base.solution);
    row.delta_F = delta_sup_estimate(mb.F, fam.base.F, DriverRole::F, sup).value;
    row.delta_G = delta_sup_estimate(mb.G, fam.base.G, DriverRole::G, sup).value;

    PathArray h(g.size(), n_paths, 1);
    std::vector<double> xi_n(m), xi(m);
    for (std::size_t p = 0; p < n_paths; ++p) {
      mb.xi(TerminalArgs{p, &res.ensemble}, xi_n);
      fam.base.xi(TerminalArgs{p, &base.ensemble}, xi);
      double d2 = 0.0;
      for (std::size_t c = 0; c < m; ++c) d2 += (xi_n[c] - xi[c]) * (xi_n[c] - xi[c]);
      row.delta_xi += std::pow(d2, 0.5 * fam.p);
      double sup_a = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        h(i, p) = (*res.ensemble.A)(i, p) - (*base.ensemble.A)(i, p);
        sup_a = std::max(sup_a, std::abs(h(i, p)));
      }
      row.sup_A_diff += sup_a;
      row.exp_q_moment += std::exp(fam.q() * mb.constants.beta * (*res.ensemble.A)(M, p));
    }
    const auto bv = pathwise_bv(h);
    row.bv_H = std::accumulate(bv.begin(), bv.end(), 0.0);
    const double inv = 1.0 / static_cast<double>(n_paths);
    row.delta_xi *= inv;
    row.sup_A_diff *= inv;
    row.bv_H *= inv;
    row.exp_q_moment *= inv;
    rep.rows.push_back(row);
    errors.push_back(row.error);
    if (opt.keep_paths) {
      rep.member_Y.push_back(res.solution.Y);
      rep.member_A.push_back(*res.ensemble.A);
    }
    H.push_back(std::move(h));
  }
  if (opt.keep_paths) {
    rep.base_Y = base.solution.Y;
    rep.base_A = *base.ensemble.A;
  }
  rep.tail = bv_tail_curve(H, opt.nu_grid);
  rep.spearman = spearman(fam.index, errors);
  rep.trend_decreasing = errors.size() < 2 ? true : rep.spearman < 0.0;
  rep.final_below_threshold = errors.back() <= opt.threshold;
  return rep;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

struct HellyBrayOptions {
  std::vector<double> nu_ladder{0.25, 0.5, 1.0, 2.0};
  std::vector<double> tail_grid = default_nu_grid();
  double tail_level = 0.01;
  double tol = 0.02;
  BVMode mode = BVMode::linear;
  StieltjesOptions stieltjes;
};

struct HellyBrayRow {
  double n = 0.0;
  std::vector<double> phi;     ///< |E phi_nu(I_n) - E phi_nu(I)| per ladder entry
  double ks = 0.0;             ///< KS distance of I_n(T) vs I(T)
  double pathwise_sup = 0.0;   ///< E sup_t |I_n(t) - I(t)|
};

struct HellyBrayReport {
  std::vector<double> nu_ladder;
  std::vector<HellyBrayRow> rows;
  std::vector<TailPoint> tail;
  bool precondition_ok = false;
  Verdict verdict = Verdict::inconclusive;
};

namespace detail {

/// Integral process int_0^t <x d eta> of one path, reading x and eta through
/// PathArrays that may hold a single (broadcast) path.
inline std::vector<double> integral_path(const PathArray& x, const PathArray& eta, std::size_t p, BVMode mode,
                                         EvalPoint eval) {
  const std::size_t px = x.paths() == 1 ? 0 : p;
  const std::size_t pe = eta.paths() == 1 ? 0 : p;
  auto xa = [&](std::size_t i, std::size_t c) { return x(i, px, c); };
  auto ea = [&](std::size_t i, std::size_t c) { return eta(i, pe, c); };
  std::vector<double> out(x.nodes(), 0.0);
  for (std::size_t i = 0; i + 1 < x.nodes(); ++i) {
    out[i + 1] = out[i] + stieltjes_increment(xa, ea, i, x.dim(), mode, eval);
  }
  return out;
}

/// sup_t |x(T) - x(t)| capped at nu.
inline double phi_nu(const std::vector<double>& x, double nu) {
  double s = 0.0;
  for (double v : x) s = std::max(s, std::abs(x.back() - v));
  return std::min(s, nu);
}

}  // namespace detail

/// Distributional proxies for int <X_n dH_n> => int <X dH>: phi_nu distances,
/// KS at T and the coupled pathwise sup. Arrays holding one path are broadcast.
inline HellyBrayReport helly_bray_stochastic_check(const std::vector<double>& index, const std::vector<PathArray>& X_n,
                                                   const std::vector<PathArray>& H_n, const PathArray& X,
                                                   const PathArray& H, const HellyBrayOptions& opt = {}) {
  if (index.size() != X_n.size() || X_n.size() != H_n.size() || index.empty()) {
    throw DomainError("helly_bray_stochastic_check: sequence lengths differ");
  }
  std::size_t n_paths = std::max(X.paths(), H.paths());
  for (std::size_t j = 0; j < X_n.size(); ++j) n_paths = std::max({n_paths, X_n[j].paths(), H_n[j].paths()});
  auto check = [&](const PathArray& a, const char* what) {
    if (a.nodes() != X.nodes()) throw GridAlignmentError(std::string("helly_bray_stochastic_check: ") + what + " grid");
    if (a.paths() != 1 && a.paths() != n_paths) {
      throw DomainError(std::string("helly_bray_stochastic_check: ") + what + " has an incompatible path count");
    }
    if (a.dim() != X.dim()) throw DomainError(std::string("helly_bray_stochastic_check: ") + what + " dimension");
  };
  check(H, "H");
  for (std::size_t j = 0; j < X_n.size(); ++j) check(X_n[j], "X_n"), check(H_n[j], "H_n");

  HellyBrayReport rep;
  rep.nu_ladder = opt.nu_ladder;
  rep.tail = bv_tail_curve(H_n, opt.tail_grid);
  rep.precondition_ok =
      std::any_of(rep.tail.begin(), rep.tail.end(), [&](const TailPoint& t) { return t.fraction < opt.tail_level; });

  std::vector<std::vector<double>> limit(n_paths);
  std::vector<double> limit_T(n_paths);
  std::vector<double> limit_phi(opt.nu_ladder.size(), 0.0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    limit[p] = detail::integral_path(X, H, p, opt.mode, opt.stieltjes.eval);
    limit_T[p] = limit[p].back();
    for (std::size_t k = 0; k < opt.nu_ladder.size(); ++k) limit_phi[k] += detail::phi_nu(limit[p], opt.nu_ladder[k]);
  }
  const double inv = 1.0 / static_cast<double>(n_paths);
  for (double& v : limit_phi) v *= inv;

  for (std::size_t j = 0; j < X_n.size(); ++j) {
    HellyBrayRow row;
    row.n = index[j];
    std::vector<double> phi(opt.nu_ladder.size(), 0.0), at_T(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
      const auto I = detail::integral_path(X_n[j], H_n[j], p, opt.mode, opt.stieltjes.eval);
      at_T[p] = I.back();
      double s = 0.0;
      for (std::size_t i = 0; i < I.size(); ++i) s = std::max(s, std::abs(I[i] - limit[p][i]));
      row.pathwise_sup += s;
      for (std::size_t k = 0; k < opt.nu_ladder.size(); ++k) phi[k] += detail::phi_nu(I, opt.nu_ladder[k]);
    }
    row.pathwise_sup *= inv;
    for (std::size_t k = 0; k < phi.size(); ++k) row.phi.push_back(std::abs(phi[k] * inv - limit_phi[k]));
    row.ks = ks_statistic(at_T, limit_T);
    rep.rows.push_back(std::move(row));
  }

  if (!rep.precondition_ok) {
    rep.verdict = Verdict::inconclusive;
    return rep;
  }
  const HellyBrayRow& last = rep.rows.back();
  const double worst_phi = last.phi.empty() ? 0.0 : *std::max_element(last.phi.begin(), last.phi.end());
  std::vector<double> combined;
  for (const auto& r : rep.rows) {
    const double w = r.phi.empty() ? 0.0 : *std::max_element(r.phi.begin(), r.phi.end());
    combined.push_back(std::max(w, r.ks));
  }
  const bool shrinking = combined.size() < 2 || combined.back() <= combined.front();
  rep.verdict = worst_phi <= opt.tol && last.ks <= opt.tol && shrinking ? Verdict::pass : Verdict::fail;
  return rep;
}

}  // namespace tdbsde
