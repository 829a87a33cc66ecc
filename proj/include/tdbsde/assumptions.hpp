#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tdbsde/errors.hpp"
#include "tdbsde/problem.hpp"
#include "tdbsde/stochastic_engine.hpp"

namespace tdbsde {

/// c_{beta,L~} = min{(beta^2 - 8 L~^2) / (4 beta^2), 1/584}.
inline double c_threshold(double beta, double L_tilde) {
  if (!(beta > 2.0 * std::numbers::sqrt2 * L_tilde)) {
    std::ostringstream os;
    os << "c_threshold: beta=" << beta << " <= 2*sqrt(2)*L_tilde=" << 2.0 * std::numbers::sqrt2 * L_tilde;
    throw ConstraintViolation(os.str());
  }
  return std::min((beta * beta - 8.0 * L_tilde * L_tilde) / (4.0 * beta * beta), 1.0 / 584.0);
}

/// Contraction factor max{c(2+l), 8 L~^2 (2+l) / (l beta^2), 2c(2+l)/(l-288)} for l > 288.
inline double mu_lambda(double lambda, double c, double beta, double L_tilde) {
  if (!(lambda > 288.0)) throw DomainError("mu_lambda: lambda must exceed 288");
  const double first = c * (2.0 + lambda);
  const double second = 8.0 * L_tilde * L_tilde * (2.0 + lambda) / (lambda * beta * beta);
  const double third = 2.0 * c * (2.0 + lambda) / (lambda - 288.0);
  return std::max({first, second, third});
}

/// Weights of the equivalent norm chosen from a lambda scan.
struct LambdaChoice {
  double lambda = 0.0;
  double mu = 1.0;
  double a = 0.0;  ///< lambda * beta / 2
  double b = 0.0;  ///< lambda / 2 - 144
};

/// Minimizes mu_lambda over 200 log-spaced lambda in
/// (288 (1 + 1e-6), 10 max(288, 1/(2c) - 2)).
inline LambdaChoice select_lambda(double c, double beta, double L_tilde) {
  const double threshold = c_threshold(beta, L_tilde);
  if (!(c > 0.0) || c >= threshold) {
    std::ostringstream os;
    os << "select_lambda: need 0 < c < c_threshold=" << threshold << ", got c=" << c;
    throw ConstraintViolation(os.str());
  }
  constexpr int kPoints = 200;
  const double lo = 288.0 * (1.0 + 1e-6);
  const double hi = 10.0 * std::max(288.0, 1.0 / (2.0 * c) - 2.0);
  LambdaChoice best;
  best.mu = std::numeric_limits<double>::infinity();
  for (int j = 0; j < kPoints; ++j) {
    const double lambda = lo * std::pow(hi / lo, static_cast<double>(j) / (kPoints - 1));
    const double mu = mu_lambda(lambda, c, beta, L_tilde);
    if (mu < best.mu) {
      best.lambda = lambda;
      best.mu = mu;
    }
  }
  if (!(best.mu < 1.0)) throw ConstraintViolation("select_lambda: no lambda in the scan gives mu < 1");
  best.a = best.lambda * beta / 2.0;
  best.b = best.lambda / 2.0 - 144.0;
  return best;
}

/// Per-path outcome of an almost-sure smallness condition.
struct ConditionCheck {
  std::string name;
  double c = 0.0;
  std::vector<double> lhs;
  std::vector<bool> pass;
  double worst_margin = 0.0;  ///< min over paths of c - lhs
  double fail_fraction = 0.0;

  bool all_pass() const noexcept { return fail_fraction == 0.0; }
};

namespace detail {

inline double delay_exponent(const ProblemSpec& pb, const PathEnsemble& ens, std::size_t p) {
  const double alpha = 8.0 * pb.constants.L * pb.constants.L + 0.5;
  const double omega = omega_delta(*ens.A, *ens.grid, p, pb.delta);
  return alpha * pb.delta + pb.constants.beta * omega;
}

template <class Lhs>
ConditionCheck run_condition(std::string name, const PathEnsemble& ens, double c, Lhs&& lhs) {
  if (!ens.A) throw DomainError(name + ": ensemble has no increasing process");
  if (!(c > 0.0)) throw DomainError(name + ": c must be positive");
  ConditionCheck r;
  r.name = std::move(name);
  r.c = c;
  const std::size_t n = ens.A->paths();
  r.lhs.resize(n);
  r.pass.resize(n);
  r.worst_margin = std::numeric_limits<double>::infinity();
  std::size_t fails = 0;
  for (std::size_t p = 0; p < n; ++p) {
    r.lhs[p] = lhs(p);
    r.pass[p] = r.lhs[p] <= c;
    fails += r.pass[p] ? 0 : 1;
    r.worst_margin = std::min(r.worst_margin, c - r.lhs[p]);
  }
  r.fail_fraction = static_cast<double>(fails) / static_cast<double>(n);
  return r;
}

}  // namespace detail

/// (H1): K_1 max{1,T} exp((8L^2 + 1/2) delta + beta omega_delta) / (4 L^2) <= c, path by path.
inline ConditionCheck check_H1(const ProblemSpec& pb, const PathEnsemble& ens, double c) {
  const double L = pb.constants.L;
  return detail::run_condition("H1", ens, c, [&](std::size_t p) {
    const double K1 = pb.K.sup(*ens.grid, p, &ens);
    if (K1 == 0.0) return 0.0;
    return K1 * std::max(1.0, pb.T) * std::exp(detail::delay_exponent(pb, ens, p)) / (4.0 * L * L);
  });
}

/// (H2): 4 K~_1 A(T) exp((8L^2 + 1/2) delta + beta omega_delta) / beta <= c, path by path.
inline ConditionCheck check_H2(const ProblemSpec& pb, const PathEnsemble& ens, double c) {
  return detail::run_condition("H2", ens, c, [&](std::size_t p) {
    const double K1 = pb.K_tilde.sup(*ens.grid, p, &ens);
    const double AT = (*ens.A)(ens.grid->size() - 1, p);
    if (K1 == 0.0 || AT == 0.0) return 0.0;
    return 4.0 * K1 * AT * std::exp(detail::delay_exponent(pb, ens, p)) / pb.constants.beta;
  });
}

/// Which generator slot is being probed.
enum class DriverRole { F, G };

struct ProbeSpec {
  std::size_t m = 1;
  std::size_t d = 1;
  double T = 1.0;
  double delta = 0.1;
  std::size_t window = 10;  ///< grid steps spanned by the delay
  std::size_t samples = 2000;
  std::uint64_t seed = 1;
  double box = 5.0;
  AtomMeasure rho = AtomMeasure::dirac(0.0);
};

/// Empirical lower bounds on the Lipschitz constant in (y, z) and on sup K.
struct LipschitzEstimate {
  double lipschitz = 0.0;  ///< L for F, L~ for G
  double delay = 0.0;      ///< K_1 for F, K~_1 for G
  double declared_lipschitz = 0.0;
  double declared_delay = 0.0;
  bool lipschitz_violation = false;
  bool delay_violation = false;
  std::size_t samples = 0;
};

/// Difference quotients of a generator on random argument pairs. Half of the
/// delay probes perturb the whole segment by a constant, which attains the
/// sup for generators that act through rho-averages.
inline LipschitzEstimate probe_lipschitz(const Driver& drv, DriverRole role, const ProbeSpec& spec,
                                         double declared_lipschitz, double declared_delay) {
  const std::size_t m = spec.m;
  const std::size_t zd = role == DriverRole::F ? spec.m * spec.d : 0;
  const std::size_t cnt = spec.window + 1;
  const double dtheta = spec.window > 0 ? spec.delta / static_cast<double>(spec.window) : 0.0;
  std::mt19937_64 rng(path_stream_seed(spec.seed, 0));
  std::uniform_real_distribution<double> U(-spec.box, spec.box);
  std::uniform_real_distribution<double> Ut(0.0, spec.T);
  auto fill = [&](std::vector<double>& v) {
    for (double& x : v) x = U(rng);
  };
  std::vector<double> y(m), y2(m), z(zd), z2(zd), ys(cnt * m), ys2(cnt * m), zs(cnt * zd), zs2(cnt * zd);
  std::vector<double> out1(m), out2(m);
  auto view = [&](const std::vector<double>& buf, std::size_t dim) {
    return SegmentView{buf.data(), static_cast<std::ptrdiff_t>(dim), dim, dim == 0 ? 0 : cnt, dtheta};
  };
  auto eval = [&](double t, const std::vector<double>& yy, const std::vector<double>& zz,
                  const std::vector<double>& ysg, const std::vector<double>& zsg, std::vector<double>& out) {
    GeneratorArgs a;
    a.t = t;
    a.y = yy;
    a.z = zz;
    a.y_seg = view(ysg, m);
    a.z_seg = view(zsg, zd);
    drv(a, out);
  };
  auto dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };

  LipschitzEstimate est;
  est.declared_lipschitz = declared_lipschitz;
  est.declared_delay = declared_delay;
  est.samples = spec.samples;
  for (std::size_t s = 0; s < spec.samples; ++s) {
    const double t = Ut(rng);
    fill(y), fill(y2), fill(z), fill(z2), fill(ys), fill(zs);
    eval(t, y, z, ys, zs, out1);
    eval(t, y2, z2, ys, zs, out2);
    const double den = dist(y, y2) + dist(z, z2);
    if (den > 0.0) est.lipschitz = std::max(est.lipschitz, dist(out1, out2) / den);

    if (s % 2 == 0) {
      const double shift = U(rng);
      for (std::size_t i = 0; i < ys.size(); ++i) ys2[i] = ys[i] + shift;
      for (std::size_t i = 0; i < zs.size(); ++i) zs2[i] = zs[i] + shift;
    } else {
      fill(ys2), fill(zs2);
    }
    eval(t, y, z, ys2, zs2, out2);
    std::vector<double> dy(ys.size()), dz(zs.size());
    for (std::size_t i = 0; i < ys.size(); ++i) dy[i] = ys[i] - ys2[i];
    for (std::size_t i = 0; i < zs.size(); ++i) dz[i] = zs[i] - zs2[i];
    const double seg_den = spec.rho.integrate_squared(view(dy, m)) + (zd ? spec.rho.integrate_squared(view(dz, zd)) : 0.0);
    if (seg_den > 0.0) {
      const double num = dist(out1, out2);
      est.delay = std::max(est.delay, num * num / seg_den);
    }
  }
  est.lipschitz_violation = est.lipschitz > declared_lipschitz + 1e-9;
  est.delay_violation = est.delay > declared_delay + 1e-9;
  return est;
}

/// Monte Carlo estimate of one integrability moment.
struct MomentEstimate {
  std::string name;
  double value = 0.0;
  bool finite = true;
  /// Top 1% of samples carry more than half of the estimate.
  bool heavy_tail = false;
};

struct IntegrabilityOptions {
  double p = 2.0;
  std::vector<double> r_ladder{1.0, 2.0, 4.0, 8.0};
};

/// Mean of nonnegative samples with finiteness and heavy-tail flags.
inline MomentEstimate summarize_moment(std::string name, std::vector<double> samples) {
  MomentEstimate m;
  m.name = std::move(name);
  double total = 0.0;
  for (double s : samples) total += s;
  m.value = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
  m.finite = std::isfinite(m.value);
  if (m.finite && total > 0.0) {
    std::sort(samples.begin(), samples.end(), std::greater<>());
    const std::size_t top = std::max<std::size_t>(1, (samples.size() + 99) / 100);
    double head = 0.0;
    for (std::size_t i = 0; i < top; ++i) head += samples[i];
    m.heavy_tail = head > 0.5 * total;
  }
  return m;
}

/// Moments behind (A0), (A1), (A0'), (A0''), (A1'), (A1''), (A1''').
inline std::vector<MomentEstimate> check_integrability(const ProblemSpec& pb, const PathEnsemble& ens,
                                                       const IntegrabilityOptions& opt = {}) {
  if (!ens.A) throw DomainError("check_integrability: ensemble has no increasing process");
  const TimeGrid& g = *ens.grid;
  const std::size_t n = ens.A->paths();
  const std::size_t M = g.size() - 1;
  const double beta = pb.constants.beta;
  const double p = opt.p;
  std::vector<double> zeros(std::max(pb.m * pb.d, pb.m), 0.0);
  const std::size_t cnt = g.delay_steps() + 1;
  const double dth = g.delay_steps() > 0 ? g.step(0) : 0.0;
  const SegmentView zy{zeros.data(), 0, pb.m, cnt, dth};
  const SegmentView zz{zeros.data(), 0, pb.m * pb.d, cnt, dth};

  std::vector<double> a0(n), a1(n), a0p(n), a1p(n), a1pp(n), a1ppp(n);
  std::vector<std::vector<double>> a0pp(opt.r_ladder.size(), std::vector<double>(n));
  std::vector<double> xi(pb.m), f0(pb.m), g0(pb.m);
  for (std::size_t q = 0; q < n; ++q) {
    pb.xi(TerminalArgs{q, &ens}, xi);
    double xi2 = 0.0;
    for (double v : xi) xi2 += v * v;
    const double AT = (*ens.A)(M, q);
    a0[q] = std::exp(beta * AT) * (1.0 + xi2);
    a0p[q] = std::exp(p * beta * AT) * std::pow(xi2, p);
    for (std::size_t r = 0; r < opt.r_ladder.size(); ++r) a0pp[r][q] = std::exp(opt.r_ladder[r] * AT);
    double intF = 0.0, intG_dA = 0.0, intG_dt = 0.0, supG = 0.0;
    for (std::size_t i = 0; i <= M; ++i) {
      GeneratorArgs args;
      args.t = g[i];
      args.step = i;
      args.path = q;
      args.y = std::span<const double>(zeros.data(), pb.m);
      args.z = std::span<const double>(zeros.data(), pb.m * pb.d);
      args.y_seg = zy;
      args.z_seg = zz;
      args.omega = &ens;
      pb.F(args, f0);
      args.z = {};
      args.z_seg = {};
      pb.G(args, g0);
      double f2 = 0.0, g2 = 0.0;
      for (double v : f0) f2 += v * v;
      for (double v : g0) g2 += v * v;
      supG = std::max(supG, std::pow(g2, p));
      if (i < M) {
        const double w = std::exp(beta * (*ens.A)(i, q));
        intF += w * f2 * g.step(i);
        intG_dt += w * g2 * g.step(i);
        intG_dA += w * g2 * ((*ens.A)(i + 1, q) - (*ens.A)(i, q));
      }
    }
    a1[q] = intF + intG_dA;
    a1p[q] = std::pow(intF, p);
    a1pp[q] = std::pow(intG_dt, p);
    a1ppp[q] = supG;
  }
  std::vector<MomentEstimate> out;
  out.push_back(summarize_moment("A0: E[exp(beta A_T)(1+|xi|^2)]", std::move(a0)));
  out.push_back(summarize_moment("A1: E[int e^{beta A}|F0|^2 dt + int e^{beta A}|G0|^2 dA]", std::move(a1)));
  out.push_back(summarize_moment("A0': E[exp(p beta A_T)|xi|^{2p}]", std::move(a0p)));
  for (std::size_t r = 0; r < opt.r_ladder.size(); ++r) {
    std::ostringstream os;
    os << "A0'': E[exp(" << opt.r_ladder[r] << " A_T)]";
    out.push_back(summarize_moment(os.str(), std::move(a0pp[r])));
  }
  out.push_back(summarize_moment("A1': E[(int e^{beta A}|F0|^2 dt)^p]", std::move(a1p)));
  out.push_back(summarize_moment("A1'': E[(int e^{beta A}|G0|^2 dt)^p]", std::move(a1pp)));
  out.push_back(summarize_moment("A1''': E[sup |G0|^{2p}]", std::move(a1ppp)));
  return out;
}

}  // namespace tdbsde
