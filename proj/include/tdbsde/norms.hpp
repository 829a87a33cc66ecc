#pragma once

#include <cmath>
#include <sstream>

#include "tdbsde/errors.hpp"
#include "tdbsde/path_array.hpp"
#include "tdbsde/time_grid.hpp"

namespace tdbsde {

/// Monte Carlo estimates of the three parts of a solution norm.
struct NormReport {
  double sup_term = 0.0;  ///< E sup_t w(t)|Y(t)|^p
  double dA_term = 0.0;   ///< E (int w|Y|^2 dA)^(p/2)
  double dt_term = 0.0;   ///< E (int w|Z|^2 dt)^(p/2)
  double p = 2.0;
  double beta = 0.0;
  double alpha = 0.0;
  double a = 1.0;
  double b = 1.0;

  /// sup_term + a * dA_term + b * dt_term (the p-th power of the norm).
  double total() const noexcept { return sup_term + a * dA_term + b * dt_term; }
  double norm() const noexcept { return std::pow(total(), 1.0 / p); }
};

namespace detail {

inline double squared_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

/// Shared kernel; weight w(t) = exp(alpha t + beta A(t)). A may hold a single
/// path, which is then used for every path of Y/Z.
inline NormReport norm_terms(const PathArray& Y, const PathArray& Z, const PathArray& A, const TimeGrid& g,
                             double p, double alpha, double beta) {
  if (Y.nodes() != g.size() || Z.nodes() != g.size() || A.nodes() != g.size()) {
    throw GridAlignmentError("norm: ensembles do not share the grid");
  }
  if (Y.paths() != Z.paths() || (A.paths() != 1 && A.paths() != Y.paths())) {
    throw DomainError("norm: ensembles have different path counts");
  }
  if (p < 2.0) throw DomainError("norm: p must be >= 2");
  NormReport r;
  r.p = p;
  r.alpha = alpha;
  r.beta = beta;
  const std::size_t n = Y.paths();
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t qa = A.paths() == 1 ? 0 : q;
    double sup = 0.0, dA = 0.0, dt = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double w = std::exp(alpha * g[i] + beta * A(i, qa));
      if (!std::isfinite(w)) {
        std::ostringstream os;
        os << "norm: weight exp(alpha t + beta A) overflowed at t=" << g[i] << " (beta*A(T) too large?)";
        throw NumericOverflowError(os.str());
      }
      const double y2 = squared_norm(Y.at(i, q));
      sup = std::max(sup, w * std::pow(y2, 0.5 * p));
      if (i + 1 < g.size()) {
        dA += w * y2 * (A(i + 1, qa) - A(i, qa));
        dt += w * squared_norm(Z.at(i, q)) * g.step(i);
      }
    }
    r.sup_term += sup;
    r.dA_term += std::pow(dA, 0.5 * p);
    r.dt_term += std::pow(dt, 0.5 * p);
  }
  r.sup_term /= static_cast<double>(n);
  r.dA_term /= static_cast<double>(n);
  r.dt_term /= static_cast<double>(n);
  if (!std::isfinite(r.sup_term) || !std::isfinite(r.dA_term) || !std::isfinite(r.dt_term)) {
    throw NumericOverflowError("norm: non-finite estimate");
  }
  return r;
}

}  // namespace detail

/// ||(Y, Z)||_{p,beta}^p estimated over the ensemble (left-point sums).
inline NormReport weighted_norm(const PathArray& Y, const PathArray& Z, const PathArray& A, const TimeGrid& g,
                                double p, double beta) {
  if (beta < 0.0) throw DomainError("weighted_norm: beta must be nonnegative");
  return detail::norm_terms(Y, Z, A, g, p, 0.0, beta);
}

/// Squared equivalent norm
/// E sup e^{alpha t + beta A}|dY|^2 + a E int e^{..}|dY|^2 dA + b E int e^{..}|dZ|^2 ds.
inline NormReport equivalent_norm(const PathArray& dY, const PathArray& dZ, const PathArray& A, const TimeGrid& g,
                                  double alpha, double beta, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("equivalent_norm: a and b must be positive");
  NormReport r = detail::norm_terms(dY, dZ, A, g, 2.0, alpha, beta);
  r.a = a;
  r.b = b;
  return r;
}

}  // namespace tdbsde
