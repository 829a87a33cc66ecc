#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tdbsde/errors.hpp"
#include "tdbsde/grid_function.hpp"

namespace tdbsde {

/// Where the integrand is read inside each grid interval of a Stieltjes sum.
/// Only consulted for BVMode::linear integrators; a step integrator has all of
/// its mass in jumps at the right end of each interval, so the integrand is
/// always read there.
enum class EvalPoint { left, midpoint, right };

struct StieltjesOptions {
  EvalPoint eval = EvalPoint::left;
};

namespace detail {

inline void require_same_grid(const GridPtr& a, const GridPtr& b, const char* what) {
  if (!same_grid(a, b)) throw GridAlignmentError(std::string(what) + ": functions live on different grids");
}

/// Contribution of interval [t_i, t_{i+1}] to the sum of <x d eta>.
/// `x(i, c)` and `eta(i, c)` are accessors, so the same arithmetic serves
/// single grid functions and ensemble paths.
template <class X, class Eta>
inline double stieltjes_increment(const X& x, const Eta& eta, std::size_t i, std::size_t dim, BVMode mode,
                                  EvalPoint eval) {
  double s = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    double xv;
    if (mode == BVMode::step || eval == EvalPoint::right) {
      xv = x(i + 1, c);
    } else if (eval == EvalPoint::left) {
      xv = x(i, c);
    } else {
      xv = 0.5 * (x(i, c) + x(i + 1, c));
    }
    s += xv * (eta(i + 1, c) - eta(i, c));
  }
  return s;
}

}  // namespace detail

/// Partition sum of |eta(t_i) - eta(t_{i-1})| over the nodes in [s, t].
inline double total_variation(const BVFunction& eta, double s, double t) {
  const std::size_t is = eta.grid().index_of(s);
  const std::size_t it = eta.grid().index_of(t);
  if (is > it) throw DomainError("total_variation: s must not exceed t");
  return eta.prefix_variation(it) - eta.prefix_variation(is);
}

/// |eta(0)| + V_0^T(eta).
inline double bv_norm(const BVFunction& eta) {
  double s = 0.0;
  for (std::size_t c = 0; c < eta.dim(); ++c) s += eta(0, c) * eta(0, c);
  return std::sqrt(s) + eta.cached_total_variation();
}

/// Stieltjes sum of <x d eta> over the nodes in [a, b].
inline double stieltjes_integral(const GridFunction& x, const BVFunction& eta, double a, double b,
                                 StieltjesOptions opts = {}) {
  detail::require_same_grid(x.grid_ptr(), eta.grid_ptr(), "stieltjes_integral");
  if (x.dim() != eta.dim()) throw DomainError("stieltjes_integral: dimension mismatch");
  const std::size_t ia = eta.grid().index_of(a);
  const std::size_t ib = eta.grid().index_of(b);
  if (ia > ib) throw DomainError("stieltjes_integral: a must not exceed b");
  double s = 0.0;
  for (std::size_t i = ia; i < ib; ++i) s += detail::stieltjes_increment(x, eta, i, x.dim(), eta.mode(), opts.eval);
  return s;
}

/// The running integral t -> int_0^t <x d eta> on every node.
inline GridFunction stieltjes_process(const GridFunction& x, const BVFunction& eta, StieltjesOptions opts = {}) {
  detail::require_same_grid(x.grid_ptr(), eta.grid_ptr(), "stieltjes_process");
  if (x.dim() != eta.dim()) throw DomainError("stieltjes_process: dimension mismatch");
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    out[i + 1] = out[i] + detail::stieltjes_increment(x, eta, i, x.dim(), eta.mode(), opts.eval);
  }
  return GridFunction(x.grid_ptr(), std::move(out), 1);
}

/// Which prolongation rule applies before time 0.
enum class SegmentKind {
  state_like,    ///< held at the initial value (Y-type)
  control_like,  ///< zero (Z-type)
};

/// The window theta -> x(t + theta), theta in [-delta, 0], sampled on the grid step.
struct DelayedSegment {
  std::vector<double> theta;
  std::vector<double> values;
  std::size_t dim = 1;

  double operator()(std::size_t j, std::size_t c = 0) const noexcept { return values[j * dim + c]; }
  std::size_t size() const noexcept { return theta.size(); }
};

inline DelayedSegment delayed_segment(const GridFunction& x, double t, SegmentKind kind) {
  const TimeGrid& g = x.grid();
  const std::size_t i = g.index_of(t);
  const std::size_t k = g.delay_steps();
  const double h = k > 0 ? g.step(0) : 0.0;
  DelayedSegment seg;
  seg.dim = x.dim();
  seg.theta.resize(k + 1);
  seg.values.resize((k + 1) * x.dim());
  for (std::size_t j = 0; j <= k; ++j) {
    seg.theta[j] = -static_cast<double>(k - j) * h;
    const auto node = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(k - j);
    for (std::size_t c = 0; c < x.dim(); ++c) {
      double v;
      if (node >= 0) {
        v = x(static_cast<std::size_t>(node), c);
      } else {
        v = kind == SegmentKind::state_like ? x(0, c) : 0.0;
      }
      seg.values[j * x.dim() + c] = v;
    }
  }
  return seg;
}

/// Step function x^N = 1_{0} x(0) + sum 1_{(t_{i-1}, t_i]} x(t_i) for the
/// partition, sampled back on x's own grid.
inline GridFunction step_approximation(const GridFunction& x, const TimeGrid& partition) {
  const TimeGrid& g = x.grid();
  if (std::abs(partition.horizon() - g.horizon()) > TimeGrid::kAlignTol * std::max(1.0, g.horizon())) {
    throw GridAlignmentError("step_approximation: partition does not cover [0, T]");
  }
  std::vector<std::size_t> at(partition.size());
  for (std::size_t j = 0; j < partition.size(); ++j) {
    auto idx = g.find(partition[j]);
    if (!idx) throw GridAlignmentError("step_approximation: partition is not nested in the grid");
    at[j] = *idx;
  }
  std::vector<double> out(x.size() * x.dim());
  std::size_t j = 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t src = 0;
    if (i > 0) {
      while (at[j] < i) ++j;
      src = at[j];
    }
    for (std::size_t c = 0; c < x.dim(); ++c) out[i * x.dim() + c] = x(src, c);
  }
  return GridFunction(x.grid_ptr(), std::move(out), x.dim());
}

/// max over nodes of |f(t) - g(t)|.
inline double sup_distance(const GridFunction& f, const GridFunction& g) {
  detail::require_same_grid(f.grid_ptr(), g.grid_ptr(), "sup_distance");
  if (f.dim() != g.dim()) throw DomainError("sup_distance: dimension mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < f.dim(); ++c) {
      const double d = f(i, c) - g(i, c);
      s += d * d;
    }
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

/// For each n, sup_t |int_0^t <x_n d eta_n> - int_0^t <x d eta>|.
inline std::vector<double> helly_bray_distance(const std::vector<GridFunction>& x_seq,
                                               const std::vector<BVFunction>& eta_seq, const GridFunction& x,
                                               const BVFunction& eta, StieltjesOptions opts = {}) {
  if (x_seq.size() != eta_seq.size()) throw DomainError("helly_bray_distance: sequence lengths differ");
  const GridFunction limit = stieltjes_process(x, eta, opts);
  std::vector<double> out;
  out.reserve(x_seq.size());
  for (std::size_t n = 0; n < x_seq.size(); ++n) {
    detail::require_same_grid(x_seq[n].grid_ptr(), x.grid_ptr(), "helly_bray_distance");
    if (!std::isfinite(bv_norm(eta_seq[n]))) throw DomainError("helly_bray_distance: integrator is not BV");
    out.push_back(sup_distance(stieltjes_process(x_seq[n], eta_seq[n], opts), limit));
  }
  return out;
}

}  // namespace tdbsde
