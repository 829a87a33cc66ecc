#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "tdbsde/errors.hpp"
#include "tdbsde/grid_function.hpp"
#include "tdbsde/path_array.hpp"

namespace tdbsde {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the random stream owned by path `path`. Each path draws from its
/// own mt19937_64, so path p is identical whatever n_paths or thread count.
constexpr std::uint64_t path_stream_seed(std::uint64_t seed, std::uint64_t path) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(path + 0x632BE59BD9B4E019ULL));
}

/// Nondecreasing adapted process A with A(0) = 0, described by kind.
class IncreasingProcessSpec {
 public:
  enum class Kind { deterministic, running_maximum, time_integral, oscillatory };

  IncreasingProcessSpec() : IncreasingProcessSpec(identity()) {}

  /// A(t) = f(t) on every path; f(0) must be 0.
  static IncreasingProcessSpec deterministic(std::function<double(double)> f, std::string label) {
    IncreasingProcessSpec s(Kind::deterministic, std::move(label));
    s.function_ = std::move(f);
    return s;
  }
  static IncreasingProcessSpec identity() {
    return deterministic([](double t) { return t; }, "t");
  }
  static IncreasingProcessSpec zero() {
    return deterministic([](double) { return 0.0; }, "0");
  }
  /// A(t) = scale * t^power.
  static IncreasingProcessSpec power(double power, double scale = 1.0) {
    std::ostringstream os;
    os << scale << "*t^" << power;
    return deterministic([power, scale](double t) { return scale * std::pow(t, power); }, os.str());
  }
  /// A(t) = max_{s <= t} W_c(s).
  static IncreasingProcessSpec running_maximum(std::size_t component = 0) {
    IncreasingProcessSpec s(Kind::running_maximum, "running-max");
    s.component_ = component;
    return s;
  }
  /// A(t) = int_0^t phi(W_c(s)) ds with left-point sums; phi must be >= 0.
  static IncreasingProcessSpec time_integral(std::function<double(double)> phi, std::string label,
                                             std::size_t component = 0) {
    IncreasingProcessSpec s(Kind::time_integral, std::move(label));
    s.function_ = std::move(phi);
    s.component_ = component;
    return s;
  }
  /// A^n(t) = base(t) + T sin(2 pi n t / T) / (4 pi n).
  static IncreasingProcessSpec oscillatory(IncreasingProcessSpec base, double n) {
    if (!(n > 0.0)) throw DomainError("oscillatory perturbation needs n > 0");
    std::ostringstream os;
    os << "oscillatory(" << base.label() << ",n=" << n << ")";
    IncreasingProcessSpec s(Kind::oscillatory, os.str());
    s.base_ = std::make_shared<const IncreasingProcessSpec>(std::move(base));
    s.n_ = n;
    return s;
  }

  Kind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }
  std::size_t component() const noexcept { return component_; }
  double index() const noexcept { return n_; }

  bool is_stochastic() const noexcept {
    switch (kind_) {
      case Kind::deterministic: return false;
      case Kind::oscillatory: return base_->is_stochastic();
      default: return true;
    }
  }

  /// Writes A(t_0..t_M) of path p into `out`; reads only W(t_0..t_i) for A(t_i).
  void realize_path(const TimeGrid& grid, const PathArray* W, std::size_t p, std::span<double> out) const {
    const std::size_t n = grid.size();
    switch (kind_) {
      case Kind::deterministic:
        for (std::size_t i = 0; i < n; ++i) out[i] = function_(grid[i]);
        break;
      case Kind::running_maximum: {
        require_w(W);
        double m = (*W)(0, p, component_);
        const double w0 = m;
        for (std::size_t i = 0; i < n; ++i) {
          m = std::max(m, (*W)(i, p, component_));
          out[i] = m - w0;
        }
        break;
      }
      case Kind::time_integral: {
        require_w(W);
        out[0] = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
          out[i] = out[i - 1] + function_((*W)(i - 1, p, component_)) * grid.step(i - 1);
        }
        break;
      }
      case Kind::oscillatory: {
        base_->realize_path(grid, W, p, out);
        const double T = grid.horizon();
        const double amp = T / (4.0 * std::numbers::pi * n_);
        for (std::size_t i = 0; i < n; ++i) out[i] += amp * std::sin(2.0 * std::numbers::pi * n_ * grid[i] / T);
        break;
      }
    }
  }

 private:
  IncreasingProcessSpec(Kind kind, std::string label) : kind_(kind), label_(std::move(label)) {}

  void require_w(const PathArray* W) const {
    if (!W || W->dim() <= component_) throw DomainError("increasing process '" + label_ + "' needs Brownian paths");
  }

  Kind kind_;
  std::string label_;
  std::function<double(double)> function_;
  std::size_t component_ = 0;
  std::shared_ptr<const IncreasingProcessSpec> base_;
  double n_ = 0.0;
};

/// Brownian paths plus (optionally) one realized increasing process, all on
/// one grid. Immutable after construction; copies share storage.
struct PathEnsemble {
  GridPtr grid;
  std::uint64_t seed = 0;
  std::shared_ptr<const PathArray> W;
  std::shared_ptr<const PathArray> A;
  std::shared_ptr<const IncreasingProcessSpec> A_spec;

  std::size_t paths() const noexcept { return W ? W->paths() : (A ? A->paths() : 0); }
  std::size_t dim() const noexcept { return W ? W->dim() : 0; }
  std::size_t nodes() const noexcept { return grid->size(); }
  bool has_A() const noexcept { return A != nullptr; }
  /// Decided by the spec when known, otherwise by whether any two A paths differ.
  bool A_is_stochastic() const noexcept {
    if (A_spec) return A_spec->is_stochastic();
    if (!A) return false;
    for (std::size_t i = 0; i < A->nodes(); ++i) {
      for (std::size_t p = 1; p < A->paths(); ++p) {
        if ((*A)(i, p) != (*A)(i, 0)) return true;
      }
    }
    return false;
  }
};

/// Wraps externally supplied Brownian paths (n_nodes x n_paths x d) as an ensemble.
inline PathEnsemble ensemble_from_paths(GridPtr grid, PathArray W, std::uint64_t seed = 0) {
  if (W.nodes() != grid->size()) throw GridAlignmentError("ensemble_from_paths: node count does not match grid");
  PathEnsemble e;
  e.grid = std::move(grid);
  e.seed = seed;
  e.W = std::make_shared<const PathArray>(std::move(W));
  return e;
}

/// n_paths independent d-dimensional Brownian motions on `grid`.
inline PathEnsemble simulate_brownian(GridPtr grid, std::size_t n_paths, std::size_t d, std::uint64_t seed,
                                      unsigned threads = 1) {
  if (n_paths == 0) throw DomainError("simulate_brownian: need at least one path");
  if (d == 0) throw DomainError("simulate_brownian: dimension must be positive");
  PathArray W(grid->size(), n_paths, d);
  std::vector<double> sq(grid->steps());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = std::sqrt(grid->step(i));
  parallel_for(n_paths, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      std::mt19937_64 rng(path_stream_seed(seed, p));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::size_t i = 0; i + 1 < grid->size(); ++i) {
        for (std::size_t c = 0; c < d; ++c) W(i + 1, p, c) = W(i, p, c) + sq[i] * normal(rng);
      }
    }
  });
  return ensemble_from_paths(std::move(grid), std::move(W), seed);
}

/// Copy of `ens` with A realized from `spec`; checks A(0) = 0 and monotonicity.
inline PathEnsemble realize_increasing_process(const IncreasingProcessSpec& spec, const PathEnsemble& ens,
                                               unsigned threads = 1) {
  const TimeGrid& g = *ens.grid;
  const std::size_t n_paths = std::max<std::size_t>(1, ens.paths());
  PathArray A(g.size(), n_paths, 1);
  std::vector<std::string> failures(n_paths);
  parallel_for(n_paths, threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> buf(g.size());
    for (std::size_t p = b; p < e; ++p) {
      spec.realize_path(g, ens.W.get(), p, buf);
      if (std::abs(buf[0]) > 1e-14) failures[p] = "A(0) != 0";
      buf[0] = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (i > 0 && buf[i] < buf[i - 1] && failures[p].empty()) {
          std::ostringstream os;
          os << "decreases between t=" << g[i - 1] << " and t=" << g[i];
          failures[p] = os.str();
        }
        A(i, p) = buf[i];
      }
    }
  });
  for (std::size_t p = 0; p < n_paths; ++p) {
    if (!failures[p].empty()) {
      std::ostringstream os;
      os << "increasing process '" << spec.label() << "' on path " << p << ": " << failures[p];
      throw MonotonicityViolation(os.str());
    }
  }
  PathEnsemble out = ens;
  out.A = std::make_shared<const PathArray>(std::move(A));
  out.A_spec = std::make_shared<const IncreasingProcessSpec>(spec);
  return out;
}

namespace detail {
template <class At>
double omega_delta_impl(const TimeGrid& g, double delta, At&& a) {
  if (delta > g.horizon() * (1.0 + TimeGrid::kAlignTol)) throw DomainError("omega_delta: delta exceeds the horizon");
  if (delta < 0.0) throw DomainError("omega_delta: delta must be nonnegative");
  double best = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] + delta > g.horizon() * (1.0 + TimeGrid::kAlignTol)) break;
    const auto j = g.find(g[i] + delta);
    if (!j) throw GridAlignmentError("omega_delta: delta is not grid aligned");
    best = std::max(best, a(*j) - a(i));
  }
  return best;
}
}  // namespace detail

/// sup_{t in [0, T - delta]} (A(t + delta) - A(t)) over grid nodes.
inline double omega_delta(const GridFunction& A, double delta) {
  return detail::omega_delta_impl(A.grid(), delta, [&](std::size_t i) { return A(i); });
}

inline double omega_delta(const PathArray& A, const TimeGrid& g, std::size_t path, double delta) {
  return detail::omega_delta_impl(g, delta, [&](std::size_t i) { return A(i, path); });
}

}  // namespace tdbsde
