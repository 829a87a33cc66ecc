#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdbsde/errors.hpp"
#include "tdbsde/path_array.hpp"
#include "tdbsde/stochastic_engine.hpp"

namespace tdbsde {

/// Probability measure on [-delta, 0] given as finitely many atoms. Atoms are
/// assigned to the nearest node of whatever segment they are integrated against.
class AtomMeasure {
 public:
  AtomMeasure() = default;

  AtomMeasure(std::vector<double> theta, std::vector<double> weight)
      : theta_(std::move(theta)), weight_(std::move(weight)) {
    if (theta_.size() != weight_.size()) throw DomainError("AtomMeasure: theta/weight length mismatch");
    if (theta_.empty()) throw DomainError("AtomMeasure: needs at least one atom");
    double s = 0.0;
    for (std::size_t a = 0; a < theta_.size(); ++a) {
      if (weight_[a] < 0.0) throw DomainError("AtomMeasure: negative weight");
      if (theta_[a] > 0.0) throw DomainError("AtomMeasure: atoms must lie in [-delta, 0]");
      s += weight_[a];
    }
    if (std::abs(s - 1.0) > 1e-12) throw DomainError("AtomMeasure: weights must sum to 1");
  }

  static AtomMeasure dirac(double theta) { return AtomMeasure({theta}, {1.0}); }

  /// Uniform weights on n_atoms equally spaced points of [-delta, 0].
  static AtomMeasure uniform(double delta, std::size_t n_atoms) {
    std::vector<double> th(n_atoms), w(n_atoms, 1.0 / static_cast<double>(n_atoms));
    for (std::size_t a = 0; a < n_atoms; ++a) {
      th[a] = n_atoms == 1 ? 0.0 : -delta + delta * static_cast<double>(a) / static_cast<double>(n_atoms - 1);
    }
    double s = 0.0;
    for (std::size_t a = 0; a + 1 < n_atoms; ++a) s += w[a];
    w.back() = 1.0 - s;
    return AtomMeasure(std::move(th), std::move(w));
  }

  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::vector<double>& weight() const noexcept { return weight_; }
  bool empty() const noexcept { return theta_.empty(); }

  /// Segment index of atom a (nearest node).
  std::size_t node(std::size_t a, const SegmentView& seg) const noexcept {
    if (seg.count <= 1 || seg.dtheta <= 0.0) return seg.count == 0 ? 0 : seg.count - 1;
    const double j = std::round((theta_[a] + seg.delay()) / seg.dtheta);
    return static_cast<std::size_t>(std::clamp(j, 0.0, static_cast<double>(seg.count - 1)));
  }

  /// int seg_c(theta) rho(d theta).
  double integrate(const SegmentView& seg, std::size_t c = 0) const noexcept {
    double s = 0.0;
    for (std::size_t a = 0; a < theta_.size(); ++a) s += weight_[a] * seg.at(node(a, seg), c);
    return s;
  }

  /// int |seg(theta)|^2 rho(d theta) summed over components.
  double integrate_squared(const SegmentView& seg) const noexcept {
    double s = 0.0;
    for (std::size_t a = 0; a < theta_.size(); ++a) {
      const std::size_t j = node(a, seg);
      for (std::size_t c = 0; c < seg.dim; ++c) s += weight_[a] * seg.at(j, c) * seg.at(j, c);
    }
    return s;
  }

 private:
  std::vector<double> theta_;
  std::vector<double> weight_;
};

/// Everything a generator may look at. For G, `z` and `z_seg` are empty.
struct GeneratorArgs {
  double t = 0.0;
  std::size_t step = 0;
  std::size_t path = 0;
  std::span<const double> y;
  std::span<const double> z;
  SegmentView y_seg;
  SegmentView z_seg;
  const PathEnsemble* omega = nullptr;
};

using GeneratorFn = std::function<void(const GeneratorArgs&, std::span<double>)>;

/// A generator plus the metadata the solver needs about it.
struct Driver {
  std::string name = "zero";
  GeneratorFn eval;
  /// True when the value depends on the delayed segments.
  bool delayed = false;

  bool is_zero() const noexcept { return !eval; }

  void operator()(const GeneratorArgs& args, std::span<double> out) const {
    if (!eval) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    eval(args, out);
  }
};

struct TerminalArgs {
  std::size_t path = 0;
  const PathEnsemble* ensemble = nullptr;
};

/// xi as a functional of the (W, A) path.
struct Terminal {
  std::string name = "zero";
  std::function<void(const TerminalArgs&, std::span<double>)> eval;

  void operator()(const TerminalArgs& args, std::span<double> out) const {
    if (!eval) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    eval(args, out);
  }
};

/// Bounded nonnegative process K(t, omega). Deterministic by default
/// (right-continuous step table); `hook` adds dependence on the path.
struct BoundedProcess {
  /// (time, value) breakpoints; value holds from its time until the next one.
  std::vector<std::pair<double, double>> table{{0.0, 0.0}};
  std::function<double(double, std::size_t, const PathEnsemble&)> hook;

  static BoundedProcess constant(double v) { return BoundedProcess{{{0.0, v}}, {}}; }

  double value(double t, std::size_t path, const PathEnsemble* ens) const {
    if (hook && ens) return hook(t, path, *ens);
    double v = table.front().second;
    for (const auto& [s, k] : table) {
      if (s <= t) v = k;
    }
    return v;
  }

  /// sup over grid nodes of K(t, path).
  double sup(const TimeGrid& g, std::size_t path, const PathEnsemble* ens) const {
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m = std::max(m, value(g[i], path, ens));
    return m;
  }
};

/// Positive constants of the Lipschitz and smallness conditions.
struct Constants {
  double beta = 1.0;
  double L = 1.0;
  double L_tilde = 1.0;
  /// Smallness level used by (H1)/(H2); must stay below c_threshold(beta, L_tilde).
  double c = 1e-3;
};

/// Complete data of a delayed BSDE with Stieltjes term.
struct ProblemSpec {
  std::string name;
  double T = 1.0;
  double delta = 0.1;
  std::size_t m = 1;
  std::size_t d = 1;
  Terminal xi;
  Driver F;
  Driver G;
  IncreasingProcessSpec A = IncreasingProcessSpec::identity();
  Constants constants;
  BoundedProcess K = BoundedProcess::constant(0.0);
  BoundedProcess K_tilde = BoundedProcess::constant(0.0);
  AtomMeasure rho = AtomMeasure::dirac(0.0);
  AtomMeasure rho_tilde = AtomMeasure::dirac(0.0);

  void validate() const {
    if (!(T > 0.0)) throw DomainError("problem: T must be positive");
    if (!(delta > 0.0) || delta > T) throw DomainError("problem: delta must lie in (0, T]");
    if (m == 0 || d == 0) throw DomainError("problem: dimensions must be positive");
    if (!(constants.beta > 0.0 && constants.L > 0.0 && constants.L_tilde > 0.0)) {
      throw DomainError("problem: beta, L and L_tilde must be positive");
    }
    if (!(constants.beta > 2.0 * std::numbers::sqrt2 * constants.L_tilde)) {
      throw ConstraintViolation("problem: beta <= 2*sqrt(2)*L_tilde");
    }
    for (double th : rho.theta()) {
      if (th < -delta * (1.0 + 1e-12)) throw DomainError("problem: rho has an atom below -delta");
    }
    for (double th : rho_tilde.theta()) {
      if (th < -delta * (1.0 + 1e-12)) throw DomainError("problem: rho_tilde has an atom below -delta");
    }
  }
};

}  // namespace tdbsde
