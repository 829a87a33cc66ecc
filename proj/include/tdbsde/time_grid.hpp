#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "tdbsde/errors.hpp"

namespace tdbsde {

/// Ordered time nodes 0 = t_0 < ... < t_M = T, optionally carrying a delay
/// that must be a whole number of grid steps.
class TimeGrid {
 public:
  /// Relative tolerance used when matching times against nodes.
  static constexpr double kAlignTol = 1e-9;

  explicit TimeGrid(std::vector<double> nodes, double delay = 0.0) : t_(std::move(nodes)), delay_(delay) {
    if (t_.size() < 2) throw DomainError("TimeGrid: need at least two nodes");
    if (t_.front() != 0.0) throw DomainError("TimeGrid: first node must be 0");
    for (std::size_t i = 1; i < t_.size(); ++i) {
      if (!(t_[i] > t_[i - 1])) throw DomainError("TimeGrid: nodes must be strictly increasing");
    }
    if (delay_ < 0.0 || delay_ > horizon() * (1.0 + kAlignTol)) {
      throw DomainError("TimeGrid: delay must lie in [0, T]");
    }
    if (delay_ > 0.0) {
      if (!is_uniform()) throw GridAlignmentError("TimeGrid: a delayed grid must be uniform");
      const double ratio = delay_ / step(0);
      const double k = std::round(ratio);
      if (k < 1.0 || std::abs(ratio - k) > kAlignTol * std::max(1.0, ratio)) {
        std::ostringstream os;
        os << "TimeGrid: delay " << delay_ << " is not a multiple of the step " << step(0);
        throw GridAlignmentError(os.str());
      }
      delay_steps_ = static_cast<std::size_t>(k);
    }
  }

  /// Uniform grid with `n_steps` steps on [0, horizon].
  static TimeGrid uniform(double horizon, std::size_t n_steps, double delay = 0.0) {
    if (!(horizon > 0.0)) throw DomainError("TimeGrid: horizon must be positive");
    if (n_steps == 0) throw DomainError("TimeGrid: need at least one step");
    std::vector<double> nodes(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i) {
      nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(n_steps);
    }
    nodes.back() = horizon;
    return TimeGrid(std::move(nodes), delay);
  }

  std::size_t size() const noexcept { return t_.size(); }
  std::size_t steps() const noexcept { return t_.size() - 1; }
  double operator[](std::size_t i) const noexcept { return t_[i]; }
  double horizon() const noexcept { return t_.back(); }
  double delay() const noexcept { return delay_; }
  /// Number of grid steps spanning the delay (0 when no delay).
  std::size_t delay_steps() const noexcept { return delay_steps_; }
  double step(std::size_t i) const noexcept { return t_[i + 1] - t_[i]; }
  std::span<const double> nodes() const noexcept { return t_; }

  bool is_uniform() const noexcept {
    const double h = step(0);
    for (std::size_t i = 1; i < steps(); ++i) {
      if (std::abs(step(i) - h) > kAlignTol * h) return false;
    }
    return true;
  }

  std::optional<std::size_t> find(double t) const noexcept {
    const double tol = kAlignTol * std::max(1.0, horizon());
    auto it = std::lower_bound(t_.begin(), t_.end(), t - tol);
    if (it != t_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - t_.begin());
    return std::nullopt;
  }

  /// Index of the node equal to `t`; throws GridAlignmentError when `t` is off-grid.
  std::size_t index_of(double t) const {
    if (auto i = find(t)) return *i;
    std::ostringstream os;
    os << "time " << t << " is not a grid node";
    throw GridAlignmentError(os.str());
  }

  bool operator==(const TimeGrid& other) const noexcept { return t_ == other.t_ && delay_ == other.delay_; }

 private:
  std::vector<double> t_;
  double delay_ = 0.0;
  std::size_t delay_steps_ = 0;
};

/// Step count nearest to `requested` for which `delay` is a whole number of
/// steps of a uniform grid on [0, horizon]; nullopt when none exists nearby.
inline std::optional<std::size_t> nearest_aligned_steps(double horizon, double delay, std::size_t requested,
                                                        std::size_t search_radius = 100000) {
  auto aligned = [&](std::size_t n) {
    if (n == 0) return false;
    const double ratio = delay * static_cast<double>(n) / horizon;
    return ratio >= 1.0 - TimeGrid::kAlignTol &&
           std::abs(ratio - std::round(ratio)) <= TimeGrid::kAlignTol * std::max(1.0, ratio);
  };
  for (std::size_t r = 0; r <= search_radius; ++r) {
    if (aligned(requested + r)) return requested + r;
    if (r <= requested && aligned(requested - r)) return requested - r;
  }
  return std::nullopt;
}

}  // namespace tdbsde
