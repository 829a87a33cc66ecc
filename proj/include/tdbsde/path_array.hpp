#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <span>
#include <thread>
#include <vector>

#include "tdbsde/errors.hpp"

namespace tdbsde {

/// Prolongation of a path to negative times.
enum class Prolongation {
  hold_initial,  ///< x(s) = x(0) for s < 0
  zero,          ///< x(s) = 0 for s < 0
};

/// Non-owning view of a delayed window x(t - delta), ..., x(t). Entry j sits
/// at theta_j = -delta + j * dtheta.
struct SegmentView {
  const double* origin = nullptr;
  std::ptrdiff_t stride = 0;
  std::size_t dim = 0;
  std::size_t count = 0;
  double dtheta = 0.0;

  double at(std::size_t j, std::size_t c = 0) const noexcept { return origin[static_cast<std::ptrdiff_t>(j) * stride + c]; }
  double delay() const noexcept { return count > 0 ? static_cast<double>(count - 1) * dtheta : 0.0; }
  bool empty() const noexcept { return count == 0; }
};

/// Ensemble storage for one process: n_nodes x n_paths x dim, node-major, with
/// `ghosts` extra nodes before t_0 holding the prolongation so that delayed
/// windows are plain strided views.
class PathArray {
 public:
  PathArray() = default;

  PathArray(std::size_t n_nodes, std::size_t n_paths, std::size_t dim, std::size_t ghosts = 0,
            Prolongation rule = Prolongation::hold_initial)
      : n_nodes_(n_nodes), n_paths_(n_paths), dim_(dim), ghosts_(ghosts), rule_(rule),
        data_((n_nodes + ghosts) * n_paths * dim, 0.0) {}

  std::size_t nodes() const noexcept { return n_nodes_; }
  std::size_t paths() const noexcept { return n_paths_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t ghosts() const noexcept { return ghosts_; }
  Prolongation rule() const noexcept { return rule_; }

  double operator()(std::size_t node, std::size_t path, std::size_t c = 0) const noexcept {
    return data_[offset(static_cast<std::ptrdiff_t>(node), path) + c];
  }
  double& operator()(std::size_t node, std::size_t path, std::size_t c = 0) noexcept {
    return data_[offset(static_cast<std::ptrdiff_t>(node), path) + c];
  }

  std::span<const double> at(std::size_t node, std::size_t path) const noexcept {
    return {data_.data() + offset(static_cast<std::ptrdiff_t>(node), path), dim_};
  }
  std::span<double> at(std::size_t node, std::size_t path) noexcept {
    return {data_.data() + offset(static_cast<std::ptrdiff_t>(node), path), dim_};
  }

  /// Window ending at `node` spanning `window` steps back (window <= ghosts).
  SegmentView segment(std::size_t node, std::size_t path, std::size_t window, double dtheta) const noexcept {
    const auto first = static_cast<std::ptrdiff_t>(node) - static_cast<std::ptrdiff_t>(window);
    return SegmentView{data_.data() + offset(first, path), static_cast<std::ptrdiff_t>(n_paths_ * dim_), dim_,
                       window + 1, dtheta};
  }

  /// Rewrites the ghost nodes from node 0 according to the prolongation rule.
  void fill_ghosts() noexcept {
    for (std::size_t g = 1; g <= ghosts_; ++g) {
      for (std::size_t p = 0; p < n_paths_; ++p) {
        for (std::size_t c = 0; c < dim_; ++c) {
          data_[offset(-static_cast<std::ptrdiff_t>(g), p) + c] =
              rule_ == Prolongation::zero ? 0.0 : data_[offset(0, p) + c];
        }
      }
    }
  }

  /// Copy of a single path as a flat node-major vector (n_nodes * dim).
  std::vector<double> path(std::size_t p) const {
    std::vector<double> out(n_nodes_ * dim_);
    for (std::size_t i = 0; i < n_nodes_; ++i) {
      for (std::size_t c = 0; c < dim_; ++c) out[i * dim_ + c] = (*this)(i, p, c);
    }
    return out;
  }

  bool operator==(const PathArray& o) const noexcept {
    return n_nodes_ == o.n_nodes_ && n_paths_ == o.n_paths_ && dim_ == o.dim_ && ghosts_ == o.ghosts_ &&
           rule_ == o.rule_ && data_ == o.data_;
  }

 private:
  std::size_t offset(std::ptrdiff_t node, std::size_t path) const noexcept {
    return (static_cast<std::size_t>(node + static_cast<std::ptrdiff_t>(ghosts_)) * n_paths_ + path) * dim_;
  }

  std::size_t n_nodes_ = 0;
  std::size_t n_paths_ = 0;
  std::size_t dim_ = 0;
  std::size_t ghosts_ = 0;
  Prolongation rule_ = Prolongation::hold_initial;
  std::vector<double> data_;
};

/// Runs fn(begin, end) over contiguous chunks of [0, n) on up to `threads`
/// threads. Callers only write per-index results, so output never depends on
/// the thread count.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (workers == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk;
      const std::size_t e = std::min(n, b + chunk);
      if (b >= e) break;
      pool.emplace_back([&fn, &errors, w, b, e] {
        try {
          fn(b, e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace tdbsde
