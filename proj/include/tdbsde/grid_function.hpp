#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "tdbsde/errors.hpp"
#include "tdbsde/time_grid.hpp"

namespace tdbsde {

using GridPtr = std::shared_ptr<const TimeGrid>;

inline GridPtr make_grid(TimeGrid grid) { return std::make_shared<const TimeGrid>(std::move(grid)); }

inline bool same_grid(const GridPtr& a, const GridPtr& b) noexcept {
  return a == b || (a && b && *a == *b);
}

/// One realization of a (possibly vector-valued) function sampled on a time grid.
class GridFunction {
 public:
  GridFunction(GridPtr grid, std::vector<double> values, std::size_t dim = 1)
      : grid_(std::move(grid)), values_(std::move(values)), dim_(dim) {
    if (!grid_) throw DomainError("GridFunction: null grid");
    if (dim_ == 0 || values_.size() != grid_->size() * dim_) {
      throw DomainError("GridFunction: value count does not match grid size");
    }
  }

  /// Samples a scalar function f(t) on every node.
  template <class F>
  static GridFunction sample(GridPtr grid, F&& f) {
    std::vector<double> v(grid->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f((*grid)[i]);
    return GridFunction(std::move(grid), std::move(v), 1);
  }

  const TimeGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return grid_->size(); }

  double operator()(std::size_t i, std::size_t c = 0) const noexcept { return values_[i * dim_ + c]; }
  double& operator()(std::size_t i, std::size_t c = 0) noexcept { return values_[i * dim_ + c]; }
  std::span<const double> point(std::size_t i) const noexcept { return {values_.data() + i * dim_, dim_}; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  GridPtr grid_;
  std::vector<double> values_;
  std::size_t dim_;
};

/// How a bounded-variation grid function is interpolated between nodes.
enum class BVMode {
  linear,  ///< continuous, piecewise linear
  step,    ///< right-continuous, constant on [t_i, t_{i+1})
};

/// Grid function with bounded variation; caches the running total variation.
class BVFunction {
 public:
  explicit BVFunction(GridFunction f, BVMode mode = BVMode::linear) : f_(std::move(f)), mode_(mode) {
    prefix_.assign(f_.size(), 0.0);
    for (std::size_t i = 1; i < f_.size(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < f_.dim(); ++c) {
        const double d = f_(i, c) - f_(i - 1, c);
        s += d * d;
      }
      prefix_[i] = prefix_[i - 1] + std::sqrt(s);
    }
  }

  BVFunction(GridPtr grid, std::vector<double> values, std::size_t dim = 1, BVMode mode = BVMode::linear)
      : BVFunction(GridFunction(std::move(grid), std::move(values), dim), mode) {}

  template <class F>
  static BVFunction sample(GridPtr grid, F&& f, BVMode mode = BVMode::linear) {
    return BVFunction(GridFunction::sample(std::move(grid), std::forward<F>(f)), mode);
  }

  const GridFunction& function() const noexcept { return f_; }
  const TimeGrid& grid() const noexcept { return f_.grid(); }
  const GridPtr& grid_ptr() const noexcept { return f_.grid_ptr(); }
  std::size_t dim() const noexcept { return f_.dim(); }
  std::size_t size() const noexcept { return f_.size(); }
  BVMode mode() const noexcept { return mode_; }
  double operator()(std::size_t i, std::size_t c = 0) const noexcept { return f_(i, c); }

  /// Partition sum over the whole grid.
  double cached_total_variation() const noexcept { return prefix_.back(); }
  /// Partition sum over nodes 0..i.
  double prefix_variation(std::size_t i) const noexcept { return prefix_[i]; }

 private:
  GridFunction f_;
  BVMode mode_;
  std::vector<double> prefix_;
};

/// Formats a double with 17 significant digits.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header `t,v_1,...,v_d` and one row per node.
inline void write_csv(std::ostream& os, const GridFunction& f) {
  os << "t";
  for (std::size_t c = 0; c < f.dim(); ++c) os << ",v_" << (c + 1);
  os << '\n';
  for (std::size_t i = 0; i < f.size(); ++i) {
    os << format_double(f.grid()[i]);
    for (std::size_t c = 0; c < f.dim(); ++c) os << ',' << format_double(f(i, c));
    os << '\n';
  }
}

/// Reads the format produced by write_csv; the grid is rebuilt from the t column.
inline GridFunction read_csv(std::istream& is, double delay = 0.0) {
  std::string line;
  if (!std::getline(is, line)) throw DomainError("read_csv: empty input");
  std::size_t dim = 0;
  for (char ch : line) dim += (ch == ',');
  if (dim == 0) throw DomainError("read_csv: header has no value columns");
  std::vector<double> t;
  std::vector<double> v;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(row, cell, ',')) {
      const double x = std::stod(cell);
      if (col == 0) {
        t.push_back(x);
      } else {
        v.push_back(x);
      }
      ++col;
    }
    if (col != dim + 1) throw DomainError("read_csv: ragged row");
  }
  return GridFunction(make_grid(TimeGrid(std::move(t), delay)), std::move(v), dim);
}

}  // namespace tdbsde
