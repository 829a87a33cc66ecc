#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "tdbsde/errors.hpp"

namespace tdbsde {

/// Polynomial regression basis used for conditional expectations.
struct RegressionBasis {
  std::size_t degree = 2;
  double ridge = 1e-10;
};

/// Exponent vectors of all monomials of total degree <= degree in k variables,
/// ordered by degree, then lexicographically.
inline std::vector<std::vector<int>> monomial_exponents(std::size_t k, std::size_t degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(k, 0);
  for (std::size_t total = 0; total <= degree; ++total) {
    // enumerate compositions of `total` into k nonnegative parts
    auto rec = [&](auto&& self, std::size_t pos, int left) -> void {
      if (pos + 1 == k || k == 0) {
        if (k > 0) e[pos] = left;
        if (k > 0 || left == 0) out.push_back(e);
        return;
      }
      for (int v = left; v >= 0; --v) {
        e[pos] = v;
        self(self, pos + 1, left - v);
      }
    };
    if (k == 0) {
      if (total == 0) out.emplace_back();
      continue;
    }
    rec(rec, 0, static_cast<int>(total));
  }
  return out;
}

/// Design matrix [1, monomials...] over the standardized columns of `state`.
/// Columns of `state` with (numerically) zero sample variance carry no
/// information about the path and are dropped.
inline Eigen::MatrixXd polynomial_design(const Eigen::MatrixXd& state, std::size_t degree) {
  const Eigen::Index n = state.rows();
  std::vector<Eigen::VectorXd> vars;
  for (Eigen::Index j = 0; j < state.cols(); ++j) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mean += state(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) var += (state(i, j) - mean) * (state(i, j) - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (!(sd > 1e-13 * (1.0 + std::abs(mean)))) continue;
    vars.emplace_back((state.col(j).array() - mean) / sd);
  }
  const auto exps = monomial_exponents(vars.size(), degree);
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(exps.size()));
  for (std::size_t f = 0; f < exps.size(); ++f) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
    for (std::size_t v = 0; v < vars.size(); ++v) {
      for (int r = 0; r < exps[f][v]; ++r) col.array() *= vars[v].array();
    }
    X.col(static_cast<Eigen::Index>(f)) = col;
  }
  return X;
}

/// Least-squares projection onto the column span of a fixed design matrix.
/// The normal equations are factorized once and reused for every target.
class LeastSquaresProjector {
 public:
  LeastSquaresProjector(Eigen::MatrixXd design, double ridge) : design_(std::move(design)) {
    const Eigen::Index n = design_.rows();
    const Eigen::Index p = design_.cols();
    if (ridge < 0.0) throw DomainError("regression: ridge must be nonnegative");
    if (n <= p) {
      std::ostringstream os;
      os << "regression: need more samples (" << n << ") than features (" << p << ")";
      throw DomainError(os.str());
    }
    if (!design_.allFinite()) throw DomainError("regression: design matrix has non-finite entries");
    Eigen::MatrixXd gram = design_.transpose() * design_ / static_cast<double>(n);
    gram.diagonal().array() += ridge;
    ldlt_.compute(gram);
    const Eigen::VectorXd d = ldlt_.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt_.info() != Eigen::Success || d.minCoeff() <= 1e-12 * dmax) {
      if (ridge == 0.0 || ldlt_.info() != Eigen::Success) {
        throw SingularSystemError("regression: design matrix is rank deficient (use ridge > 0)");
      }
    }
  }

  /// p x q coefficient matrix for n x q targets.
  Eigen::MatrixXd coefficients(const Eigen::MatrixXd& targets) const {
    check_rows(targets);
    const Eigen::MatrixXd rhs = design_.transpose() * targets / static_cast<double>(design_.rows());
    return ldlt_.solve(rhs);
  }

  /// Fitted values; a constant target column is reproduced exactly.
  Eigen::MatrixXd project(const Eigen::MatrixXd& targets) const {
    Eigen::MatrixXd fitted = design_ * coefficients(targets);
    for (Eigen::Index j = 0; j < targets.cols(); ++j) {
      const double v = targets(0, j);
      if ((targets.col(j).array() == v).all()) fitted.col(j).setConstant(v);
    }
    return fitted;
  }

  const Eigen::MatrixXd& design() const noexcept { return design_; }

 private:
  void check_rows(const Eigen::MatrixXd& targets) const {
    if (targets.rows() != design_.rows()) throw DomainError("regression: target/design row mismatch");
    if (!targets.allFinite()) throw DomainError("regression: non-finite targets");
  }

  Eigen::MatrixXd design_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

/// Least-squares estimate of E[targets | state] evaluated on every sample.
inline Eigen::MatrixXd conditional_expectation(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& state,
                                               const RegressionBasis& basis = {}) {
  return LeastSquaresProjector(polynomial_design(state, basis.degree), basis.ridge).project(targets);
}

}  // namespace tdbsde
