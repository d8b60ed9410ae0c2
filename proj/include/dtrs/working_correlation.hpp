#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dtrs {

enum class CorrelationStructure { independence, exchangeable, ar1 };

std::string_view to_string(CorrelationStructure s) noexcept;
CorrelationStructure parse_correlation(std::string_view name);

// How AR-1 counts the lag between two observations of a cell: by their
// positions in the cell, or by their ranks among all distinct time points
// of the data (so unobserved time points in between still count).
enum class LagScale { observation, grid };

std::string_view to_string(LagScale s) noexcept;
LagScale parse_lag_scale(std::string_view name);

// Working covariance sigma^2 * R(rho) shared by every cell. With observation
// lags R depends on a cell only through its length.
struct CorrelationSpec {
  CorrelationStructure structure = CorrelationStructure::independence;
  double rho = 0.0;
  double variance = 1.0;
  LagScale lag = LagScale::observation;

  bool uses_grid() const noexcept {
    return structure == CorrelationStructure::ar1 && lag == LagScale::grid;
  }

  void validate() const;
};

// n x n working correlation R (unit diagonal). `grid` holds the grid rank of
// each observation and is required when spec.uses_grid().
Eigen::MatrixXd correlation_matrix(const CorrelationSpec& spec, std::size_t n,
                                   const double* grid = nullptr);

// Applies L^{-1}, where sigma^2 R = L L^T, without forming R or its inverse.
// AR-1 uses the bidiagonal inverse factor; exchangeable uses the closed-form
// Cholesky recurrence of a compound-symmetric matrix (column j below the
// diagonal is constant), so both cost O(n) per column.
class Whitener {
 public:
  explicit Whitener(CorrelationSpec spec, std::size_t max_len = 64);

  const CorrelationSpec& spec() const noexcept { return spec_; }
  bool is_diagonal() const noexcept {
    return spec_.structure == CorrelationStructure::independence;
  }

  // In place on a row-major n x cols block (row i = i-th observation).
  void apply(double* data, std::size_t n, std::size_t cols, const double* grid = nullptr) const;
  void apply(std::span<double> x, const double* grid = nullptr) const {
    apply(x.data(), x.size(), 1, grid);
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x, const double* grid = nullptr) const;

  // Explicit lower-triangular factor L.
  Eigen::MatrixXd cholesky_factor(std::size_t n, const double* grid = nullptr) const;

 private:
  void extend(std::size_t n);
  void exchangeable_coeffs(std::size_t n, std::vector<double>& diag,
                           std::vector<double>& below) const;

  CorrelationSpec spec_;
  double sigma_ = 1.0;
  double ar_scale_ = 1.0;  // 1 / (sigma sqrt(1 - rho^2))
  // Exchangeable factor of R: diagonal and the constant below-diagonal value
  // of each column.
  std::vector<double> ex_diag_;
  std::vector<double> ex_below_;
};

// Moment estimates from time-ordered residual vectors, one per cell:
// variance = mean r^2; exchangeable rho = mean within-cell pair product /
// variance; AR-1 rho = mean lag-1 product / variance. With grid lags the
// neighbouring pairs at the smallest grid gap L present are used and the
// moment ratio is mapped back through rho = ratio^(1/L). rho is clamped to
// [-0.99, 0.99] (and kept positive definite for the longest cell).
CorrelationSpec estimate_nuisance(std::span<const std::vector<double>> residuals,
                                  CorrelationStructure structure,
                                  LagScale lag = LagScale::observation,
                                  std::span<const std::vector<double>> grid = {});

}  // namespace dtrs
