#include "dtrs/working_correlation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dtrs/error.hpp"

namespace dtrs {
namespace {

constexpr double kRhoClamp = 0.99;

void check_exchangeable_pd(double rho, std::size_t n) {
  if (n >= 2 && rho <= -1.0 / static_cast<double>(n - 1))
    fail(ErrorKind::not_positive_definite,
         "exchangeable correlation rho=" + std::to_string(rho) +
             " is not positive definite for cell size " + std::to_string(n));
}

}  // namespace

std::string_view to_string(CorrelationStructure s) noexcept {
  switch (s) {
    case CorrelationStructure::independence: return "independence";
    case CorrelationStructure::exchangeable: return "exchangeable";
    case CorrelationStructure::ar1: return "ar1";
  }
  return "independence";
}

CorrelationStructure parse_correlation(std::string_view name) {
  if (name == "independence" || name == "independent") return CorrelationStructure::independence;
  if (name == "exchangeable") return CorrelationStructure::exchangeable;
  if (name == "ar1") return CorrelationStructure::ar1;
  fail(ErrorKind::config, "unknown correlation structure '" + std::string(name) + "'");
}

std::string_view to_string(LagScale s) noexcept {
  return s == LagScale::grid ? "grid" : "observation";
}

LagScale parse_lag_scale(std::string_view name) {
  if (name == "observation") return LagScale::observation;
  if (name == "grid") return LagScale::grid;
  fail(ErrorKind::config, "unknown AR-1 lag scale '" + std::string(name) + "'");
}

void CorrelationSpec::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance))
    fail(ErrorKind::config, "working variance must be positive");
  if (structure != CorrelationStructure::independence && !(std::abs(rho) < 1.0))
    fail(ErrorKind::not_positive_definite, "working correlation needs |rho| < 1");
}

Eigen::MatrixXd correlation_matrix(const CorrelationSpec& spec, std::size_t n, const double* grid) {
  spec.validate();
  if (spec.uses_grid() && grid == nullptr && n > 1)
    fail(ErrorKind::config, "grid-lag AR-1 needs the grid rank of every observation");
  const auto m = static_cast<Eigen::Index>(n);
  switch (spec.structure) {
    case CorrelationStructure::independence:
      return Eigen::MatrixXd::Identity(m, m);
    case CorrelationStructure::exchangeable: {
      check_exchangeable_pd(spec.rho, n);
      Eigen::MatrixXd r = Eigen::MatrixXd::Constant(m, m, spec.rho);
      r.diagonal().setOnes();
      return r;
    }
    case CorrelationStructure::ar1: {
      Eigen::MatrixXd r(m, m);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
          r(i, j) = std::pow(spec.rho, spec.uses_grid() ? std::abs(grid[i] - grid[j])
                                                        : static_cast<double>(std::abs(i - j)));
      return r;
    }
  }
  return Eigen::MatrixXd::Identity(m, m);
}

Whitener::Whitener(CorrelationSpec spec, std::size_t max_len) : spec_(spec) {
  spec_.validate();
  sigma_ = std::sqrt(spec_.variance);
  if (spec_.structure == CorrelationStructure::ar1)
    ar_scale_ = 1.0 / (sigma_ * std::sqrt(1.0 - spec_.rho * spec_.rho));
  if (spec_.structure == CorrelationStructure::exchangeable) extend(max_len);
}

void Whitener::exchangeable_coeffs(std::size_t n, std::vector<double>& diag,
                                   std::vector<double>& below) const {
  const double a = 1.0 - spec_.rho;
  const double b = spec_.rho;
  std::size_t j = diag.size();
  double s = 0.0;
  for (std::size_t m = 0; m < j; ++m) s += below[m] * below[m];
  for (; j < n; ++j) {
    const double d2 = a + b - s;
    if (!(d2 > 0.0)) check_exchangeable_pd(spec_.rho, j + 1);
    if (!(d2 > 0.0))
      fail(ErrorKind::not_positive_definite, "exchangeable factorization failed");
    const double d = std::sqrt(d2);
    const double c = (b - s) / d;
    diag.push_back(d);
    below.push_back(c);
    s += c * c;
  }
}

void Whitener::extend(std::size_t n) {
  if (n > ex_diag_.size()) exchangeable_coeffs(n, ex_diag_, ex_below_);
}

void Whitener::apply(double* data, std::size_t n, std::size_t cols, const double* grid) const {
  switch (spec_.structure) {
    case CorrelationStructure::independence: {
      if (spec_.variance == 1.0) return;
      const double inv = 1.0 / sigma_;
      for (std::size_t i = 0; i < n * cols; ++i) data[i] *= inv;
      return;
    }
    case CorrelationStructure::ar1: {
      const double rho = spec_.rho;
      if (spec_.uses_grid() && n > 1) {
        if (grid == nullptr)
          fail(ErrorKind::config, "grid-lag AR-1 needs the grid rank of every observation");
        for (std::size_t i = n; i-- > 1;) {
          const double phi = std::pow(rho, grid[i] - grid[i - 1]);
          const double scale = 1.0 / (sigma_ * std::sqrt(1.0 - phi * phi));
          double* row = data + i * cols;
          const double* prev = data + (i - 1) * cols;
          for (std::size_t c = 0; c < cols; ++c) row[c] = (row[c] - phi * prev[c]) * scale;
        }
        const double inv = 1.0 / sigma_;
        for (std::size_t c = 0; c < cols; ++c) data[c] *= inv;
        return;
      }
      for (std::size_t i = n; i-- > 1;) {
        double* row = data + i * cols;
        const double* prev = data + (i - 1) * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] = (row[c] - rho * prev[c]) * ar_scale_;
      }
      if (n > 0) {
        const double inv = 1.0 / sigma_;
        for (std::size_t c = 0; c < cols; ++c) data[c] *= inv;
      }
      return;
    }
    case CorrelationStructure::exchangeable: {
      std::vector<double> local_diag, local_below;
      const std::vector<double>* diag = &ex_diag_;
      const std::vector<double>* below = &ex_below_;
      if (n > ex_diag_.size()) {
        local_diag = ex_diag_;
        local_below = ex_below_;
        exchangeable_coeffs(n, local_diag, local_below);
        diag = &local_diag;
        below = &local_below;
      }
      // z_j = (x_j - sum_{m<j} c_m z_m) / d_j, with the running sum kept per column.
      std::vector<double> acc(cols, 0.0);
      const double inv = 1.0 / sigma_;
      for (std::size_t j = 0; j < n; ++j) {
        double* row = data + j * cols;
        const double dj = (*diag)[j];
        const double cj = (*below)[j];
        for (std::size_t c = 0; c < cols; ++c) {
          const double z = (row[c] * inv - acc[c]) / dj;
          row[c] = z;
          acc[c] += cj * z;
        }
      }
      return;
    }
  }
}

Eigen::MatrixXd Whitener::apply(const Eigen::MatrixXd& x, const double* grid) const {
  // Row-major copy so each observation's columns are contiguous.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = x;
  apply(rm.data(), static_cast<std::size_t>(rm.rows()), static_cast<std::size_t>(rm.cols()), grid);
  return rm;
}

Eigen::MatrixXd Whitener::cholesky_factor(std::size_t n, const double* grid) const {
  const auto m = static_cast<Eigen::Index>(n);
  if (spec_.uses_grid()) {
    const Eigen::MatrixXd r = correlation_matrix(spec_, n, grid);
    return sigma_ * Eigen::MatrixXd(r.llt().matrixL());
  }
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
  switch (spec_.structure) {
    case CorrelationStructure::independence:
      l.diagonal().setConstant(sigma_);
      break;
    case CorrelationStructure::ar1: {
      const double s = std::sqrt(1.0 - spec_.rho * spec_.rho);
      for (Eigen::Index i = 0; i < m; ++i) {
        l(i, 0) = sigma_ * std::pow(spec_.rho, static_cast<double>(i));
        for (Eigen::Index j = 1; j <= i; ++j)
          l(i, j) = sigma_ * s * std::pow(spec_.rho, static_cast<double>(i - j));
      }
      break;
    }
    case CorrelationStructure::exchangeable: {
      std::vector<double> diag, below;
      exchangeable_coeffs(n, diag, below);
      for (Eigen::Index j = 0; j < m; ++j) {
        l(j, j) = sigma_ * diag[static_cast<std::size_t>(j)];
        for (Eigen::Index i = j + 1; i < m; ++i) l(i, j) = sigma_ * below[static_cast<std::size_t>(j)];
      }
      break;
    }
  }
  return l;
}

CorrelationSpec estimate_nuisance(std::span<const std::vector<double>> residuals,
                                  CorrelationStructure structure, LagScale lag,
                                  std::span<const std::vector<double>> grid) {
  double ss = 0.0;
  std::size_t count = 0;
  std::size_t max_len = 0;
  for (const auto& r : residuals) {
    for (double v : r) ss += v * v;
    count += r.size();
    max_len = std::max(max_len, r.size());
  }
  if (count == 0) fail(ErrorKind::insufficient_data, "no residuals to estimate from");
  CorrelationSpec spec;
  spec.structure = structure;
  spec.lag = lag;
  spec.variance = ss / static_cast<double>(count);
  if (!(spec.variance > 0.0))
    fail(ErrorKind::insufficient_data, "residuals are all zero; variance is not estimable");
  if (structure == CorrelationStructure::independence) return spec;

  if (spec.uses_grid()) {
    if (grid.size() != residuals.size())
      fail(ErrorKind::config, "grid-lag AR-1 needs the grid rank of every residual");
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < residuals.size(); ++c)
      for (std::size_t i = 1; i < residuals[c].size(); ++i)
        gap = std::min(gap, std::round(grid[c][i] - grid[c][i - 1]));
    if (!std::isfinite(gap))
      fail(ErrorKind::insufficient_data,
           "every cell has a single observation; correlation is not estimable");
    double cross = 0.0;
    std::size_t pairs = 0;
    for (std::size_t c = 0; c < residuals.size(); ++c)
      for (std::size_t i = 1; i < residuals[c].size(); ++i)
        if (std::round(grid[c][i] - grid[c][i - 1]) == gap) {
          cross += residuals[c][i] * residuals[c][i - 1];
          ++pairs;
        }
    const double ratio = cross / static_cast<double>(pairs) / spec.variance;
    const double rho = std::copysign(std::pow(std::abs(ratio), 1.0 / gap), ratio);
    spec.rho = std::clamp(rho, -kRhoClamp, kRhoClamp);
    return spec;
  }

  double cross = 0.0;
  std::size_t pairs = 0;
  for (const auto& r : residuals) {
    if (structure == CorrelationStructure::ar1) {
      for (std::size_t i = 1; i < r.size(); ++i) cross += r[i] * r[i - 1];
      if (r.size() >= 2) pairs += r.size() - 1;
    } else {
      double sum = 0.0, sq = 0.0;
      for (double v : r) {
        sum += v;
        sq += v * v;
      }
      cross += 0.5 * (sum * sum - sq);
      pairs += r.size() * (r.size() - (r.empty() ? 0 : 1)) / 2;
    }
  }
  if (pairs == 0)
    fail(ErrorKind::insufficient_data,
         "every cell has a single observation; correlation is not estimable");
  double rho = (cross / static_cast<double>(pairs)) / spec.variance;
  double lo = -kRhoClamp;
  if (structure == CorrelationStructure::exchangeable && max_len >= 2)
    lo = std::max(lo, -1.0 / static_cast<double>(max_len - 1) + 1e-6);
  spec.rho = std::clamp(rho, lo, kRhoClamp);
  return spec;
}

}  // namespace dtrs
