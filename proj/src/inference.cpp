#include "dtrs/inference.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dtrs/error.hpp"
#include "dtrs/kernels.hpp"

namespace dtrs {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::config, "normal quantile needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;

  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double s = q * q;
    x = (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * q /
        (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley steps on Phi(x) - p.
  for (int i = 0; i < 2; ++i) {
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double interval_multiplier(double level) {
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::config, "interval level must be in (0, 1)");
  return normal_quantile(0.5 + 0.5 * level);
}

std::string_view to_string(ColdVariance v) noexcept {
  return v == ColdVariance::subgroup ? "subgroup" : "model";
}

ColdVariance parse_cold_variance(std::string_view name) {
  if (name == "subgroup") return ColdVariance::subgroup;
  if (name == "model") return ColdVariance::model;
  fail(ErrorKind::config, "unknown cold variance '" + std::string(name) + "'");
}

std::size_t gamma_size(const ModelParams& params) {
  return static_cast<std::size_t>(params.alpha.size() + params.beta.size());
}

namespace {

// Writes the design row for an observation whose factor products are known.
void fill_design(const ModelParams& params, const double* trend_basis, const double* group_basis,
                 const double* products, double subgroup_product, int time_group, double* row) {
  const auto r = params.alpha.rows();
  const auto m = params.alpha.cols();
  const auto mg = params.beta.cols();
  const auto groups = params.beta.rows();
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index b = 0; b < m; ++b) row[j * m + b] = products[j] * trend_basis[b];
  double* g = row + r * m;
  std::fill_n(g, groups * mg, 0.0);
  for (Eigen::Index b = 0; b < mg; ++b) g[time_group * mg + b] = subgroup_product * group_basis[b];
}

}  // namespace

Eigen::VectorXd design_row(const ModelParams& params, const SubgroupScheme& scheme,
                           const ModelBases& bases, std::span<const Index> indices, double t) {
  const std::size_t d = params.order();
  if (indices.size() != d) fail(ErrorKind::bounds, "index tuple has the wrong order");
  const auto r = params.rank();
  std::vector<double> products(r, 1.0);
  double uq = 1.0;
  for (std::size_t k = 0; k < d; ++k) {
    if (indices[k] >= params.factors[k].rows())
      fail(ErrorKind::bounds, "subject out of range in mode " + std::to_string(k + 1));
    for (std::size_t j = 0; j < r; ++j)
      products[j] *= params.factors[k](indices[k], static_cast<Eigen::Index>(j));
    const int g = scheme.mode_groups[k][indices[k]];
    if (g == kUnassignedGroup)
      fail(ErrorKind::cold_start_unresolvable,
           "subject " + std::to_string(indices[k] + 1) + " of mode " + std::to_string(k + 1) +
               " has no subgroup assignment");
    uq *= params.subgroup[k](g);
  }
  const Eigen::VectorXd b = bases.trend.evaluate(t);
  const Eigen::VectorXd a = bases.group.evaluate(t);
  Eigen::VectorXd w(static_cast<Eigen::Index>(gamma_size(params)));
  fill_design(params, b.data(), a.data(), products.data(), uq, scheme.time_groups.group_of(t),
              w.data());
  return w;
}

SandwichCovariance sandwich_covariance(const ModelParams& params, const TemporalTensor& tensor,
                                       const SubgroupScheme& scheme, const ModelBases& bases,
                                       const CorrelationSpec& corr, double lambda) {
  if (!(lambda >= 0.0)) fail(ErrorKind::config, "lambda must be >= 0");
  params.validate(tensor.dims(), scheme, bases);
  const FitData data(tensor, scheme, bases, corr);
  const Contributions parts = compute_contributions(data, params);
  std::vector<double> resid;
  compute_residuals(data, parts, params.rank(), resid);

  const std::size_t dim = gamma_size(params);
  const std::size_t w = dim + 1;
  const std::size_t r = params.rank();
  const std::size_t n_obs = data.num_obs();
  std::vector<double> psi(dim * dim, 0.0);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                              static_cast<Eigen::Index>(dim));
  std::vector<double> buf, products(r);
  Eigen::VectorXd score(static_cast<Eigen::Index>(dim));
  double ss = 0.0, ss_group = 0.0;
  for (std::size_t c = 0; c < data.num_cells(); ++c) {
    const std::size_t begin = data.cell_begin(c);
    const std::size_t n = data.cell_size(c);
    buf.resize(n * w);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t o = begin + i;
      for (std::size_t j = 0; j < r; ++j) products[j] = parts.products[j * n_obs + o];
      double* row = buf.data() + i * w;
      fill_design(params, data.trend_row(o), data.group_row(o), products.data(),
                  parts.subgroup_products[o], data.time_group(o), row);
      row[dim] = resid[o];
      ss += resid[o] * resid[o];
      const double e = data.values()[o] - parts.group[o] * parts.subgroup_products[o];
      ss_group += e * e;
    }
    data.whitener().apply(buf.data(), n, w, data.cell_grid(c));
    score.setZero();
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = buf.data() + i * w;
      kernels::rank1_update(psi, dim, {row, dim});
      for (std::size_t j = 0; j < dim; ++j) score(static_cast<Eigen::Index>(j)) += row[j] * row[dim];
    }
    phi.noalias() += score * score.transpose();
  }
  kernels::symmetrize_upper(psi, dim);

  SandwichCovariance out;
  out.psi_hat = Eigen::Map<const Eigen::MatrixXd>(psi.data(), static_cast<Eigen::Index>(dim),
                                                  static_cast<Eigen::Index>(dim));
  out.phi_hat = phi;
  out.sigma2_train = n_obs ? ss / static_cast<double>(n_obs) : 0.0;
  out.sigma2_subgroup = n_obs ? ss_group / static_cast<double>(n_obs) : 0.0;

  Eigen::MatrixXd a = out.psi_hat;
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !(llt.rcond() > (lambda == 0.0 ? 1e-13 : 0.0)))
    fail(ErrorKind::ridge_degenerate,
         "Psi + lambda I is singular; raise lambda to obtain the sandwich covariance");
  const Eigen::MatrixXd left = llt.solve(phi);
  const Eigen::MatrixXd cov = llt.solve(left.transpose()).transpose();
  out.cov_gamma = 0.5 * (cov + cov.transpose());
  return out;
}

IntervalEstimate prediction_interval(const ModelParams& params, const SubgroupScheme& scheme,
                                     const ModelBases& bases, const SandwichCovariance& sandwich,
                                     std::span<const Index> indices, double t, double level,
                                     ColdVariance cold_variance) {
  const double z = interval_multiplier(level);
  const Eigen::VectorXd w = design_row(params, scheme, bases, indices, t);
  if (w.size() != sandwich.cov_gamma.rows())
    fail(ErrorKind::config, "sandwich covariance does not match the model");
  double v = w.dot(sandwich.cov_gamma * w);
  const bool clamped = v < 0.0;
  if (clamped) v = 0.0;
  bool cold = false;
  for (std::size_t k = 0; k < params.order(); ++k)
    if (params.factors[k].row(indices[k]).isZero(0.0)) cold = true;
  const double noise = cold && cold_variance == ColdVariance::subgroup ? sandwich.sigma2_subgroup
                                                                       : sandwich.sigma2_train;
  const double se = std::sqrt(v + noise);
  const double yhat = predict_cell(params, scheme, bases, indices, t);
  return {yhat, yhat - z * se, yhat + z * se, se, level, clamped, cold};
}

}  // namespace dtrs
