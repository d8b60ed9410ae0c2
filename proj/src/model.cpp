#include "dtrs/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dtrs/error.hpp"
#include "dtrs/kernels.hpp"

namespace dtrs {

ModelBases make_bases(const TemporalTensor& tensor, const BasisConfig& config) {
  if (tensor.num_cells() == 0) fail(ErrorKind::insufficient_data, "tensor has no observations");
  const std::size_t a = config.knots ? *config.knots : knot_count(tensor.num_cells(), config.degree);
  std::vector<double> times;
  if (config.placement == KnotPlacement::quantile) times = tensor.observation_times();
  SplineBasis trend = build_basis(config.degree, a, config.placement, times, config.family);
  if (!config.group_knots || *config.group_knots == a) return {trend, trend};
  SplineBasis group =
      build_basis(config.degree, *config.group_knots, config.placement, times, config.family);
  return {std::move(trend), std::move(group)};
}

void HyperParams::validate() const {
  if (rank < 1) fail(ErrorKind::config, "rank r must be >= 1");
  if (rank > 64) fail(ErrorKind::config, "rank r is capped at 64");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorKind::config, "lambda must be >= 0");
  if (!(epsilon > 0.0)) fail(ErrorKind::config, "epsilon must be > 0");
  if (max_iter < 1) fail(ErrorKind::config, "max_iter must be >= 1");
}

double ModelParams::penalty() const {
  double s = alpha.squaredNorm() + beta.squaredNorm();
  for (const auto& p : factors) s += p.squaredNorm();
  for (const auto& q : subgroup) s += q.squaredNorm();
  return s;
}

bool ModelParams::all_finite() const {
  if (!alpha.allFinite() || !beta.allFinite()) return false;
  for (const auto& p : factors)
    if (!p.allFinite()) return false;
  for (const auto& q : subgroup)
    if (!q.allFinite()) return false;
  return true;
}

void ModelParams::validate(const std::vector<std::size_t>& dims, const SubgroupScheme& scheme,
                           const ModelBases& bases) const {
  const std::size_t d = dims.size();
  if (factors.size() != d || subgroup.size() != d)
    fail(ErrorKind::config, "parameter blocks do not match the tensor order");
  const std::size_t r = rank();
  for (std::size_t k = 0; k < d; ++k) {
    if (static_cast<std::size_t>(factors[k].rows()) != dims[k] ||
        static_cast<std::size_t>(factors[k].cols()) != r)
      fail(ErrorKind::config, "factor matrix " + std::to_string(k + 1) + " has the wrong shape");
    if (subgroup[k].size() != scheme.group_counts[k])
      fail(ErrorKind::config, "subgroup vector " + std::to_string(k + 1) + " has the wrong length");
  }
  if (static_cast<std::size_t>(alpha.cols()) != bases.trend.size())
    fail(ErrorKind::config, "alpha does not match the trend basis size");
  if (beta.rows() != scheme.time_groups.count() ||
      static_cast<std::size_t>(beta.cols()) != bases.group.size())
    fail(ErrorKind::config, "beta does not match the time groups and group basis");
  if (!all_finite()) fail(ErrorKind::divergence, "parameters contain non-finite values");
}

ModelParams ModelParams::zeros(const std::vector<std::size_t>& dims, std::size_t rank,
                               const SubgroupScheme& scheme, const ModelBases& bases) {
  ModelParams p;
  const auto r = static_cast<Eigen::Index>(rank);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    p.factors.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dims[k]), r));
    p.subgroup.push_back(Eigen::VectorXd::Zero(scheme.group_counts[k]));
  }
  p.alpha = Eigen::MatrixXd::Zero(r, static_cast<Eigen::Index>(bases.trend.size()));
  p.beta = Eigen::MatrixXd::Zero(scheme.time_groups.count(),
                                 static_cast<Eigen::Index>(bases.group.size()));
  return p;
}

double predict_cell(const ModelParams& params, const SubgroupScheme& scheme,
                    const ModelBases& bases, std::span<const Index> indices, double t) {
  const std::size_t d = params.order();
  if (indices.size() != d) fail(ErrorKind::bounds, "index tuple has the wrong order");
  for (std::size_t k = 0; k < d; ++k)
    if (indices[k] >= params.factors[k].rows())
      fail(ErrorKind::bounds, "subject " + std::to_string(indices[k] + 1) +
                                  " out of range in mode " + std::to_string(k + 1));

  const Eigen::VectorXd b = bases.trend.evaluate(t);
  const Eigen::VectorXd h = params.alpha * b;
  double yhat = 0.0;
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    double u = h(j);
    for (std::size_t k = 0; k < d; ++k) u *= params.factors[k](indices[k], j);
    yhat += u;
  }

  double uq = 1.0;
  for (std::size_t k = 0; k < d; ++k) {
    const int g = scheme.mode_groups[k][indices[k]];
    if (g == kUnassignedGroup)
      fail(ErrorKind::cold_start_unresolvable,
           "subject " + std::to_string(indices[k] + 1) + " of mode " + std::to_string(k + 1) +
               " has no subgroup assignment");
    uq *= params.subgroup[k](g);
  }
  const int e = scheme.time_groups.group_of(t);
  const Eigen::VectorXd a = bases.group.evaluate(t);
  return yhat + params.beta.row(e).dot(a) * uq;
}

FitData::FitData(const TemporalTensor& tensor, const SubgroupScheme& scheme,
                 const ModelBases& bases, const CorrelationSpec& corr)
    : dims_(tensor.dims()),
      group_counts_(scheme.group_counts),
      trend_size_(bases.trend.size()),
      group_size_(bases.group.size()),
      num_time_groups_(static_cast<std::size_t>(scheme.time_groups.count())),
      trend_unit_(bases.trend.constant_coefficients()),
      group_unit_(bases.group.constant_coefficients()),
      whitener_(corr, 64) {
  scheme.validate(dims_);
  const std::size_t d = dims_.size();
  const std::size_t n_cells = tensor.num_cells();
  const std::size_t n_obs = tensor.num_observations();

  cell_index_.reserve(n_cells * d);
  cell_group_.reserve(n_cells * d);
  cell_begin_.reserve(n_cells + 1);
  time_.reserve(n_obs);
  value_.reserve(n_obs);
  time_group_.reserve(n_obs);
  trend_rows_.resize(n_obs * trend_size_);
  group_rows_.resize(n_obs * group_size_);
  subgroup_obs_.resize(d);
  for (std::size_t k = 0; k < d; ++k) subgroup_obs_[k].assign(group_counts_[k], 0);
  time_group_obs_.assign(num_time_groups_, 0);

  const std::vector<double> distinct = tensor.distinct_times();
  grid_.reserve(n_obs);
  cell_begin_.push_back(0);
  const bool shared = &bases.trend == &bases.group ||
                      (bases.trend.knots().size() == bases.group.knots().size() &&
                       std::equal(bases.trend.knots().begin(), bases.trend.knots().end(),
                                  bases.group.knots().begin()) &&
                       bases.trend.degree() == bases.group.degree() &&
                       bases.trend.family() == bases.group.family());
  for (const Cell& c : tensor.cells()) {
    for (std::size_t k = 0; k < d; ++k) {
      cell_index_.push_back(c.index[k]);
      const int g = scheme.mode_groups[k][c.index[k]];
      if (g == kUnassignedGroup)
        fail(ErrorKind::cold_start_unresolvable,
             "observed subject " + std::to_string(c.index[k] + 1) + " of mode " +
                 std::to_string(k + 1) + " has no subgroup assignment");
      cell_group_.push_back(g);
      subgroup_obs_[k][static_cast<std::size_t>(g)] += c.series.size();
    }
    for (const TimeValue& tv : c.series) {
      const std::size_t o = time_.size();
      time_.push_back(tv.time);
      grid_.push_back(static_cast<double>(
          std::lower_bound(distinct.begin(), distinct.end(), tv.time) - distinct.begin()));
      value_.push_back(tv.value);
      const int e = scheme.time_groups.group_of(tv.time);
      time_group_.push_back(e);
      ++time_group_obs_[static_cast<std::size_t>(e)];
      bases.trend.evaluate(tv.time, {trend_rows_.data() + o * trend_size_, trend_size_});
      if (shared)
        std::copy_n(trend_rows_.data() + o * trend_size_, group_size_,
                    group_rows_.data() + o * group_size_);
      else
        bases.group.evaluate(tv.time, {group_rows_.data() + o * group_size_, group_size_});
    }
    cell_begin_.push_back(time_.size());
    max_cell_size_ = std::max(max_cell_size_, c.series.size());
  }

  trend_cols_.resize(n_obs * trend_size_);
  for (std::size_t o = 0; o < n_obs; ++o)
    for (std::size_t m = 0; m < trend_size_; ++m)
      trend_cols_[m * n_obs + o] = trend_rows_[o * trend_size_ + m];

  slice_ptr_.resize(d);
  slice_cells_.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    auto& ptr = slice_ptr_[k];
    ptr.assign(dims_[k] + 1, 0);
    for (std::size_t c = 0; c < n_cells; ++c) ++ptr[cell_subject(c, k) + 1];
    for (std::size_t i = 0; i < dims_[k]; ++i) ptr[i + 1] += ptr[i];
    auto& cells = slice_cells_[k];
    cells.resize(n_cells);
    std::vector<std::size_t> fill(ptr.begin(), ptr.end() - 1);
    for (std::size_t c = 0; c < n_cells; ++c) cells[fill[cell_subject(c, k)]++] = c;
  }

  if (max_cell_size_ > 64) whitener_ = Whitener(corr, max_cell_size_);
}

void compute_trend(const FitData& data, const Eigen::MatrixXd& alpha, std::vector<double>& out) {
  const std::size_t n = data.num_obs();
  const auto r = static_cast<std::size_t>(alpha.rows());
  out.assign(r * n, 0.0);
  for (std::size_t j = 0; j < r; ++j) {
    std::span<double> hj(out.data() + j * n, n);
    for (std::size_t m = 0; m < data.trend_size(); ++m) {
      const double a = alpha(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m));
      if (a != 0.0) kernels::axpy(a, data.trend_column(m), hj);
    }
  }
}

void compute_group(const FitData& data, const Eigen::MatrixXd& beta, std::vector<double>& out) {
  const std::size_t n = data.num_obs();
  const std::size_t mg = data.group_size();
  out.resize(n);
  for (std::size_t o = 0; o < n; ++o) {
    const double* a = data.group_row(o);
    const auto e = static_cast<Eigen::Index>(data.time_group(o));
    double s = 0.0;
    for (std::size_t m = 0; m < mg; ++m) s += beta(e, static_cast<Eigen::Index>(m)) * a[m];
    out[o] = s;
  }
}

void compute_products(const FitData& data, const std::vector<Eigen::MatrixXd>& factors,
                      std::vector<double>& out) {
  const std::size_t n = data.num_obs();
  const std::size_t d = data.order();
  const auto r = static_cast<std::size_t>(factors.front().cols());
  out.resize(r * n);
  for (std::size_t c = 0; c < data.num_cells(); ++c) {
    const std::size_t begin = data.cell_begin(c);
    const std::size_t len = data.cell_size(c);
    for (std::size_t j = 0; j < r; ++j) {
      double u = 1.0;
      for (std::size_t k = 0; k < d; ++k)
        u *= factors[k](data.cell_subject(c, k), static_cast<Eigen::Index>(j));
      std::fill_n(out.data() + j * n + begin, len, u);
    }
  }
}

void compute_subgroup_products(const FitData& data, const std::vector<Eigen::VectorXd>& subgroup,
                               std::vector<double>& out) {
  const std::size_t d = data.order();
  out.resize(data.num_obs());
  for (std::size_t c = 0; c < data.num_cells(); ++c) {
    double u = 1.0;
    for (std::size_t k = 0; k < d; ++k) u *= subgroup[k](data.cell_group(c, k));
    std::fill_n(out.data() + data.cell_begin(c), data.cell_size(c), u);
  }
}

Contributions compute_contributions(const FitData& data, const ModelParams& params) {
  Contributions parts;
  compute_trend(data, params.alpha, parts.trend);
  compute_products(data, params.factors, parts.products);
  compute_group(data, params.beta, parts.group);
  compute_subgroup_products(data, params.subgroup, parts.subgroup_products);
  return parts;
}

void compute_residuals(const FitData& data, const Contributions& parts, std::size_t rank,
                       std::vector<double>& out) {
  const std::size_t n = data.num_obs();
  out.assign(data.values().begin(), data.values().end());
  for (std::size_t j = 0; j < rank; ++j)
    kernels::multiply_subtract({parts.trend.data() + j * n, n}, {parts.products.data() + j * n, n},
                               out);
  kernels::multiply_subtract(parts.group, parts.subgroup_products, out);
}

double weighted_rss(const FitData& data, const Contributions& parts, std::size_t rank,
                    std::vector<double>& scratch) {
  compute_residuals(data, parts, rank, scratch);
  const Whitener& w = data.whitener();
  if (w.is_diagonal()) return kernels::sum_squares(scratch) / w.spec().variance;
  for (std::size_t c = 0; c < data.num_cells(); ++c)
    w.apply(scratch.data() + data.cell_begin(c), data.cell_size(c), 1, data.cell_grid(c));
  return kernels::sum_squares(scratch);
}

double objective(const ModelParams& params, const FitData& data, double lambda) {
  if (params.order() != data.order()) fail(ErrorKind::config, "parameter order mismatch");
  const Contributions parts = compute_contributions(data, params);
  std::vector<double> scratch;
  return weighted_rss(data, parts, params.rank(), scratch) + lambda * params.penalty();
}

double objective(const ModelParams& params, const TemporalTensor& tensor,
                 const SubgroupScheme& scheme, const ModelBases& bases,
                 const CorrelationSpec& corr, double lambda) {
  params.validate(tensor.dims(), scheme, bases);
  const FitData data(tensor, scheme, bases, corr);
  return objective(params, data, lambda);
}

std::vector<std::vector<double>> cell_grids(const FitData& data) {
  std::vector<std::vector<double>> out(data.num_cells());
  for (std::size_t c = 0; c < data.num_cells(); ++c)
    out[c].assign(data.cell_grid(c), data.cell_grid(c) + data.cell_size(c));
  return out;
}

std::vector<std::vector<double>> cell_residuals(const ModelParams& params, const FitData& data) {
  const Contributions parts = compute_contributions(data, params);
  std::vector<double> r;
  compute_residuals(data, parts, params.rank(), r);
  std::vector<std::vector<double>> out(data.num_cells());
  for (std::size_t c = 0; c < data.num_cells(); ++c) {
    const auto b = r.begin() + static_cast<std::ptrdiff_t>(data.cell_begin(c));
    out[c].assign(b, b + static_cast<std::ptrdiff_t>(data.cell_size(c)));
  }
  return out;
}

}  // namespace dtrs
