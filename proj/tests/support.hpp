#pragma once

// Random small instances and brute-force reference computations shared by the
// unit and acceptance tests. Nothing here goes through FitData or the
// whitener: predictions are summed term by term and working covariances are
// formed densely and inverted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dtrs/model.hpp"
#include "dtrs/spline_basis.hpp"
#include "dtrs/temporal_tensor.hpp"
#include "dtrs/working_correlation.hpp"

namespace dtrs::oracle {

struct Instance {
  TemporalTensor tensor;
  SubgroupScheme scheme;
  ModelBases bases;
  CorrelationSpec corr;
  ModelParams params;
  double lambda = 0.0;
};

inline double dense_correlation(const CorrelationSpec& c, std::size_t i, std::size_t j) {
  if (i == j) return 1.0;
  switch (c.structure) {
    case CorrelationStructure::independence: return 0.0;
    case CorrelationStructure::exchangeable: return c.rho;
    case CorrelationStructure::ar1:
      return std::pow(c.rho, std::abs(static_cast<double>(i) - static_cast<double>(j)));
  }
  return 0.0;
}

inline Eigen::MatrixXd dense_covariance(const CorrelationSpec& c, std::size_t n) {
  Eigen::MatrixXd s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = c.variance * dense_correlation(c, i, j);
  return s;
}

// Grid-lag AR-1 over a cell observed at times `t`, lags counted in ranks of
// `distinct` (all distinct times of the data).
inline Eigen::MatrixXd dense_covariance(const CorrelationSpec& c, const std::vector<double>& t,
                                        const std::vector<double>& distinct) {
  const std::size_t n = t.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i)
    for (double u : distinct) rank[i] += u < t[i] ? 1.0 : 0.0;
  Eigen::MatrixXd s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = c.variance * std::pow(c.rho, std::abs(rank[i] - rank[j]));
  return s;
}

inline double reference_prediction(const ModelParams& p, const SubgroupScheme& scheme,
                                   const ModelBases& bases, const IndexTuple& idx, double t) {
  const Eigen::VectorXd b = bases.trend.evaluate(t);
  const Eigen::VectorXd a = bases.group.evaluate(t);
  double y = 0.0;
  for (Eigen::Index j = 0; j < p.alpha.rows(); ++j) {
    double prod = p.alpha.row(j).dot(b);
    for (std::size_t k = 0; k < idx.size(); ++k) prod *= p.factors[k](idx[k], j);
    y += prod;
  }
  double g = p.beta.row(scheme.time_groups.group_of(t)).dot(a);
  for (std::size_t k = 0; k < idx.size(); ++k) g *= p.subgroup[k](scheme.mode_groups[k][idx[k]]);
  return y + g;
}

inline double penalty_sum(const ModelParams& p) {
  double s = p.alpha.squaredNorm() + p.beta.squaredNorm();
  for (const auto& f : p.factors) s += f.squaredNorm();
  for (const auto& q : p.subgroup) s += q.squaredNorm();
  return s;
}

// sum_cells r^T Sigma^{-1} r + lambda * ||theta||^2 with a dense solve per cell.
inline double reference_objective(const ModelParams& p, const Instance& in) {
  double total = 0.0;
  std::vector<double> distinct;
  for (const Cell& c : in.tensor.cells())
    for (const TimeValue& tv : c.series) distinct.push_back(tv.time);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (const Cell& c : in.tensor.cells()) {
    const std::size_t n = c.series.size();
    Eigen::VectorXd r(n);
    std::vector<double> t(n);
    for (std::size_t o = 0; o < n; ++o) {
      t[o] = c.series[o].time;
      r(o) = c.series[o].value - reference_prediction(p, in.scheme, in.bases, c.index, t[o]);
    }
    const Eigen::MatrixXd sigma =
        in.corr.uses_grid() ? dense_covariance(in.corr, t, distinct) : dense_covariance(in.corr, n);
    total += r.dot(sigma.fullPivLu().solve(r));
  }
  return total + in.lambda * penalty_sum(p);
}

// Minimizes f over x by Newton steps on central-difference derivatives. The
// objectives used here are quadratic in x, so a few steps reach the optimum.
inline Eigen::VectorXd fd_newton(const std::function<double(const Eigen::VectorXd&)>& f,
                                 Eigen::VectorXd x, int steps = 4, double h = 1e-3) {
  const Eigen::Index n = x.size();
  auto gradient = [&](const Eigen::VectorXd& at) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd a = at, b = at;
      a(i) += h;
      b(i) -= h;
      g(i) = (f(a) - f(b)) / (2 * h);
    }
    return g;
  };
  Eigen::MatrixXd hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
      pp(i) += h, pp(j) += h;
      pm(i) += h, pm(j) -= h;
      mp(i) -= h, mp(j) += h;
      mm(i) -= h, mm(j) -= h;
      hess(i, j) = hess(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
    }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(hess);
  for (int s = 0; s < steps; ++s) x -= lu.solve(gradient(x));
  return x;
}

struct InstanceShape {
  std::vector<std::size_t> dims{4, 3, 5};
  std::vector<int> groups{2, 2, 2};
  int time_groups = 2;
  // Number of distinct time points; 0 draws every time uniformly.
  std::size_t time_grid = 0;
  std::size_t rank = 2;
  int degree = 2;
  std::size_t knots = 1;
  double fill = 0.6;
  std::size_t min_obs = 3;
  std::size_t max_obs = 6;
};

// Every subject observed and every subgroup with plenty of support, so no
// parameter is frozen.
inline Instance random_instance(std::uint64_t seed, const InstanceShape& shape = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t d = shape.dims.size();

  Instance in{.tensor = {},
              .scheme = {},
              .bases = {build_basis(shape.degree, shape.knots, KnotPlacement::equispaced),
                        build_basis(shape.degree, shape.knots, KnotPlacement::equispaced)}};
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<int> g(shape.dims[k]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<int>(i % shape.groups[k]);
    in.scheme.mode_groups.push_back(g);
    in.scheme.group_counts.push_back(shape.groups[k]);
  }
  std::vector<double> breaks;
  std::vector<int> labels;
  for (int e = 0; e < 2 * shape.time_groups; ++e) labels.push_back(e % shape.time_groups);
  for (int e = 1; e < 2 * shape.time_groups; ++e) breaks.push_back(e / (2.0 * shape.time_groups));
  in.scheme.time_groups = TimeGroups::intervals(breaks, labels);

  TemporalTensorBuilder builder(shape.dims);
  std::size_t cells = 1;
  for (auto n : shape.dims) cells *= n;
  for (std::size_t c = 0; c < cells; ++c) {
    IndexTuple idx(d);
    std::size_t rest = c;
    for (std::size_t k = d; k-- > 0;) {
      idx[k] = static_cast<Index>(rest % shape.dims[k]);
      rest /= shape.dims[k];
    }
    // Cells (j mod n_1, ..., j mod n_d) guarantee every subject appears.
    bool diagonal = false;
    for (std::size_t j = 0; j < *std::max_element(shape.dims.begin(), shape.dims.end()); ++j) {
      bool all = true;
      for (std::size_t k = 0; k < d; ++k) all &= idx[k] == j % shape.dims[k];
      diagonal |= all;
    }
    if (!diagonal && unif(rng) > shape.fill) continue;
    const std::size_t n =
        shape.min_obs + static_cast<std::size_t>(unif(rng) * (shape.max_obs - shape.min_obs + 1));
    std::vector<double> times;
    const std::size_t want = std::min<std::size_t>(n, shape.time_grid ? shape.time_grid : shape.max_obs);
    while (times.size() < want) {
      const double t = shape.time_grid
                           ? (static_cast<double>(static_cast<std::size_t>(unif(rng) * shape.time_grid)) + 0.5) /
                                 static_cast<double>(shape.time_grid)
                           : unif(rng);
      bool clash = false;
      for (double u : times) clash |= std::abs(u - t) < 1e-6;
      if (!clash) times.push_back(t);
    }
    for (double t : times) builder.add(idx, t, normal(rng));
  }
  in.tensor = std::move(builder).build();

  const int pick = static_cast<int>(unif(rng) * 3);
  in.corr.structure = pick == 0 ? CorrelationStructure::independence
                      : pick == 1 ? CorrelationStructure::exchangeable
                                  : CorrelationStructure::ar1;
  if (in.corr.structure != CorrelationStructure::independence) in.corr.rho = 0.1 + 0.7 * unif(rng);
  in.corr.variance = 0.5 + unif(rng);
  in.lambda = 0.05 + 2.0 * unif(rng);
  if (in.corr.structure == CorrelationStructure::ar1 && unif(rng) < 0.5) in.corr.lag = LagScale::grid;

  const auto m = static_cast<Eigen::Index>(in.bases.trend.size());
  const auto r = static_cast<Eigen::Index>(shape.rank);
  for (std::size_t k = 0; k < d; ++k) {
    Eigen::MatrixXd p(shape.dims[k], r);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
    in.params.factors.push_back(p);
    Eigen::VectorXd q(shape.groups[k]);
    for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = 1.0 + 0.3 * normal(rng);
    in.params.subgroup.push_back(q);
  }
  in.params.alpha.resize(r, m);
  for (Eigen::Index i = 0; i < in.params.alpha.size(); ++i) in.params.alpha.data()[i] = normal(rng);
  in.params.beta.resize(shape.time_groups, m);
  for (Eigen::Index i = 0; i < in.params.beta.size(); ++i) in.params.beta.data()[i] = normal(rng);
  return in;
}

inline Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

inline Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

}  // namespace dtrs::oracle
