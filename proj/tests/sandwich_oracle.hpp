#pragma once

// Cluster-robust (cells as clusters) least-squares sandwich built from an
// explicitly assembled design matrix, compared with sandwich_covariance at
// identity working covariance and lambda = 0. The spline coefficients are
// first replaced by their least-squares values so both sides see the same
// residuals.

#include "dtrs/inference.hpp"
#include "support.hpp"

namespace dtrs::oracle {

struct DesignSystem {
  Eigen::MatrixXd w;
  Eigen::VectorXd y;
  std::vector<std::size_t> cluster;  // cell of each row
};

inline DesignSystem assemble_design(const Instance& in) {
  const ModelParams& p = in.params;
  const auto r = p.alpha.rows(), m_t = p.alpha.cols(), m_g = p.beta.cols();
  const auto groups = p.beta.rows();
  const auto cols = r * m_t + groups * m_g;
  DesignSystem s;
  s.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in.tensor.num_observations()), cols);
  s.y.resize(s.w.rows());
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < in.tensor.num_cells(); ++c) {
    const Cell& cell = in.tensor.cells()[c];
    for (const TimeValue& tv : cell.series) {
      const Eigen::VectorXd b = in.bases.trend.evaluate(tv.time);
      const Eigen::VectorXd a = in.bases.group.evaluate(tv.time);
      for (Eigen::Index j = 0; j < r; ++j) {
        double u = 1.0;
        for (std::size_t k = 0; k < cell.index.size(); ++k) u *= p.factors[k](cell.index[k], j);
        s.w.block(row, j * m_t, 1, m_t) = u * b.transpose();
      }
      double v = 1.0;
      for (std::size_t k = 0; k < cell.index.size(); ++k)
        v *= p.subgroup[k](in.scheme.mode_groups[k][cell.index[k]]);
      const int e = in.scheme.time_groups.group_of(tv.time);
      s.w.block(row, r * m_t + e * m_g, 1, m_g) = v * a.transpose();
      s.y(row) = tv.value;
      s.cluster.push_back(c);
      ++row;
    }
  }
  return s;
}

inline Eigen::MatrixXd cluster_robust_covariance(const DesignSystem& s, const Eigen::VectorXd& gamma) {
  const Eigen::MatrixXd bread = (s.w.transpose() * s.w).inverse();
  const Eigen::VectorXd e = s.y - s.w * gamma;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(s.w.cols(), s.w.cols());
  std::size_t begin = 0;
  while (begin < s.cluster.size()) {
    std::size_t end = begin;
    while (end < s.cluster.size() && s.cluster[end] == s.cluster[begin]) ++end;
    const auto n = static_cast<Eigen::Index>(end - begin);
    const Eigen::VectorXd score =
        s.w.middleRows(static_cast<Eigen::Index>(begin), n).transpose() * e.segment(static_cast<Eigen::Index>(begin), n);
    meat += score * score.transpose();
    begin = end;
  }
  return bread * meat * bread;
}

// Relative Frobenius deviation; modifies `in` (identity covariance, lambda 0,
// least-squares spline coefficients).
inline double sandwich_relative_deviation(Instance& in) {
  in.corr = CorrelationSpec{};
  in.lambda = 0.0;
  const DesignSystem s = assemble_design(in);
  const Eigen::VectorXd gamma = s.w.colPivHouseholderQr().solve(s.y);
  const auto r = in.params.alpha.rows(), m_t = in.params.alpha.cols(), m_g = in.params.beta.cols();
  for (Eigen::Index j = 0; j < r; ++j) in.params.alpha.row(j) = gamma.segment(j * m_t, m_t).transpose();
  for (Eigen::Index e = 0; e < in.params.beta.rows(); ++e)
    in.params.beta.row(e) = gamma.segment(r * m_t + e * m_g, m_g).transpose();
  const Eigen::MatrixXd oracle = cluster_robust_covariance(s, gamma);
  const SandwichCovariance ours =
      sandwich_covariance(in.params, in.tensor, in.scheme, in.bases, in.corr, 0.0);
  return (ours.cov_gamma - oracle).norm() / oracle.norm();
}

}  // namespace dtrs::oracle
