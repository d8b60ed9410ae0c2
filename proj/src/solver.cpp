#include "dtrs/solver.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "dtrs/error.hpp"
#include "dtrs/kernels.hpp"
#include "parallel.hpp"

namespace dtrs {
namespace {

using Clock = std::chrono::steady_clock;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Augmented normal equations [X y]^T [X y] (upper triangle, row-major), so a
// single rank-1 kernel accumulates both the Gram matrix and X^T y.
struct NormalEquations {
  std::size_t dim;
  std::vector<double> aug;

  explicit NormalEquations(std::size_t d) : dim(d), aug((d + 1) * (d + 1), 0.0) {}

  void reset() { std::fill(aug.begin(), aug.end(), 0.0); }

  void add(const double* rows, std::size_t n) {
    const std::size_t w = dim + 1;
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < n; ++i) k.rank1_update(aug.data(), w, rows + i * w);
  }

  void merge(const NormalEquations& other) {
    for (std::size_t i = 0; i < aug.size(); ++i) aug[i] += other.aug[i];
  }

  Eigen::MatrixXd gram() const {
    const std::size_t w = dim + 1;
    const auto n = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j)
        g(i, j) = g(j, i) = aug[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)];
    return g;
  }

  Eigen::VectorXd rhs() const {
    const std::size_t w = dim + 1;
    Eigen::VectorXd b(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) b(static_cast<Eigen::Index>(i)) = aug[i * w + dim];
    return b;
  }
};

Eigen::VectorXd ridge_solve(Eigen::MatrixXd a, const Eigen::VectorXd& b, double lambda,
                            const std::string& block) {
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  const double floor = lambda == 0.0 ? 1e-13 : 0.0;
  if (llt.info() != Eigen::Success || !(llt.rcond() > floor))
    fail(ErrorKind::ridge_degenerate,
         "normal equations of block " + block + " are singular; use lambda > 0");
  return llt.solve(b);
}

// Sums per-chunk normal equations over all cells in a fixed order.
template <class CellFn>
NormalEquations reduce_cells(const FitData& data, std::size_t dim, std::size_t threads,
                             CellFn&& cell_rows) {
  std::vector<NormalEquations> parts(detail::kReductionChunks, NormalEquations(dim));
  const std::size_t n_cells = data.num_cells();
  detail::parallel_ranges(detail::kReductionChunks, threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> buf;
    for (std::size_t chunk = b; chunk < e; ++chunk) {
      const std::size_t c0 = detail::chunk_begin(chunk, n_cells);
      const std::size_t c1 = detail::chunk_begin(chunk + 1, n_cells);
      for (std::size_t c = c0; c < c1; ++c) {
        const std::size_t n = data.cell_size(c);
        buf.resize(n * (dim + 1));
        cell_rows(c, buf.data());
        data.whitener().apply(buf.data(), n, dim + 1, data.cell_grid(c));
        parts[chunk].add(buf.data(), n);
      }
    }
  });
  for (std::size_t i = 1; i < parts.size(); ++i) parts[0].merge(parts[i]);
  return std::move(parts[0]);
}

// y minus the time-subgroup part, for the individual-step targets.
double individual_target(const FitData& data, const Contributions& parts, std::size_t o) {
  return data.values()[o] - parts.group[o] * parts.subgroup_products[o];
}

double subgroup_target(const FitData& data, const Contributions& parts, std::size_t rank,
                       std::size_t o) {
  const std::size_t n = data.num_obs();
  double y = data.values()[o];
  for (std::size_t j = 0; j < rank; ++j) y -= parts.trend[j * n + o] * parts.products[j * n + o];
  return y;
}

void slice_equations(const FitData& data, const ModelParams& params, const Contributions& parts,
                     std::size_t mode, std::size_t subject, NormalEquations& eq,
                     std::vector<double>& buf) {
  const std::size_t r = params.rank();
  const std::size_t w = r + 1;
  const std::size_t d = data.order();
  const std::size_t n_obs = data.num_obs();
  std::array<double, 64> other{};
  for (std::size_t c : data.slice(mode, subject)) {
    const std::size_t begin = data.cell_begin(c);
    const std::size_t n = data.cell_size(c);
    for (std::size_t j = 0; j < r; ++j) {
      double u = 1.0;
      for (std::size_t k = 0; k < d; ++k)
        if (k != mode) u *= params.factors[k](data.cell_subject(c, k), static_cast<Eigen::Index>(j));
      other[j] = u;
    }
    buf.resize(n * w);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = buf.data() + i * w;
      const std::size_t o = begin + i;
      for (std::size_t j = 0; j < r; ++j) row[j] = parts.trend[j * n_obs + o] * other[j];
      row[r] = individual_target(data, parts, o);
    }
    data.whitener().apply(buf.data(), n, w, data.cell_grid(c));
    eq.add(buf.data(), n);
  }
}

std::string block_label(bool individual, std::size_t b, std::size_t d) {
  if (b < d) return (individual ? "P" : "q") + std::to_string(b + 1);
  return individual ? "alpha" : "beta";
}

}  // namespace

Eigen::VectorXd update_individual_slice(const FitData& data, const ModelParams& params,
                                        const Contributions& parts, std::size_t mode,
                                        std::size_t subject, double lambda) {
  if (mode >= data.order() || subject >= data.dims()[mode])
    fail(ErrorKind::bounds, "individual slice out of range");
  const auto r = static_cast<Eigen::Index>(params.rank());
  if (data.slice(mode, subject).empty()) return Eigen::VectorXd::Zero(r);
  NormalEquations eq(params.rank());
  std::vector<double> buf;
  slice_equations(data, params, parts, mode, subject, eq, buf);
  return ridge_solve(eq.gram(), eq.rhs(), lambda, "P" + std::to_string(mode + 1));
}

Eigen::VectorXd update_individual_slice(const FitData& data, const ModelParams& params,
                                        std::size_t mode, std::size_t subject, double lambda) {
  const Contributions parts = compute_contributions(data, params);
  return update_individual_slice(data, params, parts, mode, subject, lambda);
}

Eigen::MatrixXd update_individual_factor(const FitData& data, const ModelParams& params,
                                         const Contributions& parts, std::size_t mode,
                                         double lambda, std::size_t threads) {
  if (mode >= data.order()) fail(ErrorKind::bounds, "mode out of range");
  Eigen::MatrixXd out = params.factors[mode];
  const std::string label = "P" + std::to_string(mode + 1);
  detail::parallel_ranges(data.dims()[mode], threads, [&](std::size_t b, std::size_t e) {
    NormalEquations eq(params.rank());
    std::vector<double> buf;
    for (std::size_t i = b; i < e; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      if (data.slice(mode, i).empty()) {
        out.row(row).setZero();
        continue;
      }
      eq.reset();
      slice_equations(data, params, parts, mode, i, eq, buf);
      out.row(row) = ridge_solve(eq.gram(), eq.rhs(), lambda, label).transpose();
    }
  });
  return out;
}

SubgroupUpdate update_subgroup_factors(const FitData& data, const ModelParams& params,
                                       const Contributions& parts, std::size_t mode,
                                       double lambda) {
  if (mode >= data.order()) fail(ErrorKind::bounds, "mode out of range");
  const std::size_t d = data.order();
  const std::size_t r = params.rank();
  const auto groups = static_cast<std::size_t>(data.group_counts()[mode]);
  std::vector<double> sxx(groups, 0.0), sxy(groups, 0.0);
  std::vector<double> buf;
  for (std::size_t c = 0; c < data.num_cells(); ++c) {
    const std::size_t begin = data.cell_begin(c);
    const std::size_t n = data.cell_size(c);
    double other = 1.0;
    for (std::size_t k = 0; k < d; ++k)
      if (k != mode) other *= params.subgroup[k](data.cell_group(c, k));
    buf.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      buf[2 * i] = parts.group[begin + i] * other;
      buf[2 * i + 1] = subgroup_target(data, parts, r, begin + i);
    }
    data.whitener().apply(buf.data(), n, 2, data.cell_grid(c));
    const auto g = static_cast<std::size_t>(data.cell_group(c, mode));
    for (std::size_t i = 0; i < n; ++i) {
      sxx[g] += buf[2 * i] * buf[2 * i];
      sxy[g] += buf[2 * i] * buf[2 * i + 1];
    }
  }
  SubgroupUpdate out{params.subgroup[mode], std::vector<bool>(groups, false)};
  for (std::size_t g = 0; g < groups; ++g) {
    if (data.subgroup_obs(mode, g) < 2) {
      out.frozen[g] = true;
      continue;
    }
    const double denom = sxx[g] + lambda;
    if (!(denom > 0.0))
      fail(ErrorKind::ridge_degenerate, "normal equation of block q" + std::to_string(mode + 1) +
                                            " is singular; use lambda > 0");
    out.values(static_cast<Eigen::Index>(g)) = sxy[g] / denom;
  }
  return out;
}

SubgroupUpdate update_subgroup_factors(const FitData& data, const ModelParams& params,
                                       std::size_t mode, double lambda) {
  const Contributions parts = compute_contributions(data, params);
  return update_subgroup_factors(data, params, parts, mode, lambda);
}

Eigen::MatrixXd update_alpha(const FitData& data, const ModelParams& params,
                             const Contributions& parts, double lambda) {
  const std::size_t r = params.rank();
  const std::size_t m = data.trend_size();
  const std::size_t dim = r * m;
  const std::size_t n_obs = data.num_obs();
  const NormalEquations eq = reduce_cells(data, dim, 1, [&](std::size_t c, double* rows) {
    const std::size_t begin = data.cell_begin(c);
    for (std::size_t i = 0; i < data.cell_size(c); ++i) {
      const std::size_t o = begin + i;
      double* row = rows + i * (dim + 1);
      const double* basis = data.trend_row(o);
      for (std::size_t j = 0; j < r; ++j) {
        const double u = parts.products[j * n_obs + o];
        for (std::size_t b = 0; b < m; ++b) row[j * m + b] = u * basis[b];
      }
      row[dim] = individual_target(data, parts, o);
    }
  });
  const Eigen::VectorXd x = ridge_solve(eq.gram(), eq.rhs(), lambda, "alpha");
  Eigen::MatrixXd alpha(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t b = 0; b < m; ++b)
      alpha(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b)) =
          x(static_cast<Eigen::Index>(j * m + b));
  return alpha;
}

Eigen::MatrixXd update_alpha(const FitData& data, const ModelParams& params, double lambda) {
  const Contributions parts = compute_contributions(data, params);
  return update_alpha(data, params, parts, lambda);
}

BetaUpdate update_beta(const FitData& data, const ModelParams& params, const Contributions& parts,
                       double lambda) {
  const std::size_t groups = data.num_time_groups();
  const std::size_t m = data.group_size();
  const std::size_t dim = groups * m;
  const std::size_t r = params.rank();
  const NormalEquations eq = reduce_cells(data, dim, 1, [&](std::size_t c, double* rows) {
    const std::size_t begin = data.cell_begin(c);
    const std::size_t n = data.cell_size(c);
    std::fill_n(rows, n * (dim + 1), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t o = begin + i;
      double* row = rows + i * (dim + 1);
      const double* basis = data.group_row(o);
      const double u = parts.subgroup_products[o];
      const std::size_t off = static_cast<std::size_t>(data.time_group(o)) * m;
      for (std::size_t b = 0; b < m; ++b) row[off + b] = u * basis[b];
      row[dim] = subgroup_target(data, parts, r, o);
    }
  });

  BetaUpdate out{params.beta, std::vector<bool>(groups, false)};
  std::vector<Eigen::Index> active, fixed;
  for (std::size_t e = 0; e < groups; ++e) {
    const bool freeze = data.time_group_obs(e) < 2;
    out.frozen[e] = freeze;
    for (std::size_t b = 0; b < m; ++b)
      (freeze ? fixed : active).push_back(static_cast<Eigen::Index>(e * m + b));
  }
  if (active.empty()) return out;

  const Eigen::MatrixXd g = eq.gram();
  const Eigen::VectorXd rhs = eq.rhs();
  const auto na = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd a(na, na);
  Eigen::VectorXd b(na);
  for (Eigen::Index i = 0; i < na; ++i) {
    b(i) = rhs(active[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < na; ++j)
      a(i, j) = g(active[static_cast<std::size_t>(i)], active[static_cast<std::size_t>(j)]);
    for (Eigen::Index f : fixed) {
      const auto e = f / static_cast<Eigen::Index>(m);
      const auto col = f % static_cast<Eigen::Index>(m);
      b(i) -= g(active[static_cast<std::size_t>(i)], f) * params.beta(e, col);
    }
  }
  const Eigen::VectorXd x = ridge_solve(std::move(a), b, lambda, "beta");
  for (Eigen::Index i = 0; i < na; ++i) {
    const Eigen::Index idx = active[static_cast<std::size_t>(i)];
    out.values(idx / static_cast<Eigen::Index>(m), idx % static_cast<Eigen::Index>(m)) = x(i);
  }
  return out;
}

BetaUpdate update_beta(const FitData& data, const ModelParams& params, double lambda) {
  const Contributions parts = compute_contributions(data, params);
  return update_beta(data, params, parts, lambda);
}

double improvement(double candidate, double previous) {
  if (previous == 0.0) return 0.0;
  return 1.0 - candidate / previous;
}

ModelParams initialize(const FitData& data, std::size_t rank, std::uint64_t seed,
                       double lambda) {
  ModelParams p;
  const auto r = static_cast<Eigen::Index>(rank);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
  for (std::size_t k = 0; k < data.order(); ++k) {
    const std::size_t n = data.dims()[k];
    Eigen::MatrixXd f(static_cast<Eigen::Index>(n), r);
    for (std::size_t i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < r; ++j) f(static_cast<Eigen::Index>(i), j) = normal(rng);
    for (std::size_t i = 0; i < n; ++i)
      if (data.slice(k, i).empty()) f.row(static_cast<Eigen::Index>(i)).setZero();
    p.factors.push_back(std::move(f));
    p.subgroup.push_back(Eigen::VectorXd::Ones(data.group_counts()[k]));
  }
  p.alpha = data.trend_unit().transpose().replicate(r, 1);
  p.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.num_time_groups()),
                                 static_cast<Eigen::Index>(data.group_size()));
  try {
    p.beta = update_beta(data, p, lambda).values;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ridge_degenerate) throw;
  }
  return p;
}

FitResult fit(const FitData& data, const ModelParams& start, const SolverOptions& options) {
  options.hyper.validate();
  const auto t0 = Clock::now();
  const double lambda = options.hyper.lambda;
  const std::size_t d = data.order();
  const std::size_t r = start.rank();
  if (start.order() != d) fail(ErrorKind::config, "starting parameters have the wrong order");
  if (r != options.hyper.rank)
    fail(ErrorKind::config, "starting parameters have rank " + std::to_string(r) + " but r = " +
                                std::to_string(options.hyper.rank));
  if (!start.all_finite()) fail(ErrorKind::divergence, "starting parameters are not finite");

  ModelParams params = start;
  Contributions parts = compute_contributions(data, params);
  std::vector<double> scratch;
  FitReport report;
  report.final_lambda = lambda;
  std::set<std::string> frozen, skipped;

  double pen = params.penalty();
  double current = weighted_rss(data, parts, r, scratch) + lambda * pen;
  if (!std::isfinite(current)) fail(ErrorKind::divergence, "initial objective is not finite");
  report.objective_trace.push_back(current);

  struct Candidate {
    bool individual;
    std::size_t block;
    std::string label;
    Eigen::MatrixXd matrix;
    Eigen::VectorXd vector;
    std::vector<double> contrib;
    double objective;
    double gain;
  };

  auto slot_of = [&](bool individual, std::size_t b) -> std::vector<double>& {
    if (individual) return b < d ? parts.products : parts.trend;
    return b < d ? parts.subgroup_products : parts.group;
  };

  auto evaluate = [&](bool individual, std::size_t b) -> std::optional<Candidate> {
    Candidate c{individual, b, block_label(individual, b, d), {}, {}, {}, 0.0, 0.0};
    double old_norm = 0.0, new_norm = 0.0;
    try {
      if (individual && b < d) {
        c.matrix = update_individual_factor(data, params, parts, b, lambda, options.threads);
        auto f = params.factors;
        f[b] = c.matrix;
        compute_products(data, f, c.contrib);
        old_norm = params.factors[b].squaredNorm();
        new_norm = c.matrix.squaredNorm();
      } else if (individual) {
        c.matrix = update_alpha(data, params, parts, lambda);
        compute_trend(data, c.matrix, c.contrib);
        old_norm = params.alpha.squaredNorm();
        new_norm = c.matrix.squaredNorm();
      } else if (b < d) {
        SubgroupUpdate u = update_subgroup_factors(data, params, parts, b, lambda);
        for (std::size_t g = 0; g < u.frozen.size(); ++g)
          if (u.frozen[g]) frozen.insert(c.label + "[" + std::to_string(g + 1) + "]");
        c.vector = std::move(u.values);
        auto s = params.subgroup;
        s[b] = c.vector;
        compute_subgroup_products(data, s, c.contrib);
        old_norm = params.subgroup[b].squaredNorm();
        new_norm = c.vector.squaredNorm();
      } else {
        BetaUpdate u = update_beta(data, params, parts, lambda);
        for (std::size_t e = 0; e < u.frozen.size(); ++e)
          if (u.frozen[e]) frozen.insert("beta[" + std::to_string(e + 1) + "]");
        c.matrix = std::move(u.values);
        compute_group(data, c.matrix, c.contrib);
        old_norm = params.beta.squaredNorm();
        new_norm = c.matrix.squaredNorm();
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ridge_degenerate) throw;
      skipped.insert(c.label);
      return std::nullopt;
    }
    auto& slot = slot_of(individual, b);
    std::swap(slot, c.contrib);
    c.objective = weighted_rss(data, parts, r, scratch) + lambda * (pen - old_norm + new_norm);
    std::swap(slot, c.contrib);
    if (!std::isfinite(c.objective))
      fail(ErrorKind::divergence, "objective became non-finite in block " + c.label);
    c.gain = improvement(c.objective, current);
    return c;
  };

  auto accept = [&](Candidate& c) {
    if (c.individual && c.block < d) params.factors[c.block] = std::move(c.matrix);
    else if (c.individual) params.alpha = std::move(c.matrix);
    else if (c.block < d) params.subgroup[c.block] = std::move(c.vector);
    else params.beta = std::move(c.matrix);
    std::swap(slot_of(c.individual, c.block), c.contrib);
    pen = params.penalty();
    current = c.objective;
  };

  // Cyclic sweeps start with the coefficient block: updating a factor while
  // its basis coefficients are still zero would pin it to zero.
  std::vector<std::size_t> cyclic_order{d};
  for (std::size_t b = 0; b < d; ++b) cyclic_order.push_back(b);

  for (std::size_t it = 1; it <= options.hyper.max_iter; ++it) {
    double max_gain = -kInf;
    for (const bool individual : {true, false}) {
      std::string accepted;
      double step_gain = -kInf;
      if (options.mode == MbiMode::max_block) {
        std::optional<Candidate> best;
        for (std::size_t b = 0; b <= d; ++b) {
          auto c = evaluate(individual, b);
          if (!c) continue;
          step_gain = std::max(step_gain, c->gain);
          if (!best || c->gain > best->gain) best = std::move(c);
        }
        if (best && best->gain >= 0.0) {
          accepted = best->label;
          accept(*best);
        }
      } else {
        for (std::size_t b : cyclic_order) {
          auto c = evaluate(individual, b);
          if (!c) continue;
          step_gain = std::max(step_gain, c->gain);
          if (c->gain >= 0.0) {
            if (!accepted.empty()) accepted += "+";
            accepted += c->label;
            accept(*c);
          }
        }
      }
      if (accepted.empty()) accepted = "none";
      max_gain = std::max(max_gain, step_gain);
      report.objective_trace.push_back(current);
      report.accepted_blocks.push_back(accepted);
      if (options.log)
        options.log({it, individual ? "individual" : "subgroup", accepted, current, step_gain});
    }
    report.iterations = it;
    report.max_improvement.push_back(max_gain);
    if (max_gain < options.hyper.epsilon) {
      report.converged = true;
      break;
    }
  }

  report.frozen.assign(frozen.begin(), frozen.end());
  report.skipped.assign(skipped.begin(), skipped.end());
  report.wallclock = std::chrono::duration<double>(Clock::now() - t0).count();
  return {std::move(params), std::move(report)};
}

FitResult fit(const TemporalTensor& tensor, const SubgroupScheme& scheme, const ModelBases& bases,
              const CorrelationSpec& corr, const SolverOptions& options,
              const std::optional<ModelParams>& warm_start) {
  options.hyper.validate();
  const FitData data(tensor, scheme, bases, corr);
  if (warm_start) {
    warm_start->validate(tensor.dims(), scheme, bases);
    return fit(data, *warm_start, options);
  }
  return fit(data, initialize(data, options.hyper.rank, options.hyper.seed, options.hyper.lambda),
             options);
}

ModelParams align_permutation(ModelParams params) {
  const auto r = static_cast<Eigen::Index>(params.rank());
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(r));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (const auto& f : params.factors)
      for (Eigen::Index i = 0; i < f.rows(); ++i)
        if (f(i, a) != f(i, b)) return f(i, a) > f(i, b);
    return false;
  });
  for (auto& f : params.factors) {
    const Eigen::MatrixXd old = f;
    for (Eigen::Index j = 0; j < r; ++j) f.col(j) = old.col(perm[static_cast<std::size_t>(j)]);
  }
  const Eigen::MatrixXd old = params.alpha;
  for (Eigen::Index j = 0; j < r; ++j) params.alpha.row(j) = old.row(perm[static_cast<std::size_t>(j)]);
  return params;
}

CorrelatedFit fit_with_correlation(const TemporalTensor& tensor, const SubgroupScheme& scheme,
                                   const ModelBases& bases, const CorrelationPlan& plan,
                                   const SolverOptions& options,
                                   const std::optional<ModelParams>& warm_start) {
  CorrelatedFit out;
  out.corr.structure = plan.structure;
  out.corr.lag = plan.lag;
  out.corr.variance = plan.variance.value_or(1.0);
  if (plan.structure == CorrelationStructure::independence || plan.rho) {
    out.corr.rho = plan.rho.value_or(0.0);
    out.corr.validate();
    FitResult f = fit(tensor, scheme, bases, out.corr, options, warm_start);
    out.params = std::move(f.params);
    out.report = std::move(f.report);
    return out;
  }
  if (plan.rounds < 1) fail(ErrorKind::config, "correlation re-estimation needs >= 1 round");

  CorrelationSpec pilot_spec;
  pilot_spec.variance = out.corr.variance;
  FitResult current = fit(tensor, scheme, bases, pilot_spec, options, warm_start);
  for (std::size_t round = 0; round < plan.rounds; ++round) {
    const FitData resid_data(tensor, scheme, bases, pilot_spec);
    const auto residuals = cell_residuals(current.params, resid_data);
    CorrelationSpec spec = estimate_nuisance(residuals, plan.structure, plan.lag, cell_grids(resid_data));
    if (plan.variance) spec.variance = *plan.variance;
    out.pilots.push_back(std::move(current.report));
    current = fit(tensor, scheme, bases, spec, options, current.params);
    out.corr = spec;
  }
  out.params = std::move(current.params);
  out.report = std::move(current.report);
  return out;
}

TimeSplit split_by_time(const TemporalTensor& tensor, std::size_t trailing) {
  const std::vector<double> times = tensor.distinct_times();
  if (trailing == 0 || trailing >= times.size())
    fail(ErrorKind::split, "cannot hold out " + std::to_string(trailing) + " of " +
                               std::to_string(times.size()) + " distinct time points");
  const double cut = times[times.size() - trailing];
  return {tensor.filter([cut](const IndexTuple&, const TimeValue& tv) { return tv.time < cut; }),
          tensor.filter([cut](const IndexTuple&, const TimeValue& tv) { return tv.time >= cut; })};
}

TuneResult tune_lambda(const TemporalTensor& train, const TemporalTensor& validation,
                       const SubgroupScheme& scheme, const ModelBases& bases,
                       const CorrelationPlan& plan, std::span<const double> grid,
                       const SolverOptions& options) {
  if (grid.empty()) fail(ErrorKind::config, "lambda grid is empty");
  for (double lam : grid)
    if (!(lam >= 0.0) || !std::isfinite(lam)) fail(ErrorKind::config, "lambda grid values must be >= 0");
  if (validation.num_observations() == 0) fail(ErrorKind::split, "validation set is empty");

  TuneResult out{0.0, {}};
  std::optional<ModelParams> warm;
  for (double lam : grid) {
    SolverOptions o = options;
    o.hyper.lambda = lam;
    TuneEntry entry{lam, kInf, 0, "", {}};
    try {
      CorrelatedFit f = fit_with_correlation(train, scheme, bases, plan, o, warm);
      double ss = 0.0;
      for (const Cell& c : validation.cells())
        for (const TimeValue& tv : c.series) {
          const double e = tv.value - predict_cell(f.params, scheme, bases, c.index, tv.time);
          ss += e * e;
        }
      entry.rmse = std::sqrt(ss / static_cast<double>(validation.num_observations()));
      if (!std::isfinite(entry.rmse)) entry.rmse = kInf;
      entry.iterations = f.report.iterations;
      entry.reports = std::move(f.pilots);
      entry.reports.push_back(std::move(f.report));
      warm = std::move(f.params);
    } catch (const Error& e) {
      if (!is_numerical(e.kind())) throw;
      entry.error = e.what();
    }
    out.table.push_back(std::move(entry));
  }

  double best = kInf;
  bool found = false;
  for (const TuneEntry& e : out.table) {
    if (!std::isfinite(e.rmse)) continue;
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    const bool better = !found || e.rmse < best - tol ||
                        (std::abs(e.rmse - best) <= tol && e.lambda < out.best_lambda);
    if (better) {
      best = std::min(best, e.rmse);
      out.best_lambda = e.lambda;
      found = true;
    }
  }
  if (!found) fail(ErrorKind::divergence, "no lambda in the grid gave a finite validation error");
  return out;
}

}  // namespace dtrs
