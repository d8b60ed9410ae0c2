#include "dtrs/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "dtrs/error.hpp"

namespace dtrs {

std::string_view to_string(TimeAssignment a) noexcept {
  return a == TimeAssignment::contiguous ? "contiguous" : "round_robin";
}

TimeAssignment parse_time_assignment(std::string_view name) {
  if (name == "contiguous") return TimeAssignment::contiguous;
  if (name == "round_robin") return TimeAssignment::round_robin;
  fail(ErrorKind::config, "unknown time assignment '" + std::string(name) + "'");
}

void SimConfig::validate() const {
  if (n.size() != 3) fail(ErrorKind::config, "simulation needs exactly three modes (n)");
  if (m.size() != 4) fail(ErrorKind::config, "simulation needs four subgroup counts (m)");
  for (std::size_t k = 0; k < 3; ++k) {
    if (n[k] < 1) fail(ErrorKind::config, "mode sizes must be >= 1");
    if (m[k] < 1 || static_cast<std::size_t>(m[k]) > n[k])
      fail(ErrorKind::config, "subgroup count of mode " + std::to_string(k + 1) +
                                  " must be in [1, n_k]");
  }
  if (m[3] < 1 || m[3] > 4) fail(ErrorKind::config, "time subgroups must be in [1, 4]");
  if (r < 1 || r > 3) fail(ErrorKind::config, "simulation rank must be in [1, 3]");
  if (t1 < 1) fail(ErrorKind::config, "t1 must be >= 1");
  if (static_cast<std::size_t>(m[3]) > total_times())
    fail(ErrorKind::config, "more time subgroups than time points");
  if (!(pi_m >= 0.0 && pi_m < 1.0)) fail(ErrorKind::config, "pi_m must be in [0, 1)");
  if (!(pi_cs >= 0.0 && pi_cs < 1.0)) fail(ErrorKind::config, "pi_cs must be in [0, 1)");
  if (error == CorrelationStructure::exchangeable)
    fail(ErrorKind::config, "simulated errors are independent or ar1");
  if (error == CorrelationStructure::ar1 && !(std::abs(rho) < 1.0))
    fail(ErrorKind::config, "error rho must satisfy |rho| < 1");
}

std::size_t SimConfig::observed_count() const {
  const double total = static_cast<double>(n[0] * n[1] * n[2] * total_times());
  return static_cast<std::size_t>(std::llround(total * (1.0 - pi_m)));
}

double trend_h(int j, double t) {
  using std::numbers::pi;
  switch (j) {
    case 1: return std::sin(0.3 * pi * t);
    case 2: return 8.0 * t * (1.0 - t) - 1.0;
    case 3: return std::cos(0.2 * pi * t) + 1.0;
    default: fail(ErrorKind::bounds, "trend index j must be in 1..3");
  }
}

double trend_g(int e, double t) {
  using std::numbers::pi;
  switch (e) {
    case 1: return 2.0 * t - 1.0;
    case 2: return 8.0 * std::pow(t - 0.5, 3);
    case 3: return std::sin(0.1 * pi * t) + std::cos(pi * t);
    case 4: return -5.0 * std::exp(t) + 10.0;
    default: fail(ErrorKind::bounds, "time subgroup index e must be in 1..4");
  }
}

double true_subgroup_factor(int k, int e) {
  switch (k) {
    case 1: return -1.0 + 0.4 * e;
    case 2: return -1.2 + 0.6 * e;
    case 3: return -0.4 + 0.2 * e;
    default: fail(ErrorKind::bounds, "subgroup mode must be in 1..3");
  }
}

double true_mean(const SimTruth& truth, const SubgroupScheme& scheme,
                 std::span<const Index> indices, double t) {
  const std::size_t d = truth.factors.size();
  const auto r = truth.factors.front().cols();
  double y = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) {
    double u = trend_h(static_cast<int>(j) + 1, t);
    for (std::size_t k = 0; k < d; ++k) u *= truth.factors[k](indices[k], j);
    y += u;
  }
  double uq = trend_g(scheme.time_groups.group_of(t) + 1, t);
  for (std::size_t k = 0; k < d; ++k) uq *= truth.subgroup[k](scheme.mode_groups[k][indices[k]]);
  return y + uq;
}

SimData simulate(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t T = config.total_times();
  const auto r = static_cast<Eigen::Index>(config.r);
  SimData out;
  SimTruth& truth = out.truth;

  truth.times.resize(T);
  for (double& t : truth.times) t = uniform(rng);
  std::sort(truth.times.begin(), truth.times.end());
  const int groups_t = config.m[3];
  truth.time_labels.resize(T);
  for (std::size_t tau = 0; tau < T; ++tau)
    truth.time_labels[tau] = config.time_assignment == TimeAssignment::contiguous
                                 ? static_cast<int>(tau * static_cast<std::size_t>(groups_t) / T)
                                 : static_cast<int>(tau % static_cast<std::size_t>(groups_t));

  for (std::size_t k = 0; k < 3; ++k) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(config.n[k]), r);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < r; ++j) p(i, j) = normal(rng);
    truth.factors.push_back(std::move(p));
    Eigen::VectorXd q(config.m[k]);
    for (int e = 0; e < config.m[k]; ++e) q(e) = true_subgroup_factor(static_cast<int>(k) + 1, e + 1);
    truth.subgroup.push_back(std::move(q));
  }

  SubgroupScheme& scheme = out.scheme;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t nk = config.n[k];
    const auto mk = static_cast<std::size_t>(config.m[k]);
    std::vector<int> g(nk);
    for (std::size_t i = 0; i < nk; ++i) g[i] = static_cast<int>(i % mk);
    scheme.mode_groups.push_back(std::move(g));
    scheme.group_counts.push_back(config.m[k]);
  }
  scheme.time_groups = TimeGroups::from_points(truth.times, truth.time_labels);
  if (scheme.time_groups.count() != groups_t)
    fail(ErrorKind::config, "time subgroup labels do not cover every group");

  const std::size_t n3 = config.n[2];
  const auto cold = static_cast<std::size_t>(std::ceil(config.pi_cs * static_cast<double>(n3) - 1e-9));
  for (std::size_t i = n3 - std::min(cold, n3); i < n3; ++i) truth.cold_items.push_back(static_cast<Index>(i));
  const std::size_t first_cold = n3 - truth.cold_items.size();

  const std::size_t n_cells = config.n[0] * config.n[1] * n3;
  const std::size_t pool = n_cells * T - truth.cold_items.size() * config.n[0] * config.n[1] *
                                             std::min(config.t1, T);
  std::size_t need = config.observed_count();
  if (need > pool)
    fail(ErrorKind::config, "requested " + std::to_string(need) + " observations but only " +
                                std::to_string(pool) + " entries are eligible");

  // Selection sampling over eligible (cell, time) entries in lexicographic order.
  std::vector<std::uint8_t> chosen(n_cells * T, 0);
  std::size_t remaining = pool;
  for (std::size_t c = 0; c < n_cells && need > 0; ++c) {
    const std::size_t i3 = c % n3;
    for (std::size_t tau = 0; tau < T && need > 0; ++tau) {
      if (i3 >= first_cold && tau < config.t1) continue;
      if (uniform(rng) * static_cast<double>(remaining) < static_cast<double>(need)) {
        chosen[c * T + tau] = 1;
        --need;
      }
      --remaining;
    }
  }

  const double rho = config.error == CorrelationStructure::ar1 ? config.rho : 0.0;
  const double innovation = std::sqrt(1.0 - rho * rho);
  TemporalTensorBuilder train(config.n), test(config.n);
  std::vector<double> eps(T);
  IndexTuple idx(3);
  for (std::size_t c = 0; c < n_cells; ++c) {
    for (std::size_t tau = 0; tau < T; ++tau) {
      const double z = normal(rng);
      eps[tau] = tau == 0 || rho == 0.0 ? z : rho * eps[tau - 1] + innovation * z;
    }
    idx[0] = static_cast<Index>(c / (config.n[1] * n3));
    idx[1] = static_cast<Index>((c / n3) % config.n[1]);
    idx[2] = static_cast<Index>(c % n3);
    for (std::size_t tau = 0; tau < T; ++tau) {
      if (!chosen[c * T + tau]) continue;
      const double t = truth.times[tau];
      const double y = true_mean(truth, scheme, idx, t) + eps[tau];
      (tau < config.t1 ? train : test).add(idx, t, y);
    }
  }
  out.train = std::move(train).build();
  out.test = std::move(test).build();
  return out;
}

}  // namespace dtrs
