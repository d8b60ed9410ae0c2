#include "dtrs/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dtrs/error.hpp"

namespace dtrs {
namespace {

constexpr double kKnotNudge = 1e-9;

// Returns true if base^exp <= limit, without overflow.
bool pow_at_most(std::size_t base, int exp, std::size_t limit) {
  unsigned __int128 acc = 1;
  for (int i = 0; i < exp; ++i) {
    acc *= base;
    if (acc > limit) return false;
  }
  return true;
}

double empirical_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::string_view to_string(KnotPlacement placement) noexcept {
  return placement == KnotPlacement::quantile ? "quantile" : "equispaced";
}

std::string_view to_string(BasisFamily family) noexcept {
  return family == BasisFamily::bspline ? "bspline" : "truncated_power";
}

KnotPlacement parse_knot_placement(std::string_view name) {
  if (name == "equispaced") return KnotPlacement::equispaced;
  if (name == "quantile") return KnotPlacement::quantile;
  fail(ErrorKind::config, "unknown knot placement '" + std::string(name) + "'");
}

BasisFamily parse_basis_family(std::string_view name) {
  if (name == "truncated_power") return BasisFamily::truncated_power;
  if (name == "bspline") return BasisFamily::bspline;
  fail(ErrorKind::config, "unknown basis family '" + std::string(name) + "'");
}

SplineBasis::SplineBasis(int degree, std::vector<double> knots, BasisFamily family,
                         KnotPlacement placement)
    : degree_(degree), knots_(std::move(knots)), family_(family), placement_(placement) {
  if (degree_ < 1) fail(ErrorKind::config, "spline degree must be >= 1");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!(knots_[i] > 0.0 && knots_[i] < 1.0))
      fail(ErrorKind::degenerate_knots, "interior knots must lie in (0, 1)");
    if (i > 0 && !(knots_[i] > knots_[i - 1]))
      fail(ErrorKind::degenerate_knots, "interior knots must be strictly increasing");
  }
}

double SplineBasis::quasi_uniform_ratio() const noexcept {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i <= knots_.size(); ++i) {
    const double next = i < knots_.size() ? knots_[i] : 1.0;
    lo = std::min(lo, next - prev);
    hi = std::max(hi, next - prev);
    prev = next;
  }
  return hi / lo;
}

void SplineBasis::evaluate(double t, std::span<double> out) const {
  if (!(t >= 0.0 && t <= 1.0))
    fail(ErrorKind::bounds, "basis evaluated at t=" + std::to_string(t) + " outside [0, 1]");
  if (family_ == BasisFamily::bspline) {
    evaluate_bspline(t, out);
    return;
  }
  double p = 1.0;
  for (int k = 0; k <= degree_; ++k) {
    out[k] = p;
    p *= t;
  }
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    const double x = t - knots_[i];
    out[degree_ + 1 + i] = x > 0.0 ? std::pow(x, degree_) : 0.0;
  }
}

Eigen::VectorXd SplineBasis::evaluate(double t) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
  evaluate(t, std::span<double>(v.data(), size()));
  return v;
}

Eigen::VectorXd SplineBasis::constant_coefficients() const {
  const auto m = static_cast<Eigen::Index>(size());
  if (family_ == BasisFamily::bspline) return Eigen::VectorXd::Ones(m);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
  c(0) = 1.0;
  return c;
}

Eigen::MatrixXd SplineBasis::design(std::span<const double> times) const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(size()));
  Eigen::VectorXd row(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    evaluate(times[i], std::span<double>(row.data(), size()));
    X.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return X;
}

void SplineBasis::evaluate_bspline(double t, std::span<double> out) const {
  const int p = degree_;
  const std::size_t n_basis = size();
  // Clamped knot vector: p+1 zeros, interior knots, p+1 ones.
  std::vector<double> u(n_basis + p + 1);
  for (int i = 0; i <= p; ++i) {
    u[i] = 0.0;
    u[u.size() - 1 - i] = 1.0;
  }
  std::copy(knots_.begin(), knots_.end(), u.begin() + p + 1);

  std::size_t span = n_basis - 1;
  if (t < 1.0) {
    span = static_cast<std::size_t>(std::upper_bound(u.begin(), u.end(), t) - u.begin()) - 1;
    span = std::clamp<std::size_t>(span, p, n_basis - 1);
  }

  std::vector<double> n(p + 1, 0.0), left(p + 1, 0.0), right(p + 1, 0.0);
  n[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - u[span + 1 - j];
    right[j] = u[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n_basis), 0.0);
  for (int j = 0; j <= p; ++j) out[span - p + j] = n[j];
}

std::size_t knot_count(std::size_t n_cells, int degree) {
  if (n_cells == 0) fail(ErrorKind::config, "knot_count requires N >= 1");
  if (degree < 1) fail(ErrorKind::config, "knot_count requires degree >= 1");
  const int exp = 2 * degree + 3;
  auto k = static_cast<std::size_t>(
      std::floor(std::pow(static_cast<double>(n_cells), 1.0 / exp)));
  while (k > 0 && !pow_at_most(k, exp, n_cells)) --k;
  while (pow_at_most(k + 1, exp, n_cells)) ++k;
  return k;
}

SplineBasis build_basis(int degree, std::size_t num_knots, KnotPlacement placement,
                        std::span<const double> times, BasisFamily family) {
  std::vector<double> knots(num_knots);
  const double denom = static_cast<double>(num_knots + 1);
  if (placement == KnotPlacement::equispaced) {
    for (std::size_t i = 0; i < num_knots; ++i) knots[i] = static_cast<double>(i + 1) / denom;
    return SplineBasis(degree, std::move(knots), family, placement);
  }

  if (times.empty() && num_knots > 0)
    fail(ErrorKind::degenerate_knots, "quantile knot placement needs a time sample");
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq = sorted;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < num_knots)
    fail(ErrorKind::degenerate_knots,
         "quantile placement needs at least " + std::to_string(num_knots) +
             " distinct times, got " + std::to_string(uniq.size()));

  for (std::size_t i = 0; i < num_knots; ++i) {
    const double q = empirical_quantile(sorted, static_cast<double>(i + 1) / denom);
    knots[i] = std::clamp(q, kKnotNudge, 1.0 - kKnotNudge);
  }
  for (std::size_t i = 1; i < num_knots; ++i)
    if (knots[i] <= knots[i - 1]) knots[i] = knots[i - 1] + kKnotNudge;
  // Push back from the right end if nudging overran 1.
  for (std::size_t i = num_knots; i-- > 0;) {
    const double cap = (i + 1 < num_knots ? knots[i + 1] : 1.0) - kKnotNudge;
    if (knots[i] > cap) knots[i] = cap;
  }
  return SplineBasis(degree, std::move(knots), family, placement);
}

}  // namespace dtrs
