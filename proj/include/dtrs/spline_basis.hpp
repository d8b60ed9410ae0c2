#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dtrs {

enum class KnotPlacement { equispaced, quantile };
enum class BasisFamily { truncated_power, bspline };

std::string_view to_string(KnotPlacement placement) noexcept;
std::string_view to_string(BasisFamily family) noexcept;
KnotPlacement parse_knot_placement(std::string_view name);
BasisFamily parse_basis_family(std::string_view name);

// Spline basis of degree kappa on [0, 1] with interior knots
// 0 < nu_1 < ... < nu_a < 1. Size M = a + kappa + 1.
//
// The truncated power family is (1, t, ..., t^kappa, (t - nu_1)_+^kappa, ...);
// the B-spline family spans the same space with a clamped knot vector and is
// better conditioned for many knots.
class SplineBasis {
 public:
  SplineBasis(int degree, std::vector<double> knots,
              BasisFamily family = BasisFamily::truncated_power,
              KnotPlacement placement = KnotPlacement::equispaced);

  int degree() const noexcept { return degree_; }
  std::span<const double> knots() const noexcept { return knots_; }
  std::size_t size() const noexcept { return knots_.size() + degree_ + 1; }
  BasisFamily family() const noexcept { return family_; }
  KnotPlacement placement() const noexcept { return placement_; }

  // Largest over smallest gap of 0, nu_1, ..., nu_a, 1.
  double quasi_uniform_ratio() const noexcept;

  // Writes the M basis values at t into out. Throws bounds error outside [0, 1].
  void evaluate(double t, std::span<double> out) const;
  Eigen::VectorXd evaluate(double t) const;

  // Coefficients c with c^T B(t) = 1 for every t.
  Eigen::VectorXd constant_coefficients() const;

  // Rows are basis vectors at each t.
  Eigen::MatrixXd design(std::span<const double> times) const;

 private:
  void evaluate_bspline(double t, std::span<double> out) const;

  int degree_;
  std::vector<double> knots_;
  BasisFamily family_;
  KnotPlacement placement_;
};

// floor(N^(1 / (2 kappa + 3))), computed exactly in integers.
std::size_t knot_count(std::size_t n_cells, int degree);

// Equispaced knots sit at i / (a + 1). Quantile knots sit at the i / (a + 1)
// empirical quantiles of `times`; collisions are nudged apart by 1e-9.
SplineBasis build_basis(int degree, std::size_t num_knots, KnotPlacement placement,
                        std::span<const double> times = {},
                        BasisFamily family = BasisFamily::truncated_power);

}  // namespace dtrs
