#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mixflow {

/// Axis-aligned polytope of future preceding-vehicle velocity errors,
/// one [min, max] interval per horizon step (or per knot after
/// down-sampling). Implied halfspace form: col(I, -I) eps <= col(max, -min).
struct DisturbanceBox {
  Eigen::VectorXd eps_min;
  Eigen::VectorXd eps_max;

  int dim() const { return static_cast<int>(eps_min.size()); }
  bool degenerate(int i) const { return !(eps_min(i) < eps_max(i)); }
  /// Right-hand side col(eps_max, -eps_min) of the halfspace form.
  Eigen::VectorXd b_eps() const;
};

/// Linear interpolation from n_eps knot values back to all N horizon steps.
struct DownsampleOperator {
  Eigen::MatrixXd E;        // N x n_eps
  int T_s = 1;              // sampling stride
  std::vector<int> knots;   // 0-based horizon indices of the knots

  int N() const { return static_cast<int>(E.rows()); }
  int n_eps() const { return static_cast<int>(E.cols()); }
};

/// Degenerate box pinned at zero: the non-robust baseline.
DisturbanceBox estimate_zero(int N);

/// Constant-velocity assumption: current error plus the spread of the past
/// window, replicated across the horizon. Requires at least 2 samples.
DisturbanceBox estimate_constant(const Eigen::VectorXd& eps_ini, int N);

/// Constant-acceleration assumption: forward-difference accelerations of the
/// past window give a current slope and its spread; the bounds grow linearly
/// with the step index. Requires at least 3 samples.
DisturbanceBox estimate_timevarying(const Eigen::VectorXd& eps_ini, int N, double dt);

/// Interpolation operator with n_eps = floor((N-2)/T_s) + 2 knots.
/// Requires 1 <= T_s <= N-2.
DownsampleOperator build_downsample(int N, int T_s);

/// Bounds sampled at the knot indices.
DisturbanceBox downsample_box(const DisturbanceBox& box, const DownsampleOperator& op);

/// All 2^d extreme points (d = nondegenerate coordinate count), one per
/// column; degenerate coordinates stay pinned. Guards against dim > 20.
Eigen::MatrixXd enumerate_vertices(const DisturbanceBox& box);

}  // namespace mixflow
