#include "mixflow/disturbance.hpp"

#include <stdexcept>
#include <string>

namespace mixflow {

Eigen::VectorXd DisturbanceBox::b_eps() const {
  Eigen::VectorXd b(2 * dim());
  b << eps_max, -eps_min;
  return b;
}

DisturbanceBox estimate_zero(int N) {
  if (N < 1) throw std::invalid_argument("estimate_zero: N must be positive");
  DisturbanceBox box;
  box.eps_min = Eigen::VectorXd::Zero(N);
  box.eps_max = Eigen::VectorXd::Zero(N);
  return box;
}

DisturbanceBox estimate_constant(const Eigen::VectorXd& eps_ini, int N) {
  if (eps_ini.size() < 2) throw std::invalid_argument("estimate_constant: need at least 2 samples");
  if (N < 1) throw std::invalid_argument("estimate_constant: N must be positive");
  const double cur = eps_ini(eps_ini.size() - 1);
  const double mean = eps_ini.mean();
  const double d_low = eps_ini.minCoeff() - mean;
  const double d_up = eps_ini.maxCoeff() - mean;
  DisturbanceBox box;
  box.eps_min = Eigen::VectorXd::Constant(N, cur + d_low);
  box.eps_max = Eigen::VectorXd::Constant(N, cur + d_up);
  return box;
}

DisturbanceBox estimate_timevarying(const Eigen::VectorXd& eps_ini, int N, double dt) {
  if (eps_ini.size() < 3) throw std::invalid_argument("estimate_timevarying: need at least 3 samples");
  if (N < 1 || dt <= 0.0) throw std::invalid_argument("estimate_timevarying: bad arguments");
  const int na = static_cast<int>(eps_ini.size()) - 1;
  Eigen::VectorXd accel(na);
  for (int k = 0; k < na; ++k) accel(k) = (eps_ini(k + 1) - eps_ini(k)) / dt;
  const double a_cur = accel(na - 1);
  const double mean = accel.mean();
  const double da_low = accel.minCoeff() - mean;
  const double da_up = accel.maxCoeff() - mean;
  const double cur = eps_ini(eps_ini.size() - 1);
  DisturbanceBox box;
  box.eps_min.resize(N);
  box.eps_max.resize(N);
  for (int k = 1; k <= N; ++k) {
    box.eps_min(k - 1) = cur + (a_cur + da_low) * k * dt;
    box.eps_max(k - 1) = cur + (a_cur + da_up) * k * dt;
  }
  return box;
}

DownsampleOperator build_downsample(int N, int T_s) {
  if (N < 3) throw std::invalid_argument("build_downsample: N must be at least 3");
  if (T_s < 1 || T_s > N - 2) throw std::domain_error("build_downsample: need 1 <= T_s <= N-2");
  const int k_last = (N - 2) / T_s;  // index of the last regular knot
  const int n_eps = k_last + 2;

  DownsampleOperator op;
  op.T_s = T_s;
  op.E = Eigen::MatrixXd::Zero(N, n_eps);
  for (int j = 0; j <= k_last; ++j) op.knots.push_back(j * T_s);
  op.knots.push_back(N - 1);

  for (int k = 1; k <= N; ++k) {  // 1-based horizon step
    if (k <= k_last * T_s) {
      const int kb = (k - 1) / T_s;
      const double w = static_cast<double>((k - 1) % T_s) / T_s;
      op.E(k - 1, kb) = 1.0 - w;
      op.E(k - 1, kb + 1) += w;
    } else {
      const double w = static_cast<double>(k - k_last * T_s - 1) / (N - k_last * T_s - 1);
      op.E(k - 1, k_last) = 1.0 - w;
      op.E(k - 1, k_last + 1) += w;
    }
  }
  return op;
}

DisturbanceBox downsample_box(const DisturbanceBox& box, const DownsampleOperator& op) {
  if (box.dim() != op.N()) throw std::invalid_argument("downsample_box: dimension mismatch");
  DisturbanceBox out;
  out.eps_min.resize(op.n_eps());
  out.eps_max.resize(op.n_eps());
  for (int j = 0; j < op.n_eps(); ++j) {
    out.eps_min(j) = box.eps_min(op.knots[j]);
    out.eps_max(j) = box.eps_max(op.knots[j]);
  }
  return out;
}

Eigen::MatrixXd enumerate_vertices(const DisturbanceBox& box) {
  const int d = box.dim();
  std::vector<int> free_coords;
  for (int i = 0; i < d; ++i)
    if (!box.degenerate(i)) free_coords.push_back(i);
  const int nf = static_cast<int>(free_coords.size());
  if (nf > 20)
    throw std::length_error(
        "enumerate_vertices: " + std::to_string(nf) +
        " nondegenerate coordinates exceed the 2^20 vertex guard; increase the "
        "down-sampling stride T_s");
  const long n_v = 1L << nf;

  Eigen::MatrixXd V(d, n_v);
  V.colwise() = box.eps_min;
  for (long j = 0; j < n_v; ++j)
    for (int b = 0; b < nf; ++b)
      if ((j >> b) & 1) V(free_coords[b], j) = box.eps_max(free_coords[b]);
  return V;
}

}  // namespace mixflow
