#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

#include "mixflow/traffic.hpp"

namespace mixflow {

/// Seeded generator with a platform-stable uniform mapping, so identical
/// seeds give identical trajectories everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform draw in [lo, hi) from the top 53 bits of the generator.
  double uniform(double lo, double hi) {
    const double u01 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u01;
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

/// Offline input/disturbance/output record of length T. Columns are samples.
struct TrajectoryDataset {
  Eigen::MatrixXd u;    // input_dim x T
  Eigen::MatrixXd eps;  // 1 x T
  Eigen::MatrixXd y;    // output_dim x T

  int T() const { return static_cast<int>(u.cols()); }
  int input_dim() const { return static_cast<int>(u.rows()); }
  int output_dim() const { return static_cast<int>(y.rows()); }
  void validate() const;
};

/// Hankel matrices of the offline data split into past (T_ini block rows)
/// and future (N block rows).
struct HankelBlocks {
  Eigen::MatrixXd U_P, U_F;
  Eigen::MatrixXd E_P, E_F;
  Eigen::MatrixXd Y_P, Y_F;
  int T_ini = 0;
  int N = 0;

  int cols() const { return static_cast<int>(U_P.cols()); }
  int input_dim() const { return static_cast<int>(U_P.rows()) / T_ini; }
  int output_dim() const { return static_cast<int>(Y_P.rows()) / T_ini; }
};

/// Block Hankel matrix of depth L: block (i,j) equals signal sample i+j
/// (0-based); dimensions (L*dim) x (T-L+1). Throws if L >= T.
Eigen::MatrixXd build_hankel(const Eigen::MatrixXd& signal, int depth);

struct PeReport {
  bool pass = false;
  int order = 0;
  int required_rank = 0;
  int numerical_rank = 0;
  double sigma_max = 0.0;
  double sigma_cut = 0.0;  // smallest singular value that must stay above tolerance

  int deficit() const { return required_rank - numerical_rank; }
};

/// Full-row-rank test of the depth-L Hankel matrix, judged by singular
/// values above rel_tol * sigma_max.
PeReport check_persistent_excitation(const Eigen::MatrixXd& signal, int order,
                                     double rel_tol = 1e-8);

/// Past/future Hankel partition with L = T_ini + N. Requires T >= T_ini+N+1.
HankelBlocks partition_hankel(const TrajectoryDataset& data, int T_ini, int N);

/// Minimum offline data length making the persistent-excitation Hankel
/// square: (q+2)(L+2n)-1 centralized, 3(L+2(m+1))-1 per subsystem.
int min_data_length(ModelScope scope, int T_ini, int N, int n_or_m, int q);

struct CollectionResult {
  TrajectoryDataset data;
  PeReport pe;
  double v_star = 0.0;
};

/// Simulates the nonlinear system around v_star and records T samples after
/// a warm-up. CAVs run their OVM feedback plus U[-1,1] m/s^2 noise; the
/// vehicle ahead of the collected scope wanders with U[-1,1] m/s velocity
/// error. The persistent-excitation check of col(u, eps) at order
/// T_ini+N+2*(state dim) is advisory and reported, never fatal.
CollectionResult collect_offline_data(const TrafficConfig& config, ModelScope scope,
                                      int subsystem, int T, std::uint64_t seed,
                                      double v_star = 15.0, int T_ini = 20, int N = 50,
                                      int warmup = 100, double u_noise = 1.0,
                                      double eps_noise = 1.0);

/// Columnar CSV: header naming u_*, eps, y_* channels, one sample per row,
/// '#' comment footer carrying the PE report.
void save_dataset_csv(const TrajectoryDataset& data, const PeReport* pe, const std::string& path);
TrajectoryDataset load_dataset_csv(const std::string& path);

}  // namespace mixflow
