#pragma once

#include <Eigen/Dense>

#include <memory>

#include "mixflow/conic.hpp"
#include "mixflow/data.hpp"
#include "mixflow/disturbance.hpp"

namespace mixflow {

/// Cost weights of the local predictive-control problem.
struct ControllerWeights {
  Eigen::MatrixXd Q;  // output weight, PSD, (N * output_dim) square
  Eigen::MatrixXd R;  // input weight, PD, (N * input_dim) square
  double lambda_g = 10.0;
  double lambda_y = 1e4;

  void validate() const;

  /// Diagonal pattern used throughout the experiments: unit velocity-error
  /// weights, w_s on each spacing channel, r_u on every input channel.
  static ControllerWeights diagonal(int N, int output_dim, int spacing_channels,
                                    int input_dim, double w_s = 0.5, double r_u = 0.1,
                                    double lambda_g = 10.0, double lambda_y = 1e4);
};

struct RobustBounds {
  double s_tilde_min = -15.0;
  double s_tilde_max = 20.0;
  double u_min = -5.0;
  double u_max = 2.0;
};

struct QpLayout {
  int n_u = 0;      // stacked future inputs
  int n_sigma = 0;  // output slack over the past window
  int n_eps = 0;    // down-sampled disturbance knots
  int dim() const { return n_u + n_sigma + n_eps; }
  int u_offset() const { return 0; }
  int sigma_offset() const { return n_u; }
  int eps_offset() const { return n_u + n_sigma; }
};

/// Least-norm data-driven predictor: pseudo-inverse of the stacked Hankel
/// data matrix col(U_P, E_P, Y_P, U_F, E_F).
struct HankelPredictor {
  Eigen::MatrixXd Hdag;     // cols x rows of the stacked matrix
  Eigen::MatrixXd YF_Hdag;  // future-output map
  int rows = 0;             // stacked row count
  int rank = 0;             // numerical rank of the stacked matrix
  bool full_row_rank() const { return rank == rows; }
  int rank_defect() const { return rows - rank; }
};

HankelPredictor pseudo_inverse_predictor(const HankelBlocks& blocks, double rel_tol = 1e-10);

/// I - Hdag H, the nullspace projector of the stacked data matrix.
Eigen::MatrixXd hankel_nullspace_projector(const HankelBlocks& blocks, double rel_tol = 1e-10);

/// Gamma with Gamma' Gamma = M for positive semidefinite M; rows equal the
/// numerical rank. Throws if M has an eigenvalue below -1e-6 * |M|.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& M);

enum class PredictorKind { Hankel, StateSpace };

/// Step-invariant part of the robust quadratic program: everything that
/// depends only on the offline data (or model), weights and interpolation
/// operator.
struct RobustQpCore {
  PredictorKind kind = PredictorKind::Hankel;
  QpLayout layout;
  int T_ini = 0, N = 0;
  int input_dim = 1, output_dim = 0, spacing_channels = 1;

  Eigen::MatrixXd M;      // symmetrized quadratic form over x = (u, sigma, eps~)
  Eigen::MatrixXd Gamma;  // psd_factor(M)
  Eigen::MatrixXd P1;     // spacing map, (N * spacing_channels) x dim
  Eigen::MatrixXd P2;     // input selector, n_u x dim
  Eigen::MatrixXd E_eps;

  // Retained internals (testing and per-step instantiation).
  Eigen::MatrixXd F1, F2, F3;
  Eigen::MatrixXd S1, S2;
  Eigen::MatrixXd Hdag, YF_Hdag;
  Eigen::MatrixXd d_map;   // d = d_map * b_ini
  Eigen::MatrixXd Ssum;    // b_ini' Ssum b_ini gives the constant term
  Eigen::MatrixXd c1_map;  // c1 = c1_map * b_ini
  int b_dim = 0;           // length of the stacked right-hand side b_ini
  int predictor_rank_defect = 0;

  // Shared conic blocks reused across control steps.
  std::shared_ptr<const Eigen::MatrixXd> spacing_block;  // [0 P1_d; 0 -P1_d]
  std::shared_ptr<const Eigen::MatrixXd> input_block;    // [0 I 0; 0 -I 0]
};

std::shared_ptr<const RobustQpCore> build_robust_qp_core(const HankelBlocks& blocks,
                                                         const ControllerWeights& weights,
                                                         const Eigen::MatrixXd& E_eps,
                                                         int spacing_channels = 1);

/// Model-based counterpart sharing the same downstream machinery: the
/// predictor is the state-space rollout, the state is fitted from the past
/// window by least squares, and there is no slack block.
std::shared_ptr<const RobustQpCore> build_mpc_qp_core(const StateSpace& ss, int T_ini, int N,
                                                      const ControllerWeights& weights,
                                                      const Eigen::MatrixXd& E_eps,
                                                      int spacing_channels = 1);

/// The robust quadratic program of one control step: min-max of
/// x'Mx + d'x + c0 subject to the spacing band and input bounds.
struct RobustQP {
  std::shared_ptr<const RobustQpCore> core;
  Eigen::VectorXd d;
  double c0 = 0.0;
  Eigen::VectorXd c1;
  Eigen::VectorXd b_ini;
  RobustBounds bounds;

  const QpLayout& layout() const { return core->layout; }
  const Eigen::MatrixXd& M() const { return core->M; }
  const Eigen::MatrixXd& P1() const { return core->P1; }
  const Eigen::MatrixXd& P2() const { return core->P2; }
};

RobustQP make_robust_qp(std::shared_ptr<const RobustQpCore> core, const Eigen::VectorXd& u_ini,
                        const Eigen::VectorXd& eps_ini, const Eigen::VectorXd& y_ini,
                        const RobustBounds& bounds);

/// One-shot construction from the Hankel blocks.
RobustQP build_robust_qp(const HankelBlocks& blocks, const Eigen::VectorXd& u_ini,
                         const Eigen::VectorXd& eps_ini, const Eigen::VectorXd& y_ini,
                         const ControllerWeights& weights, const Eigen::MatrixXd& E_eps,
                         const RobustBounds& bounds, int spacing_channels = 1);

/// Vertex-based reformulation: the epigraph and spacing constraints are
/// replicated at every extreme point of the disturbance box.
struct VertexProgram {
  RobustQP qp;
  Eigen::MatrixXd vertices;  // n_eps x n_v

  int n_vertices() const { return static_cast<int>(vertices.cols()); }
  int decision_dim() const { return 1 + qp.layout().n_u + qp.layout().n_sigma; }
  long constraint_count() const;
};

VertexProgram vertex_reformulate(const RobustQP& qp, const Eigen::MatrixXd& vertices);

/// Duality-based reformulation: the per-step worst-case spacing programs are
/// replaced by their LP duals over the halfspace form of the box.
struct DualProgram {
  RobustQP qp;
  DisturbanceBox box;        // low-dimensional box (halfspace data)
  Eigen::MatrixXd vertices;  // still needed for the epigraph constraints

  int n_vertices() const { return static_cast<int>(vertices.cols()); }
  int spacing_rows() const { return static_cast<int>(qp.core->P1.rows()); }
  int decision_dim() const {
    return 1 + qp.layout().n_u + qp.layout().n_sigma + 4 * spacing_rows() * qp.layout().n_eps;
  }
  long constraint_count() const;
};

DualProgram duality_reformulate(const RobustQP& qp, const DisturbanceBox& box);

ConicProgram to_conic(const VertexProgram& program);
ConicProgram to_conic(const DualProgram& program);

/// Solution of either reformulation, mapped back to the control variables.
struct RobustSolveResult {
  SolveStatus status = SolveStatus::NumericalLimit;
  double objective = std::numeric_limits<double>::quiet_NaN();  // t* + c0
  Eigen::VectorXd u;
  Eigen::VectorXd sigma_y;
  ConicSolution conic;
};

/// Maps a conic solution back to control variables and polishes the smooth
/// case (unique binding vertex, inactive constraints) through one verified
/// Newton solve.
RobustSolveResult finalize_solution(const RobustQP& qp, const Eigen::MatrixXd& vertices,
                                    ConicSolution&& sol);

RobustSolveResult solve_vertex_program(const VertexProgram& program,
                                       const SolverSettings& settings = {});
RobustSolveResult solve_dual_program(const DualProgram& program,
                                     const SolverSettings& settings = {});

}  // namespace mixflow
