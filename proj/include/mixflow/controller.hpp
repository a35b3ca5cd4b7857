#pragma once

#include <deque>

#include "mixflow/robust.hpp"

namespace mixflow {

enum class EstimatorKind { Zero, Constant, TimeVarying };
enum class ReformMethod { Vertex, Duality };

/// One realized sample pushed into the controller's ring buffers, in raw
/// physical coordinates; conversion to error coordinates happens at solve
/// time against the current equilibrium.
struct Measurement {
  Eigen::VectorXd u;        // applied accelerations, one per controlled CAV
  double v_pre = 0.0;       // velocity of the vehicle ahead of the scope
  Eigen::VectorXd v;        // velocities of the scope's vehicles
  Eigen::VectorXd spacing;  // CAV spacings
  double v_head = 0.0;      // head-vehicle velocity, for equilibrium tracking
};

struct EquilibriumInfo {
  double v_star = 15.0;
  double s_star = 20.0;
  double s_tilde_min = -15.0;
  double s_tilde_max = 20.0;
};

struct ControlDecision {
  Eigen::VectorXd u;             // applied input, first step of the horizon
  Eigen::VectorXd u_trajectory;  // full predicted input trajectory
  Eigen::VectorXd sigma_y;
  SolveStatus status = SolveStatus::NumericalLimit;
  bool fallback = false;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double modeling_seconds = 0.0;
  double solver_seconds = 0.0;
  double max_band_violation = 0.0;  // worst post-solve spacing residual over vertices
  DisturbanceBox box;               // horizon-length disturbance box used
  EquilibriumInfo eq;
};

struct ControllerLimits {
  double u_min = -5.0, u_max = 2.0;
  double s_min = 5.0, s_max = 40.0;
  OvmParams eq_params;  // desired-spacing law used for the CAV design spacing
};

struct ControllerSpec {
  int T_ini = 20;
  int N = 50;
  int T_s = 12;
  EstimatorKind estimator = EstimatorKind::TimeVarying;
  ReformMethod method = ReformMethod::Vertex;
  double w_s = 0.5;
  double r_u = 0.1;
  double lambda_g = 10.0;
  double lambda_y = 1e4;
  int delay_steps = 0;
  double dt = 0.05;
  SolverSettings solver;
};

/// Receding-horizon controller over one data-driven or model-based predictor.
/// Owns its ini buffers; one instance per CF-LCC subsystem (or one for the
/// whole string in the centralized setup).
class PredictiveController {
 public:
  /// Data-driven flavor: Hankel blocks from an offline dataset.
  static PredictiveController deep_lcc(const TrajectoryDataset& data, const ControllerSpec& spec,
                                       const ControllerLimits& limits);
  /// Model-based flavor: state-space rollout predictor.
  static PredictiveController mpc(const StateSpace& ss, const ControllerSpec& spec,
                                  const ControllerLimits& limits);

  void push(const Measurement& m);
  bool ready() const;

  /// One Algorithm-1 step: estimate the disturbance set from the buffered
  /// history, solve the robust program, return the first input. On solver
  /// failure the previous trajectory is shifted one step and flagged.
  ControlDecision step();

  /// Current equilibrium estimate from the buffered head-vehicle history.
  EquilibriumInfo equilibrium() const;
  /// Horizon-length disturbance box from the buffered history.
  DisturbanceBox estimate_box() const;

  const RobustQpCore& core() const { return *core_; }
  const std::deque<Measurement>& buffer() const { return buffer_; }
  const ControllerSpec& spec() const { return spec_; }
  int input_dim() const { return core_->input_dim; }

 private:
  PredictiveController(std::shared_ptr<const RobustQpCore> core, ControllerSpec spec,
                       ControllerLimits limits);

  struct IniData {
    Eigen::VectorXd u_ini, eps_ini, y_ini;
  };
  IniData build_ini(const EquilibriumInfo& eq) const;

  std::shared_ptr<const RobustQpCore> core_;
  ControllerSpec spec_;
  ControllerLimits limits_;
  DownsampleOperator downsample_;
  std::deque<Measurement> buffer_;
  Eigen::VectorXd prev_trajectory_;
  bool has_prev_ = false;
};

}  // namespace mixflow
