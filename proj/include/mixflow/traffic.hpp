#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

namespace mixflow {

/// Optimal velocity model parameters for one human-driven vehicle.
struct OvmParams {
  double alpha = 0.6;   // feedback gain on desired-velocity error, 1/s
  double beta = 0.9;    // feedback gain on relative velocity, 1/s
  double s_st = 5.0;    // standstill spacing, m
  double s_go = 35.0;   // free-flow spacing, m
  double v_max = 30.0;  // maximum desired velocity, m/s

  bool valid() const {
    return alpha > 0.0 && beta > 0.0 && v_max > 0.0 && 0.0 < s_st && s_st < s_go;
  }
};

/// Topology and physical limits of one mixed-traffic string: a head vehicle
/// (index 0) followed by n vehicles, q of which are CAVs. Vehicles between
/// CAV i and CAV i+1 form the follower set of subsystem i; vehicles ahead of
/// the first CAV belong to no subsystem and act as disturbance generators.
struct TrafficConfig {
  int n = 0;                        // following vehicles (head excluded)
  std::vector<int> cav_indices;     // 1-based, strictly increasing
  std::vector<OvmParams> hdv_params;  // one entry per vehicle 1..n (CAV slots ignored)
  double dt = 0.05;                 // sample period, s
  double u_min = -5.0, u_max = 2.0; // CAV acceleration bounds, m/s^2
  double s_min = 5.0, s_max = 40.0; // CAV spacing bounds, m

  int q() const { return static_cast<int>(cav_indices.size()); }
  bool is_cav(int vehicle) const;

  /// HDV count in subsystem i (vehicles between CAV i and CAV i+1).
  int m(int subsystem) const;
  /// Vehicles of subsystem i: the CAV followed by its m(i) HDVs.
  std::vector<int> subsystem_vehicles(int subsystem) const;
  /// 1-based index of the vehicle immediately ahead of subsystem i's CAV
  /// (0 means the head vehicle).
  int predecessor(int subsystem) const { return cav_indices.at(subsystem) - 1; }

  void validate() const;

  static TrafficConfig uniform(int n, std::vector<int> cavs, OvmParams p = {});
};

/// Positions and velocities for head vehicle and all followers.
struct TrafficState {
  Eigen::VectorXd position;   // size n+1, index 0 = head
  Eigen::VectorXd velocity;   // size n+1
  bool collided = false;      // some spacing reached zero during a step
  int collision_vehicle = -1; // first offending vehicle, 1-based

  double spacing(int vehicle) const { return position(vehicle - 1) - position(vehicle); }
  int n() const { return static_cast<int>(position.size()) - 1; }
};

/// Discrete-time linear model x+ = A x + B u + H eps, y = C x around an
/// equilibrium, in error coordinates.
struct StateSpace {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd H;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
  int output_dim() const { return static_cast<int>(C.rows()); }
};

enum class ModelScope { Global, Subsystem };

/// Desired velocity of the OVM: 0 below s_st, v_max above s_go, smooth
/// cosine ramp in between.
double ovm_desired_velocity(double spacing, const OvmParams& p);

/// Slope of the desired-velocity ramp.
double ovm_desired_velocity_gradient(double spacing, const OvmParams& p);

/// OVM acceleration alpha*(v_des(s) - v) + beta*s_dot.
double ovm_accel(double spacing, double velocity, double relative_velocity, const OvmParams& p);

/// Spacing s* with v_des(s*) = v_star, by bisection on [s_st, s_go].
/// Throws std::domain_error unless 0 < v_star < v_max.
double equilibrium_spacing(double v_star, const OvmParams& p);

/// Linearized forward-Euler model at cruising velocity v_star.
/// Global scope: state (s~_1, v~_1, ..., s~_n, v~_n), inputs = CAV
/// accelerations, outputs = all velocity errors then CAV spacing errors,
/// disturbance = head-vehicle velocity error.
/// Subsystem scope: vehicles of one CF-LCC subsystem, single input, outputs
/// = subsystem velocity errors then CAV spacing error, disturbance =
/// predecessor velocity error.
StateSpace linearize(const TrafficConfig& config, double v_star, ModelScope scope,
                     int subsystem = 0);

/// One nonlinear forward-Euler step. HDVs follow their OVM law plus the
/// supplied per-HDV acceleration noise; CAV accelerations are the given
/// inputs saturated to [u_min, u_max]; all velocities are clamped at zero.
/// head_velocity is the head vehicle's velocity at the end of the step.
/// A nonpositive spacing marks the returned state as collided.
TrafficState step_traffic(const TrafficState& state, const Eigen::VectorXd& cav_inputs,
                          double head_velocity, const TrafficConfig& config,
                          const Eigen::VectorXd& hdv_noise);

/// State with every vehicle at velocity v_star and its OVM equilibrium
/// spacing (CAVs use the same OVM equilibrium as the surrounding HDVs).
TrafficState equilibrium_state(const TrafficConfig& config, double v_star,
                               double head_position = 0.0);

/// Outputs y(0..T-1) of the linear model driven by inputs U (input_dim x T)
/// and disturbances E (1 x T) from initial state x0.
Eigen::MatrixXd lti_rollout(const StateSpace& ss, const Eigen::VectorXd& x0,
                            const Eigen::MatrixXd& U, const Eigen::MatrixXd& E);

}  // namespace mixflow
