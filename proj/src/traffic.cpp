#include "mixflow/traffic.hpp"

#include <algorithm>
#include <cmath>

namespace mixflow {

bool TrafficConfig::is_cav(int vehicle) const {
  return std::find(cav_indices.begin(), cav_indices.end(), vehicle) != cav_indices.end();
}

int TrafficConfig::m(int subsystem) const {
  const int next = (subsystem + 1 < q()) ? cav_indices[subsystem + 1] : n + 1;
  return next - cav_indices[subsystem] - 1;
}

std::vector<int> TrafficConfig::subsystem_vehicles(int subsystem) const {
  std::vector<int> out;
  const int l = cav_indices.at(subsystem);
  for (int v = l; v <= l + m(subsystem); ++v) out.push_back(v);
  return out;
}

void TrafficConfig::validate() const {
  if (n < 1) throw std::invalid_argument("TrafficConfig: need at least one vehicle");
  if (cav_indices.empty()) throw std::invalid_argument("TrafficConfig: no CAVs");
  int prev = 0;
  for (int l : cav_indices) {
    if (l <= prev || l > n) throw std::invalid_argument("TrafficConfig: CAV indices must be strictly increasing in [1, n]");
    prev = l;
  }
  if (static_cast<int>(hdv_params.size()) != n)
    throw std::invalid_argument("TrafficConfig: hdv_params must have one entry per vehicle");
  for (int v = 1; v <= n; ++v) {
    if (!is_cav(v) && !hdv_params[v - 1].valid())
      throw std::invalid_argument("TrafficConfig: invalid OVM parameters");
  }
  if (dt <= 0.0) throw std::invalid_argument("TrafficConfig: dt must be positive");
  if (u_min >= u_max || s_min >= s_max) throw std::invalid_argument("TrafficConfig: empty bound interval");
}

TrafficConfig TrafficConfig::uniform(int n, std::vector<int> cavs, OvmParams p) {
  TrafficConfig c;
  c.n = n;
  c.cav_indices = std::move(cavs);
  c.hdv_params.assign(n, p);
  c.validate();
  return c;
}

double ovm_desired_velocity(double s, const OvmParams& p) {
  if (s <= p.s_st) return 0.0;
  if (s >= p.s_go) return p.v_max;
  return 0.5 * p.v_max * (1.0 - std::cos(M_PI * (s - p.s_st) / (p.s_go - p.s_st)));
}

double ovm_desired_velocity_gradient(double s, const OvmParams& p) {
  if (s <= p.s_st || s >= p.s_go) return 0.0;
  return 0.5 * p.v_max * M_PI / (p.s_go - p.s_st) * std::sin(M_PI * (s - p.s_st) / (p.s_go - p.s_st));
}

double ovm_accel(double s, double v, double s_dot, const OvmParams& p) {
  return p.alpha * (ovm_desired_velocity(s, p) - v) + p.beta * s_dot;
}

double equilibrium_spacing(double v_star, const OvmParams& p) {
  if (!(v_star > 0.0 && v_star < p.v_max))
    throw std::domain_error("equilibrium_spacing: v_star must lie in (0, v_max)");
  double lo = p.s_st, hi = p.s_go;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ovm_desired_velocity(mid, p) < v_star)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

// Continuous-time error dynamics of one vehicle chain, discretized with
// forward Euler. "vehicles" lists 1-based indices in leading order; the
// disturbance is the velocity error of the vehicle ahead of vehicles[0].
StateSpace linearize_chain(const TrafficConfig& config, double v_star,
                           const std::vector<int>& vehicles, const std::vector<int>& spacing_outputs) {
  const int m = static_cast<int>(vehicles.size());
  const int nx = 2 * m;
  Eigen::MatrixXd Ac = Eigen::MatrixXd::Zero(nx, nx);
  Eigen::MatrixXd Hc = Eigen::MatrixXd::Zero(nx, 1);

  std::vector<int> cav_slots;
  for (int j = 0; j < m; ++j) {
    const int veh = vehicles[j];
    const int rs = 2 * j;      // spacing-error row
    const int rv = 2 * j + 1;  // velocity-error row
    // d s~_j/dt = v~_{j-1} - v~_j
    Ac(rs, rv) = -1.0;
    if (j == 0)
      Hc(rs, 0) = 1.0;
    else
      Ac(rs, 2 * (j - 1) + 1) = 1.0;
    if (config.is_cav(veh)) {
      cav_slots.push_back(j);  // v~ row driven by the input
    } else {
      const OvmParams& p = config.hdv_params[veh - 1];
      const double s_star = equilibrium_spacing(v_star, p);
      const double a1 = p.alpha * ovm_desired_velocity_gradient(s_star, p);
      const double a2 = p.alpha + p.beta;
      const double a3 = p.beta;
      Ac(rv, rs) = a1;
      Ac(rv, rv) = -a2;
      if (j == 0)
        Hc(rv, 0) = a3;
      else
        Ac(rv, 2 * (j - 1) + 1) = a3;
    }
  }

  Eigen::MatrixXd Bc = Eigen::MatrixXd::Zero(nx, static_cast<int>(cav_slots.size()));
  for (int k = 0; k < static_cast<int>(cav_slots.size()); ++k)
    Bc(2 * cav_slots[k] + 1, k) = 1.0;

  StateSpace ss;
  const double dt = config.dt;
  ss.A = Eigen::MatrixXd::Identity(nx, nx) + dt * Ac;
  ss.B = dt * Bc;
  ss.H = dt * Hc;

  // Outputs: all velocity errors, then the requested spacing errors.
  ss.C = Eigen::MatrixXd::Zero(m + static_cast<int>(spacing_outputs.size()), nx);
  for (int j = 0; j < m; ++j) ss.C(j, 2 * j + 1) = 1.0;
  for (int k = 0; k < static_cast<int>(spacing_outputs.size()); ++k)
    ss.C(m + k, 2 * spacing_outputs[k]) = 1.0;
  return ss;
}

}  // namespace

StateSpace linearize(const TrafficConfig& config, double v_star, ModelScope scope, int subsystem) {
  config.validate();
  if (scope == ModelScope::Global) {
    std::vector<int> vehicles(config.n);
    for (int v = 1; v <= config.n; ++v) vehicles[v - 1] = v;
    std::vector<int> spacing_slots;
    for (int l : config.cav_indices) spacing_slots.push_back(l - 1);
    return linearize_chain(config, v_star, vehicles, spacing_slots);
  }
  if (subsystem < 0 || subsystem >= config.q())
    throw std::invalid_argument("linearize: subsystem index out of range");
  return linearize_chain(config, v_star, config.subsystem_vehicles(subsystem), {0});
}

TrafficState step_traffic(const TrafficState& state, const Eigen::VectorXd& cav_inputs,
                          double head_velocity, const TrafficConfig& config,
                          const Eigen::VectorXd& hdv_noise) {
  const int n = config.n;
  if (state.n() != n) throw std::invalid_argument("step_traffic: state size mismatch");
  if (cav_inputs.size() != config.q()) throw std::invalid_argument("step_traffic: cav_inputs size mismatch");
  if (hdv_noise.size() != n - config.q()) throw std::invalid_argument("step_traffic: hdv_noise size mismatch");

  const double dt = config.dt;
  TrafficState next = state;
  next.collided = false;
  next.collision_vehicle = -1;

  // Positions advance with current velocities.
  next.position = state.position + dt * state.velocity;

  next.velocity(0) = std::max(0.0, head_velocity);
  int cav_slot = 0, hdv_slot = 0;
  for (int v = 1; v <= n; ++v) {
    double a;
    if (config.is_cav(v)) {
      a = std::clamp(cav_inputs(cav_slot++), config.u_min, config.u_max);
    } else {
      const double s = state.spacing(v);
      const double s_dot = state.velocity(v - 1) - state.velocity(v);
      a = ovm_accel(s, state.velocity(v), s_dot, config.hdv_params[v - 1]) + hdv_noise(hdv_slot++);
    }
    next.velocity(v) = std::max(0.0, state.velocity(v) + dt * a);
  }

  for (int v = 1; v <= n; ++v) {
    if (next.spacing(v) <= 0.0) {
      next.collided = true;
      next.collision_vehicle = v;
      break;
    }
  }
  return next;
}

TrafficState equilibrium_state(const TrafficConfig& config, double v_star, double head_position) {
  config.validate();
  TrafficState st;
  st.position.resize(config.n + 1);
  st.velocity = Eigen::VectorXd::Constant(config.n + 1, v_star);
  st.position(0) = head_position;
  const OvmParams fallback;
  for (int v = 1; v <= config.n; ++v) {
    const OvmParams& p = config.hdv_params[v - 1].valid() ? config.hdv_params[v - 1] : fallback;
    st.position(v) = st.position(v - 1) - equilibrium_spacing(v_star, p);
  }
  return st;
}

Eigen::MatrixXd lti_rollout(const StateSpace& ss, const Eigen::VectorXd& x0,
                            const Eigen::MatrixXd& U, const Eigen::MatrixXd& E) {
  const int T = static_cast<int>(U.cols());
  if (E.cols() != T) throw std::invalid_argument("lti_rollout: input/disturbance length mismatch");
  Eigen::MatrixXd Y(ss.output_dim(), T);
  Eigen::VectorXd x = x0;
  for (int k = 0; k < T; ++k) {
    Y.col(k) = ss.C * x;
    x = ss.A * x + ss.B * U.col(k) + ss.H * E.col(k);
  }
  return Y;
}

}  // namespace mixflow
