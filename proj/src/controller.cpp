#include "mixflow/controller.hpp"

#include <chrono>

namespace mixflow {

using Eigen::VectorXd;

PredictiveController::PredictiveController(std::shared_ptr<const RobustQpCore> core,
                                           ControllerSpec spec, ControllerLimits limits)
    : core_(std::move(core)), spec_(std::move(spec)), limits_(limits) {
  downsample_ = build_downsample(spec_.N, spec_.T_s);
  if (downsample_.n_eps() != core_->layout.n_eps)
    throw std::invalid_argument("PredictiveController: interpolation dimension mismatch");
}

PredictiveController PredictiveController::deep_lcc(const TrajectoryDataset& data,
                                                    const ControllerSpec& spec,
                                                    const ControllerLimits& limits) {
  auto blocks = partition_hankel(data, spec.T_ini, spec.N);
  const int p = data.output_dim();
  const int nu = data.input_dim();
  // Output layout is (velocities..., spacings...); there is one spacing
  // channel per controlled CAV in both scopes.
  ControllerWeights w = ControllerWeights::diagonal(spec.N, p, nu, nu, spec.w_s, spec.r_u,
                                                    spec.lambda_g, spec.lambda_y);
  auto op = build_downsample(spec.N, spec.T_s);
  auto core = build_robust_qp_core(blocks, w, op.E, nu);
  return PredictiveController(std::move(core), spec, limits);
}

PredictiveController PredictiveController::mpc(const StateSpace& ss, const ControllerSpec& spec,
                                               const ControllerLimits& limits) {
  const int nu = ss.input_dim();
  ControllerWeights w = ControllerWeights::diagonal(spec.N, ss.output_dim(), nu, nu, spec.w_s,
                                                    spec.r_u, spec.lambda_g, spec.lambda_y);
  auto op = build_downsample(spec.N, spec.T_s);
  auto core = build_mpc_qp_core(ss, spec.T_ini, spec.N, w, op.E, nu);
  return PredictiveController(std::move(core), spec, limits);
}

void PredictiveController::push(const Measurement& m) {
  if (m.u.size() != core_->input_dim ||
      m.v.size() != core_->output_dim - core_->spacing_channels ||
      m.spacing.size() != core_->spacing_channels)
    throw std::invalid_argument("PredictiveController::push: measurement dimension mismatch");
  buffer_.push_back(m);
  const std::size_t cap = static_cast<std::size_t>(spec_.T_ini + spec_.delay_steps);
  while (buffer_.size() > cap) buffer_.pop_front();
}

bool PredictiveController::ready() const {
  return buffer_.size() == static_cast<std::size_t>(spec_.T_ini + spec_.delay_steps);
}

EquilibriumInfo PredictiveController::equilibrium() const {
  if (buffer_.empty()) return {};
  double sum = 0.0;
  int count = 0;
  const int skip = static_cast<int>(buffer_.size()) - spec_.T_ini;
  for (std::size_t i = std::max(0, skip); i < buffer_.size(); ++i) {
    sum += buffer_[i].v_head;
    ++count;
  }
  EquilibriumInfo eq;
  const double lo = 0.5, hi = limits_.eq_params.v_max - 0.5;
  eq.v_star = std::clamp(sum / count, lo, hi);
  eq.s_star = equilibrium_spacing(eq.v_star, limits_.eq_params);
  eq.s_tilde_min = limits_.s_min - eq.s_star;
  eq.s_tilde_max = limits_.s_max - eq.s_star;
  return eq;
}

PredictiveController::IniData PredictiveController::build_ini(const EquilibriumInfo& eq) const {
  const int T_ini = spec_.T_ini;
  const int nu = core_->input_dim;
  const int p = core_->output_dim;
  const int nv = p - core_->spacing_channels;
  IniData ini;
  ini.u_ini.resize(T_ini * nu);
  ini.eps_ini.resize(T_ini);
  ini.y_ini.resize(T_ini * p);
  // Buffer layout, oldest first: the first T_ini samples form the delayed
  // disturbance window, the last T_ini samples the input/output window.
  const int last = static_cast<int>(buffer_.size()) - T_ini;
  for (int k = 0; k < T_ini; ++k) {
    const Measurement& m = buffer_[last + k];
    ini.u_ini.segment(k * nu, nu) = m.u;
    for (int i = 0; i < nv; ++i) ini.y_ini(k * p + i) = m.v(i) - eq.v_star;
    for (int i = 0; i < core_->spacing_channels; ++i)
      ini.y_ini(k * p + nv + i) = m.spacing(i) - eq.s_star;
    ini.eps_ini(k) = buffer_[k].v_pre - eq.v_star;
  }
  return ini;
}

DisturbanceBox PredictiveController::estimate_box() const {
  const EquilibriumInfo eq = equilibrium();
  const IniData ini = build_ini(eq);
  switch (spec_.estimator) {
    case EstimatorKind::Zero: return estimate_zero(spec_.N);
    case EstimatorKind::Constant: return estimate_constant(ini.eps_ini, spec_.N);
    case EstimatorKind::TimeVarying: return estimate_timevarying(ini.eps_ini, spec_.N, spec_.dt);
  }
  return estimate_zero(spec_.N);
}

ControlDecision PredictiveController::step() {
  if (!ready()) throw std::logic_error("PredictiveController::step: buffers not full");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  ControlDecision dec;
  dec.eq = equilibrium();
  const IniData ini = build_ini(dec.eq);

  switch (spec_.estimator) {
    case EstimatorKind::Zero: dec.box = estimate_zero(spec_.N); break;
    case EstimatorKind::Constant: dec.box = estimate_constant(ini.eps_ini, spec_.N); break;
    case EstimatorKind::TimeVarying:
      dec.box = estimate_timevarying(ini.eps_ini, spec_.N, spec_.dt);
      break;
  }
  const DisturbanceBox small = downsample_box(dec.box, downsample_);

  RobustBounds bounds;
  bounds.u_min = limits_.u_min;
  bounds.u_max = limits_.u_max;
  bounds.s_tilde_min = dec.eq.s_tilde_min;
  bounds.s_tilde_max = dec.eq.s_tilde_max;
  RobustQP qp = make_robust_qp(core_, ini.u_ini, ini.eps_ini, ini.y_ini, bounds);

  ConicProgram cp;
  Eigen::MatrixXd vertices;
  if (spec_.method == ReformMethod::Vertex) {
    vertices = enumerate_vertices(small);
    cp = to_conic(vertex_reformulate(qp, vertices));
  } else {
    auto dp = duality_reformulate(qp, small);
    vertices = dp.vertices;
    cp = to_conic(dp);
  }
  const auto t1 = clock::now();
  ConicSolution sol = solve_conic(cp, spec_.solver);
  const auto t2 = clock::now();
  dec.modeling_seconds = std::chrono::duration<double>(t1 - t0).count();
  dec.solver_seconds = std::chrono::duration<double>(t2 - t1).count();
  dec.status = sol.status;

  const QpLayout& L = core_->layout;
  const int nu = core_->input_dim;
  if (sol.status == SolveStatus::Optimal) {
    RobustSolveResult polished = finalize_solution(qp, vertices, std::move(sol));
    dec.objective = polished.objective;
    dec.u_trajectory = polished.u;
    dec.sigma_y = polished.sigma_y;

    // Post-solve check: the predicted spacing stays inside the band for
    // every enumerated vertex.
    const Eigen::MatrixXd& P1 = core_->P1;
    VectorXd xd(L.n_u + L.n_sigma);
    xd << dec.u_trajectory, dec.sigma_y;
    const VectorXd base = P1.leftCols(L.n_u + L.n_sigma) * xd + qp.c1;
    for (int j = 0; j < vertices.cols(); ++j) {
      const VectorXd s_pred = base + P1.rightCols(L.n_eps) * vertices.col(j);
      dec.max_band_violation =
          std::max({dec.max_band_violation, (s_pred.array() - bounds.s_tilde_max).maxCoeff(),
                    (bounds.s_tilde_min - s_pred.array()).maxCoeff()});
    }
    prev_trajectory_ = dec.u_trajectory;
    has_prev_ = true;
  } else {
    dec.fallback = true;
    if (has_prev_) {
      VectorXd shifted(L.n_u);
      shifted.head(L.n_u - nu) = prev_trajectory_.tail(L.n_u - nu);
      shifted.tail(nu) = prev_trajectory_.tail(nu);
      dec.u_trajectory = shifted;
      prev_trajectory_ = shifted;
    } else {
      dec.u_trajectory = VectorXd::Zero(L.n_u);
    }
  }
  dec.u = dec.u_trajectory.head(nu).cwiseMax(limits_.u_min).cwiseMin(limits_.u_max);
  return dec;
}

}  // namespace mixflow
