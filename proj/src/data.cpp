#include "mixflow/data.hpp"

#include <Eigen/SVD>

#include <fstream>
#include <sstream>
#include <vector>

namespace mixflow {

void TrajectoryDataset::validate() const {
  if (u.cols() != eps.cols() || u.cols() != y.cols())
    throw std::invalid_argument("TrajectoryDataset: inconsistent sample counts");
  if (eps.rows() != 1) throw std::invalid_argument("TrajectoryDataset: eps must be one channel");
  if (u.cols() < 1) throw std::invalid_argument("TrajectoryDataset: empty dataset");
}

Eigen::MatrixXd build_hankel(const Eigen::MatrixXd& signal, int depth) {
  const int dim = static_cast<int>(signal.rows());
  const int T = static_cast<int>(signal.cols());
  if (depth < 1 || depth >= T)
    throw std::invalid_argument("build_hankel: need 1 <= depth < T");
  Eigen::MatrixXd H(depth * dim, T - depth + 1);
  for (int i = 0; i < depth; ++i)
    for (int j = 0; j <= T - depth; ++j) H.block(i * dim, j, dim, 1) = signal.col(i + j);
  return H;
}

PeReport check_persistent_excitation(const Eigen::MatrixXd& signal, int order, double rel_tol) {
  PeReport rep;
  rep.order = order;
  const Eigen::MatrixXd H = build_hankel(signal, order);
  rep.required_rank = static_cast<int>(H.rows());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(H);
  const auto& sv = svd.singularValues();
  rep.sigma_max = sv.size() > 0 ? sv(0) : 0.0;
  const double tol = rel_tol * rep.sigma_max;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  rep.numerical_rank = rank;
  rep.sigma_cut = sv.size() >= rep.required_rank ? sv(rep.required_rank - 1) : 0.0;
  rep.pass = rank == rep.required_rank && H.cols() >= H.rows();
  return rep;
}

HankelBlocks partition_hankel(const TrajectoryDataset& data, int T_ini, int N) {
  data.validate();
  const int L = T_ini + N;
  if (T_ini < 1 || N < 1) throw std::invalid_argument("partition_hankel: T_ini and N must be positive");
  if (data.T() < L + 1) throw std::invalid_argument("partition_hankel: dataset shorter than T_ini+N+1");

  HankelBlocks b;
  b.T_ini = T_ini;
  b.N = N;
  const int du = data.input_dim();
  const int dy = data.output_dim();
  const Eigen::MatrixXd Hu = build_hankel(data.u, L);
  const Eigen::MatrixXd He = build_hankel(data.eps, L);
  const Eigen::MatrixXd Hy = build_hankel(data.y, L);
  b.U_P = Hu.topRows(T_ini * du);
  b.U_F = Hu.bottomRows(N * du);
  b.E_P = He.topRows(T_ini);
  b.E_F = He.bottomRows(N);
  b.Y_P = Hy.topRows(T_ini * dy);
  b.Y_F = Hy.bottomRows(N * dy);
  return b;
}

int min_data_length(ModelScope scope, int T_ini, int N, int n_or_m, int q) {
  if (T_ini < 1 || N < 1 || n_or_m < 0 || q < 1)
    throw std::invalid_argument("min_data_length: arguments must be positive");
  const int L = T_ini + N;
  if (scope == ModelScope::Global) return (q + 2) * (L + 2 * n_or_m) - 1;
  return 3 * (L + 2 * (n_or_m + 1)) - 1;
}

namespace {

// Standalone chain config for one CF-LCC subsystem: its CAV leads, followed
// by the subsystem HDVs; parameters copied from the parent config.
TrafficConfig subsystem_chain(const TrafficConfig& config, int subsystem) {
  const auto vehicles = config.subsystem_vehicles(subsystem);
  TrafficConfig chain;
  chain.n = static_cast<int>(vehicles.size());
  chain.cav_indices = {1};
  for (int v : vehicles) chain.hdv_params.push_back(config.hdv_params[v - 1]);
  chain.dt = config.dt;
  chain.u_min = config.u_min;
  chain.u_max = config.u_max;
  chain.s_min = config.s_min;
  chain.s_max = config.s_max;
  return chain;
}

}  // namespace

CollectionResult collect_offline_data(const TrafficConfig& config, ModelScope scope,
                                      int subsystem, int T, std::uint64_t seed, double v_star,
                                      int T_ini, int N, int warmup, double u_noise,
                                      double eps_noise) {
  config.validate();
  const TrafficConfig cfg =
      scope == ModelScope::Global ? config : subsystem_chain(config, subsystem);
  const int q = cfg.q();
  const int n = cfg.n;
  const int state_dim = 2 * n;
  const int L = T_ini + N;
  const int min_T = min_data_length(scope, T_ini, N, scope == ModelScope::Global ? n : n - 1, q);
  if (T < min_T)
    throw std::invalid_argument("collect_offline_data: T below the minimum data length " +
                                std::to_string(min_T));

  Rng rng(seed);
  TrafficState st = equilibrium_state(cfg, v_star);

  CollectionResult out;
  out.v_star = v_star;
  out.data.u.resize(q, T);
  out.data.eps.resize(1, T);
  out.data.y.resize(n + q, T);

  std::vector<double> cav_sstar(q);
  std::vector<OvmParams> cav_params(q);
  for (int j = 0; j < q; ++j) {
    const int veh = cfg.cav_indices[j];
    if (cfg.hdv_params[veh - 1].valid()) cav_params[j] = cfg.hdv_params[veh - 1];
    cav_sstar[j] = equilibrium_spacing(v_star, cav_params[j]);
  }

  double eps_next = eps_noise * rng.uniform(-1.0, 1.0);
  for (int k = -warmup; k < T; ++k) {
    const double eps_now = eps_next;
    st.velocity(0) = v_star + eps_now;

    // CAVs drive with their OVM feedback plus exploration noise.
    Eigen::VectorXd u(q);
    for (int j = 0; j < q; ++j) {
      const int veh = cfg.cav_indices[j];
      const double s = st.spacing(veh);
      const double s_dot = st.velocity(veh - 1) - st.velocity(veh);
      u(j) = ovm_accel(s, st.velocity(veh), s_dot, cav_params[j]) + u_noise * rng.uniform(-1.0, 1.0);
      u(j) = std::clamp(u(j), cfg.u_min, cfg.u_max);
    }
    Eigen::VectorXd noise(n - q);
    for (int i = 0; i < n - q; ++i) noise(i) = rng.uniform(-0.1, 0.1);

    if (k >= 0) {
      out.data.u.col(k) = u;
      out.data.eps(0, k) = eps_now;
      for (int v = 1; v <= n; ++v) out.data.y(v - 1, k) = st.velocity(v) - v_star;
      for (int j = 0; j < q; ++j)
        out.data.y(n + j, k) = st.spacing(cfg.cav_indices[j]) - cav_sstar[j];
    }

    eps_next = eps_noise * rng.uniform(-1.0, 1.0);
    st = step_traffic(st, u, v_star + eps_next, cfg, noise);
  }

  Eigen::MatrixXd combined(q + 1, T);
  combined.topRows(q) = out.data.u;
  combined.bottomRows(1) = out.data.eps;
  out.pe = check_persistent_excitation(combined, L + state_dim);
  return out;
}

void save_dataset_csv(const TrajectoryDataset& data, const PeReport* pe, const std::string& path) {
  data.validate();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_dataset_csv: cannot open " + path);
  for (int j = 0; j < data.input_dim(); ++j) f << "u_" << j + 1 << ",";
  f << "eps";
  for (int j = 0; j < data.output_dim(); ++j) f << ",y_" << j + 1;
  f << "\n";
  f.precision(17);
  for (int k = 0; k < data.T(); ++k) {
    for (int j = 0; j < data.input_dim(); ++j) f << data.u(j, k) << ",";
    f << data.eps(0, k);
    for (int j = 0; j < data.output_dim(); ++j) f << "," << data.y(j, k);
    f << "\n";
  }
  if (pe) {
    f << "# pe_order=" << pe->order << " pe_pass=" << (pe->pass ? 1 : 0)
      << " rank=" << pe->numerical_rank << "/" << pe->required_rank
      << " sigma_max=" << pe->sigma_max << " sigma_cut=" << pe->sigma_cut << "\n";
  }
}

TrajectoryDataset load_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_dataset_csv: empty file");

  int nu = 0, ny = 0;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.rfind("u_", 0) == 0) ++nu;
      else if (tok.rfind("y_", 0) == 0) ++ny;
      else if (tok != "eps") throw std::runtime_error("load_dataset_csv: unexpected channel " + tok);
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (static_cast<int>(row.size()) != nu + 1 + ny)
      throw std::runtime_error("load_dataset_csv: bad row width");
    rows.push_back(std::move(row));
  }
  TrajectoryDataset d;
  const int T = static_cast<int>(rows.size());
  d.u.resize(nu, T);
  d.eps.resize(1, T);
  d.y.resize(ny, T);
  for (int k = 0; k < T; ++k) {
    for (int j = 0; j < nu; ++j) d.u(j, k) = rows[k][j];
    d.eps(0, k) = rows[k][nu];
    for (int j = 0; j < ny; ++j) d.y(j, k) = rows[k][nu + 1 + j];
  }
  d.validate();
  return d;
}

}  // namespace mixflow
