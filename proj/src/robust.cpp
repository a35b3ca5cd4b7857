#include "mixflow/robust.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace mixflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ControllerWeights::validate() const {
  if (lambda_g <= 0.0 || lambda_y <= 0.0)
    throw std::invalid_argument("ControllerWeights: regularizers must be positive");
  if (Q.rows() != Q.cols() || R.rows() != R.cols())
    throw std::invalid_argument("ControllerWeights: weights must be square");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(Q, Eigen::EigenvaluesOnly);
  if (eq.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, eq.eigenvalues().cwiseAbs().maxCoeff()))
    throw std::invalid_argument("ControllerWeights: Q must be positive semidefinite");
  Eigen::LLT<MatrixXd> lr(R);
  if (lr.info() != Eigen::Success)
    throw std::invalid_argument("ControllerWeights: R must be positive definite");
}

ControllerWeights ControllerWeights::diagonal(int N, int output_dim, int spacing_channels,
                                              int input_dim, double w_s, double r_u,
                                              double lambda_g, double lambda_y) {
  ControllerWeights w;
  VectorXd qstep = VectorXd::Ones(output_dim);
  qstep.tail(spacing_channels).setConstant(w_s);
  w.Q = qstep.replicate(N, 1).asDiagonal();
  w.R = r_u * MatrixXd::Identity(N * input_dim, N * input_dim);
  w.lambda_g = lambda_g;
  w.lambda_y = lambda_y;
  return w;
}

HankelPredictor pseudo_inverse_predictor(const HankelBlocks& blocks, double rel_tol) {
  const int rows = static_cast<int>(blocks.U_P.rows() + blocks.E_P.rows() + blocks.Y_P.rows() +
                                    blocks.U_F.rows() + blocks.E_F.rows());
  MatrixXd H(rows, blocks.cols());
  H << blocks.U_P, blocks.E_P, blocks.Y_P, blocks.U_F, blocks.E_F;

  Eigen::BDCSVD<MatrixXd> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = rel_tol * (sv.size() ? sv(0) : 0.0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;

  HankelPredictor out;
  out.rows = rows;
  out.rank = rank;
  VectorXd inv = VectorXd::Zero(sv.size());
  for (int i = 0; i < rank; ++i) inv(i) = 1.0 / sv(i);
  out.Hdag.noalias() =
      svd.matrixV().leftCols(sv.size()) * inv.asDiagonal() * svd.matrixU().leftCols(sv.size()).transpose();
  out.YF_Hdag.noalias() = blocks.Y_F * out.Hdag;
  return out;
}

Eigen::MatrixXd hankel_nullspace_projector(const HankelBlocks& blocks, double rel_tol) {
  const int rows = static_cast<int>(blocks.U_P.rows() + blocks.E_P.rows() + blocks.Y_P.rows() +
                                    blocks.U_F.rows() + blocks.E_F.rows());
  MatrixXd H(rows, blocks.cols());
  H << blocks.U_P, blocks.E_P, blocks.Y_P, blocks.U_F, blocks.E_F;
  const HankelPredictor pred = pseudo_inverse_predictor(blocks, rel_tol);
  return MatrixXd::Identity(blocks.cols(), blocks.cols()) - pred.Hdag * H;
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("psd_factor: matrix must be square");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M);
  const VectorXd& ev = eig.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  if (ev.minCoeff() < -1e-6 * scale)
    throw std::domain_error("psd_factor: matrix is not positive semidefinite");
  const double rank_tol = 1e-12 * scale;
  int rank = 0;
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) > rank_tol) ++rank;
  MatrixXd Gamma(rank, M.cols());
  int at = 0;
  for (int i = static_cast<int>(ev.size()) - 1; i >= 0; --i) {  // descending eigenvalues
    if (ev(i) <= rank_tol) continue;
    Gamma.row(at++) = std::sqrt(ev(i)) * eig.eigenvectors().col(i).transpose();
  }
  return Gamma;
}

std::shared_ptr<const RobustQpCore> build_robust_qp_core(const HankelBlocks& blocks,
                                                         const ControllerWeights& weights,
                                                         const Eigen::MatrixXd& E_eps,
                                                         int spacing_channels) {
  weights.validate();
  auto core = std::make_shared<RobustQpCore>();
  const int T_ini = blocks.T_ini, N = blocks.N;
  const int nu_chan = blocks.input_dim();
  const int p = blocks.output_dim();
  if (E_eps.rows() != N) throw std::invalid_argument("build_robust_qp_core: E_eps must have N rows");
  if (weights.Q.rows() != N * p || weights.R.rows() != N * nu_chan)
    throw std::invalid_argument("build_robust_qp_core: weight dimensions mismatch");
  if (spacing_channels < 1 || spacing_channels > p)
    throw std::invalid_argument("build_robust_qp_core: bad spacing channel count");

  core->T_ini = T_ini;
  core->N = N;
  core->input_dim = nu_chan;
  core->output_dim = p;
  core->spacing_channels = spacing_channels;
  core->E_eps = E_eps;
  core->layout.n_u = N * nu_chan;
  core->layout.n_sigma = T_ini * p;
  core->layout.n_eps = static_cast<int>(E_eps.cols());

  const QpLayout& L = core->layout;
  const int dim = L.dim();
  const int b_dim = T_ini * (nu_chan + 1 + p) + N * (nu_chan + 1);

  HankelPredictor pred = pseudo_inverse_predictor(blocks);
  core->predictor_rank_defect = pred.rank_defect();
  core->Hdag = std::move(pred.Hdag);
  core->YF_Hdag = std::move(pred.YF_Hdag);

  // Selectors mapping x = (u, sigma_y, eps~) into the stacked right-hand side
  // b = (u_ini, eps_ini, y_ini + sigma_y, u, E_eps eps~).
  core->F1 = MatrixXd::Zero(L.n_u, dim);
  core->F1.leftCols(L.n_u).setIdentity();
  core->F2 = MatrixXd::Zero(L.n_sigma, dim);
  core->F2.middleCols(L.sigma_offset(), L.n_sigma).setIdentity();
  core->F3 = MatrixXd::Zero(b_dim, dim);
  const int yini_row = T_ini * (nu_chan + 1);
  const int ufut_row = yini_row + T_ini * p;
  const int efut_row = ufut_row + N * nu_chan;
  core->F3.block(yini_row, L.sigma_offset(), L.n_sigma, L.n_sigma).setIdentity();
  core->F3.block(ufut_row, L.u_offset(), L.n_u, L.n_u).setIdentity();
  core->F3.block(efut_row, L.eps_offset(), N, L.n_eps) = E_eps;

  core->S1.noalias() = core->YF_Hdag.transpose() * weights.Q * core->YF_Hdag;
  core->S2.noalias() = core->Hdag.transpose() * core->Hdag;
  core->Ssum = core->S1 + weights.lambda_g * core->S2;

  MatrixXd M = core->F1.transpose() * weights.R * core->F1;
  M.noalias() += core->F3.transpose() * core->Ssum * core->F3;
  M.noalias() += weights.lambda_y * core->F2.transpose() * core->F2;
  core->M = 0.5 * (M + M.transpose());
  core->Gamma = psd_factor(core->M);

  // Spacing selector G1 picks the last spacing_channels outputs of each step.
  MatrixXd G1 = MatrixXd::Zero(N * spacing_channels, N * p);
  for (int l = 0; l < N; ++l)
    for (int k = 0; k < spacing_channels; ++k)
      G1(l * spacing_channels + k, l * p + p - spacing_channels + k) = 1.0;
  core->c1_map.noalias() = G1 * core->YF_Hdag;
  core->P1.noalias() = core->c1_map * core->F3;
  core->P2 = core->F1;

  core->d_map.noalias() = 2.0 * core->F3.transpose() * core->Ssum;
  core->b_dim = b_dim;

  // Conic blocks shared across steps: spacing rows and input rows over the
  // decision vector (t, u, sigma_y).
  const int n_dec = 1 + L.n_u + L.n_sigma;
  const int nsp = static_cast<int>(core->P1.rows());
  auto spacing = std::make_shared<MatrixXd>(MatrixXd::Zero(2 * nsp, n_dec));
  spacing->block(0, 1, nsp, L.n_u + L.n_sigma) = core->P1.leftCols(L.n_u + L.n_sigma);
  spacing->block(nsp, 1, nsp, L.n_u + L.n_sigma) = -core->P1.leftCols(L.n_u + L.n_sigma);
  core->spacing_block = spacing;
  auto input = std::make_shared<MatrixXd>(MatrixXd::Zero(2 * L.n_u, n_dec));
  input->block(0, 1, L.n_u, L.n_u).setIdentity();
  input->block(L.n_u, 1, L.n_u, L.n_u) = -MatrixXd::Identity(L.n_u, L.n_u);
  core->input_block = input;

  return core;
}

std::shared_ptr<const RobustQpCore> build_mpc_qp_core(const StateSpace& ss, int T_ini, int N,
                                                      const ControllerWeights& weights,
                                                      const Eigen::MatrixXd& E_eps,
                                                      int spacing_channels) {
  weights.validate();
  const int nx = ss.state_dim();
  const int nu = ss.input_dim();
  const int p = ss.output_dim();
  if (E_eps.rows() != N) throw std::invalid_argument("build_mpc_qp_core: E_eps must have N rows");
  if (weights.Q.rows() != N * p || weights.R.rows() != N * nu)
    throw std::invalid_argument("build_mpc_qp_core: weight dimensions mismatch");

  auto core = std::make_shared<RobustQpCore>();
  core->kind = PredictorKind::StateSpace;
  core->T_ini = T_ini;
  core->N = N;
  core->input_dim = nu;
  core->output_dim = p;
  core->spacing_channels = spacing_channels;
  core->E_eps = E_eps;
  core->layout.n_u = N * nu;
  core->layout.n_sigma = 0;
  core->layout.n_eps = static_cast<int>(E_eps.cols());
  core->b_dim = T_ini * (nu + 1 + p);

  const QpLayout& L = core->layout;
  const int dim = L.dim();

  // Prediction maps over the horizon: y(k+j) = C A^j x + forced responses.
  MatrixXd Phi(N * p, nx);
  MatrixXd Psi = MatrixXd::Zero(N * p, N * nu);
  MatrixXd Xi = MatrixXd::Zero(N * p, N);
  {
    std::vector<MatrixXd> Apow(N + T_ini + 1);
    Apow[0] = MatrixXd::Identity(nx, nx);
    for (int k = 1; k <= N + T_ini; ++k) Apow[k] = ss.A * Apow[k - 1];
    for (int j = 0; j < N; ++j) {
      Phi.middleRows(j * p, p) = ss.C * Apow[j];
      for (int i = 0; i < j; ++i) {
        Psi.block(j * p, i * nu, p, nu) = ss.C * Apow[j - 1 - i] * ss.B;
        Xi.block(j * p, i, p, 1) = ss.C * Apow[j - 1 - i] * ss.H;
      }
    }

    // Least-squares state fit from the past window, then rolled to now:
    // x(k) = K [u_ini; eps_ini; y_ini].
    MatrixXd O(T_ini * p, nx);
    MatrixXd Tu = MatrixXd::Zero(T_ini * p, T_ini * nu);
    MatrixXd Te = MatrixXd::Zero(T_ini * p, T_ini);
    MatrixXd Ru = MatrixXd::Zero(nx, T_ini * nu);
    MatrixXd Re = MatrixXd::Zero(nx, T_ini);
    for (int k = 0; k < T_ini; ++k) {
      O.middleRows(k * p, p) = ss.C * Apow[k];
      for (int i = 0; i < k; ++i) {
        Tu.block(k * p, i * nu, p, nu) = ss.C * Apow[k - 1 - i] * ss.B;
        Te.block(k * p, i, p, 1) = ss.C * Apow[k - 1 - i] * ss.H;
      }
      Ru.middleCols(k * nu, nu) = Apow[T_ini - 1 - k] * ss.B;
      Re.col(k) = Apow[T_ini - 1 - k] * ss.H;
    }
    Eigen::BDCSVD<MatrixXd> svd(O, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double tol = 1e-10 * (sv.size() ? sv(0) : 0.0);
    VectorXd inv = VectorXd::Zero(sv.size());
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > tol) inv(i) = 1.0 / sv(i);
    MatrixXd Odag = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();

    MatrixXd K(nx, core->b_dim);
    K.middleCols(0, T_ini * nu) = Ru - Apow[T_ini] * Odag * Tu;
    K.middleCols(T_ini * nu, T_ini) = Re - Apow[T_ini] * Odag * Te;
    K.middleCols(T_ini * (nu + 1), T_ini * p) = Apow[T_ini] * Odag;

    MatrixXd W(N * p, dim);
    W.leftCols(L.n_u) = Psi;
    W.rightCols(L.n_eps) = Xi * E_eps;

    MatrixXd M = W.transpose() * weights.Q * W;
    M.topLeftCorner(L.n_u, L.n_u) += weights.R;
    core->M = 0.5 * (M + M.transpose());
    core->Gamma = psd_factor(core->M);

    MatrixXd G1 = MatrixXd::Zero(N * spacing_channels, N * p);
    for (int l = 0; l < N; ++l)
      for (int k = 0; k < spacing_channels; ++k)
        G1(l * spacing_channels + k, l * p + p - spacing_channels + k) = 1.0;
    core->P1.noalias() = G1 * W;
    core->P2 = MatrixXd::Zero(L.n_u, dim);
    core->P2.leftCols(L.n_u).setIdentity();
    core->F1 = core->P2;
    core->F2 = MatrixXd::Zero(0, dim);

    const MatrixXd PhiK = Phi * K;
    core->d_map.noalias() = 2.0 * W.transpose() * weights.Q * PhiK;
    core->Ssum.noalias() = PhiK.transpose() * weights.Q * PhiK;
    core->c1_map.noalias() = G1 * PhiK;
  }

  const int n_dec = 1 + L.n_u;
  const int nsp = static_cast<int>(core->P1.rows());
  auto spacing = std::make_shared<MatrixXd>(MatrixXd::Zero(2 * nsp, n_dec));
  spacing->block(0, 1, nsp, L.n_u) = core->P1.leftCols(L.n_u);
  spacing->block(nsp, 1, nsp, L.n_u) = -core->P1.leftCols(L.n_u);
  core->spacing_block = spacing;
  auto input = std::make_shared<MatrixXd>(MatrixXd::Zero(2 * L.n_u, n_dec));
  input->block(0, 1, L.n_u, L.n_u).setIdentity();
  input->block(L.n_u, 1, L.n_u, L.n_u) = -MatrixXd::Identity(L.n_u, L.n_u);
  core->input_block = input;

  return core;
}

RobustQP make_robust_qp(std::shared_ptr<const RobustQpCore> core, const VectorXd& u_ini,
                        const VectorXd& eps_ini, const VectorXd& y_ini,
                        const RobustBounds& bounds) {
  const int T_ini = core->T_ini, N = core->N;
  if (u_ini.size() != T_ini * core->input_dim || eps_ini.size() != T_ini ||
      y_ini.size() != T_ini * core->output_dim)
    throw std::invalid_argument("make_robust_qp: initial trajectory dimension mismatch");
  RobustQP qp;
  qp.core = std::move(core);
  const int b_dim = qp.core->b_dim;
  qp.b_ini = VectorXd::Zero(b_dim);
  qp.b_ini.head(u_ini.size()) = u_ini;
  qp.b_ini.segment(u_ini.size(), T_ini) = eps_ini;
  qp.b_ini.segment(u_ini.size() + T_ini, y_ini.size()) = y_ini;
  qp.d.noalias() = qp.core->d_map * qp.b_ini;
  qp.c0 = qp.b_ini.dot(qp.core->Ssum * qp.b_ini);
  qp.c1.noalias() = qp.core->c1_map * qp.b_ini;
  qp.bounds = bounds;
  (void)N;
  return qp;
}

RobustQP build_robust_qp(const HankelBlocks& blocks, const VectorXd& u_ini,
                         const VectorXd& eps_ini, const VectorXd& y_ini,
                         const ControllerWeights& weights, const Eigen::MatrixXd& E_eps,
                         const RobustBounds& bounds, int spacing_channels) {
  auto core = build_robust_qp_core(blocks, weights, E_eps, spacing_channels);
  return make_robust_qp(core, u_ini, eps_ini, y_ini, bounds);
}

long VertexProgram::constraint_count() const {
  const long n_v = n_vertices();
  const long nsp = qp.core->P1.rows();
  return n_v + 2 * nsp * n_v + 2 * static_cast<long>(qp.layout().n_u);
}

VertexProgram vertex_reformulate(const RobustQP& qp, const Eigen::MatrixXd& vertices) {
  if (vertices.rows() != qp.layout().n_eps)
    throw std::invalid_argument("vertex_reformulate: vertex dimension mismatch");
  VertexProgram p;
  p.qp = qp;
  p.vertices = vertices;
  return p;
}

long DualProgram::constraint_count() const {
  const long n_v = n_vertices();
  const long nsp = spacing_rows();
  const long n_eps = qp.layout().n_eps;
  return n_v + 2 * nsp * (3 * n_eps + 1) + 2 * static_cast<long>(qp.layout().n_u);
}

DualProgram duality_reformulate(const RobustQP& qp, const DisturbanceBox& box) {
  if (box.dim() != qp.layout().n_eps)
    throw std::invalid_argument("duality_reformulate: box dimension mismatch");
  DualProgram p;
  p.qp = qp;
  p.box = box;
  p.vertices = enumerate_vertices(box);
  return p;
}

namespace {

// Second-order-cone block of the epigraph constraint x'Mx + d'x <= t at a
// fixed disturbance vertex; the matrix part is vertex-independent.
std::shared_ptr<MatrixXd> make_soc_block(const RobustQP& qp, int n_dec, int lambda_cols) {
  const QpLayout& L = qp.layout();
  const int nd = L.n_u + L.n_sigma;
  const int r = static_cast<int>(qp.core->Gamma.rows());
  auto A = std::make_shared<MatrixXd>(MatrixXd::Zero(r + 2, n_dec + lambda_cols));
  (*A)(0, 0) = -1.0;
  A->row(0).segment(1, nd) = qp.d.head(nd).transpose();
  A->block(1, 1, r, nd) = -2.0 * qp.core->Gamma.leftCols(nd);
  (*A)(r + 1, 0) = -1.0;
  A->row(r + 1).segment(1, nd) = qp.d.head(nd).transpose();
  return A;
}

VectorXd soc_offset(const RobustQP& qp, const VectorXd& w) {
  const QpLayout& L = qp.layout();
  const int r = static_cast<int>(qp.core->Gamma.rows());
  const double dw = qp.d.tail(L.n_eps).dot(w);
  VectorXd c(r + 2);
  c(0) = 1.0 - dw;
  c.segment(1, r) = 2.0 * qp.core->Gamma.rightCols(L.n_eps) * w;
  c(r + 1) = -1.0 - dw;
  return c;
}

std::shared_ptr<MatrixXd> widen(const MatrixXd& A, int extra_cols) {
  auto out = std::make_shared<MatrixXd>(MatrixXd::Zero(A.rows(), A.cols() + extra_cols));
  out->leftCols(A.cols()) = A;
  return out;
}

VectorXd ones_times(int n, double v) { return VectorXd::Constant(n, v); }

}  // namespace

ConicProgram to_conic(const VertexProgram& program) {
  const RobustQP& qp = program.qp;
  const QpLayout& L = qp.layout();
  const int n_dec = 1 + L.n_u + L.n_sigma;
  const int nsp = static_cast<int>(qp.core->P1.rows());
  const int n_v = program.n_vertices();

  ConicProgram cp;
  cp.num_vars = n_dec;
  cp.b = VectorXd::Zero(n_dec);
  cp.b(0) = -1.0;  // minimize t as max -t

  // Input bounds.
  ConeSection ou;
  ou.cone = {ConeKind::NonNegative, 2 * L.n_u};
  ou.A = qp.core->input_block;
  ou.c.resize(2 * L.n_u);
  ou.c << ones_times(L.n_u, qp.bounds.u_max), ones_times(L.n_u, -qp.bounds.u_min);
  cp.sections.push_back(std::move(ou));

  // Spacing band at every vertex; one shared matrix block.
  const MatrixXd P1w = qp.core->P1.rightCols(L.n_eps);
  for (int j = 0; j < n_v; ++j) {
    ConeSection o;
    o.cone = {ConeKind::NonNegative, 2 * nsp};
    o.A = qp.core->spacing_block;
    const VectorXd shift = P1w * program.vertices.col(j) + qp.c1;
    o.c.resize(2 * nsp);
    o.c << ones_times(nsp, qp.bounds.s_tilde_max) - shift,
        ones_times(nsp, -qp.bounds.s_tilde_min) + shift;
    cp.sections.push_back(std::move(o));
  }

  // Epigraph second-order cones.
  auto soc = make_soc_block(qp, n_dec, 0);
  for (int j = 0; j < n_v; ++j) {
    ConeSection s;
    s.cone = {ConeKind::SecondOrder, static_cast<int>(soc->rows())};
    s.A = soc;
    s.c = soc_offset(qp, program.vertices.col(j));
    cp.sections.push_back(std::move(s));
  }
  return cp;
}

ConicProgram to_conic(const DualProgram& program) {
  const RobustQP& qp = program.qp;
  const QpLayout& L = qp.layout();
  const int nsp = program.spacing_rows();
  const int ne = L.n_eps;
  const int n_dec = 1 + L.n_u + L.n_sigma;
  const int lam_cols = 4 * nsp * ne;  // lambda1 then lambda2, 2*ne per row each
  const int total = n_dec + lam_cols;
  const int lam1 = n_dec;
  const int lam2 = n_dec + 2 * nsp * ne;
  const int n_v = program.n_vertices();

  ConicProgram cp;
  cp.num_vars = total;
  cp.b = VectorXd::Zero(total);
  cp.b(0) = -1.0;

  const MatrixXd P1d = qp.core->P1.leftCols(L.n_u + L.n_sigma);
  const MatrixXd P1w = qp.core->P1.rightCols(ne);
  const VectorXd b_eps = program.box.b_eps();

  // Zero cones: the dual equalities tying each lambda pair to p_{l,eps}.
  for (int l = 0; l < nsp; ++l) {
    auto A = std::make_shared<MatrixXd>(MatrixXd::Zero(2 * ne, total));
    for (int i = 0; i < ne; ++i) {
      (*A)(i, lam1 + 2 * ne * l + i) = 1.0;
      (*A)(i, lam1 + 2 * ne * l + ne + i) = -1.0;
      (*A)(ne + i, lam2 + 2 * ne * l + i) = 1.0;
      (*A)(ne + i, lam2 + 2 * ne * l + ne + i) = -1.0;
    }
    ConeSection z;
    z.cone = {ConeKind::Zero, 2 * ne};
    z.A = A;
    z.c.resize(2 * ne);
    z.c << P1w.row(l).transpose(), -P1w.row(l).transpose();
    cp.sections.push_back(std::move(z));
  }

  // lambda >= 0.
  {
    auto A = std::make_shared<MatrixXd>(MatrixXd::Zero(lam_cols, total));
    A->block(0, n_dec, lam_cols, lam_cols) = -MatrixXd::Identity(lam_cols, lam_cols);
    ConeSection o;
    o.cone = {ConeKind::NonNegative, lam_cols};
    o.A = A;
    o.c = VectorXd::Zero(lam_cols);
    cp.sections.push_back(std::move(o));
  }

  // Input bounds.
  {
    ConeSection ou;
    ou.cone = {ConeKind::NonNegative, 2 * L.n_u};
    ou.A = widen(*qp.core->input_block, lam_cols);
    ou.c.resize(2 * L.n_u);
    ou.c << ones_times(L.n_u, qp.bounds.u_max), ones_times(L.n_u, -qp.bounds.u_min);
    cp.sections.push_back(std::move(ou));
  }

  // Dualized spacing band, two rows per spacing constraint.
  for (int l = 0; l < nsp; ++l) {
    auto A = std::make_shared<MatrixXd>(MatrixXd::Zero(2, total));
    A->row(0).segment(1, L.n_u + L.n_sigma) = P1d.row(l);
    A->row(0).segment(lam1 + 2 * ne * l, 2 * ne) = b_eps.transpose();
    A->row(1).segment(1, L.n_u + L.n_sigma) = -P1d.row(l);
    A->row(1).segment(lam2 + 2 * ne * l, 2 * ne) = b_eps.transpose();
    ConeSection o;
    o.cone = {ConeKind::NonNegative, 2};
    o.A = A;
    o.c.resize(2);
    o.c << qp.bounds.s_tilde_max - qp.c1(l), -qp.bounds.s_tilde_min + qp.c1(l);
    cp.sections.push_back(std::move(o));
  }

  // Epigraph second-order cones, identical to Method I up to padding.
  auto soc = make_soc_block(qp, n_dec, lam_cols);
  for (int j = 0; j < n_v; ++j) {
    ConeSection s;
    s.cone = {ConeKind::SecondOrder, static_cast<int>(soc->rows())};
    s.A = soc;
    s.c = soc_offset(qp, program.vertices.col(j));
    cp.sections.push_back(std::move(s));
  }
  return cp;
}

namespace {

// Worst-case objective over the vertex hull, without the constant term.
double worst_objective(const RobustQP& qp, const Eigen::MatrixXd& vertices, const VectorXd& xd) {
  const QpLayout& L = qp.layout();
  const int nd = L.n_u + L.n_sigma;
  const MatrixXd& M = qp.M();
  double worst = -std::numeric_limits<double>::infinity();
  const double head = xd.dot(M.topLeftCorner(nd, nd) * xd) + qp.d.head(nd).dot(xd);
  const VectorXd cross = 2.0 * (M.topRightCorner(nd, L.n_eps).transpose() * xd) + qp.d.tail(L.n_eps);
  for (int j = 0; j < vertices.cols(); ++j) {
    const VectorXd w = vertices.col(j);
    worst = std::max(worst, head + cross.dot(w) + w.dot(M.bottomRightCorner(L.n_eps, L.n_eps) * w));
  }
  return worst;
}

// Newton polish for the smooth case: if the binding vertex is unique and no
// linear constraint is active, the optimum solves one linear system. The
// candidate is accepted only when it is feasible and strictly better.
void polish(const RobustQP& qp, const Eigen::MatrixXd& vertices, RobustSolveResult& r) {
  if (r.status != SolveStatus::Optimal) return;
  const QpLayout& L = qp.layout();
  const int nd = L.n_u + L.n_sigma;
  VectorXd xd(nd);
  xd << r.u, r.sigma_y;

  // Binding vertex at the returned point.
  const MatrixXd& M = qp.M();
  int jstar = 0;
  {
    double best = -std::numeric_limits<double>::infinity();
    const VectorXd cross =
        2.0 * (M.topRightCorner(nd, L.n_eps).transpose() * xd) + qp.d.tail(L.n_eps);
    for (int j = 0; j < vertices.cols(); ++j) {
      const VectorXd w = vertices.col(j);
      const double v = cross.dot(w) + w.dot(M.bottomRightCorner(L.n_eps, L.n_eps) * w);
      if (v > best) {
        best = v;
        jstar = j;
      }
    }
  }

  const VectorXd lin = qp.d.head(nd) + 2.0 * M.topRightCorner(nd, L.n_eps) * vertices.col(jstar);
  VectorXd cand = M.topLeftCorner(nd, nd).ldlt().solve(-0.5 * lin);

  // Feasibility at every vertex plus the input bounds.
  const MatrixXd P1d = qp.core->P1.leftCols(nd);
  const MatrixXd P1w = qp.core->P1.rightCols(L.n_eps);
  const VectorXd band = P1d * cand + qp.c1;
  for (int j = 0; j < vertices.cols(); ++j) {
    const VectorXd s_pred = band + P1w * vertices.col(j);
    if (s_pred.maxCoeff() > qp.bounds.s_tilde_max || s_pred.minCoeff() < qp.bounds.s_tilde_min)
      return;
  }
  const VectorXd u_cand = cand.head(L.n_u);
  if (u_cand.maxCoeff() > qp.bounds.u_max || u_cand.minCoeff() < qp.bounds.u_min) return;

  const double f_cand = worst_objective(qp, vertices, cand);
  const double f_cur = worst_objective(qp, vertices, xd);
  if (f_cand <= f_cur) {
    r.u = u_cand;
    r.sigma_y = cand.tail(L.n_sigma);
    r.objective = f_cand + qp.c0;
  }
}

RobustSolveResult extract(const RobustQP& qp, ConicSolution&& sol) {
  RobustSolveResult r;
  r.status = sol.status;
  if (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::NumericalLimit) {
    const QpLayout& L = qp.layout();
    r.objective = sol.y(0) + qp.c0;
    r.u = sol.y.segment(1, L.n_u);
    r.sigma_y = sol.y.segment(1 + L.n_u, L.n_sigma);
  }
  r.conic = std::move(sol);
  return r;
}

}  // namespace

RobustSolveResult finalize_solution(const RobustQP& qp, const Eigen::MatrixXd& vertices,
                                    ConicSolution&& sol) {
  RobustSolveResult r = extract(qp, std::move(sol));
  polish(qp, vertices, r);
  return r;
}

RobustSolveResult solve_vertex_program(const VertexProgram& program,
                                       const SolverSettings& settings) {
  return finalize_solution(program.qp, program.vertices, solve_conic(to_conic(program), settings));
}

RobustSolveResult solve_dual_program(const DualProgram& program, const SolverSettings& settings) {
  return finalize_solution(program.qp, program.vertices, solve_conic(to_conic(program), settings));
}

}  // namespace mixflow
