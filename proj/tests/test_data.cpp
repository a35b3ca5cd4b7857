#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>

#include "mixflow/data.hpp"
#include "mixflow/traffic.hpp"

using namespace mixflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("hankel matrix definition") {
  MatrixXd s(1, 4);
  s << 1, 2, 3, 4;
  MatrixXd H = build_hankel(s, 2);
  MatrixXd expect(2, 3);
  expect << 1, 2, 3, 2, 3, 4;
  CHECK((H - expect).norm() == 0.0);

  CHECK((build_hankel(s, 1) - s).norm() == 0.0);
  CHECK_THROWS_AS(build_hankel(s, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_hankel(s, 0), std::invalid_argument);
}

TEST_CASE("hankel block indexing for vector signals") {
  Rng rng(7);
  MatrixXd s(2, 5);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 5; ++j) s(i, j) = rng.uniform(-1, 1);
  MatrixXd H = build_hankel(s, 3);
  REQUIRE(H.rows() == 6);
  REQUIRE(H.cols() == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int d = 0; d < 2; ++d) CHECK(H(i * 2 + d, j) == s(d, i + j));
  // Shift property: moving one column right equals moving one block down.
  for (int r = 0; r + 2 < H.rows(); ++r)
    for (int c = 0; c + 1 < H.cols(); ++c) CHECK(H(r, c + 1) == H(r + 2, c));
}

TEST_CASE("persistent excitation rank checks") {
  MatrixXd constant = MatrixXd::Constant(1, 10, 3.0);
  auto rep = check_persistent_excitation(constant, 2);
  CHECK_FALSE(rep.pass);
  CHECK(rep.numerical_rank == 1);
  CHECK(rep.deficit() == 1);

  MatrixXd impulse = MatrixXd::Zero(1, 10);
  impulse(0, 0) = 1.0;
  rep = check_persistent_excitation(impulse, 3);
  CHECK_FALSE(rep.pass);
  CHECK(rep.numerical_rank == 1);

  int passes = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 1);
    MatrixXd sig(1, 50);
    for (int k = 0; k < 50; ++k) sig(0, k) = rng.uniform(-1, 1);
    if (check_persistent_excitation(sig, 5).pass) ++passes;
  }
  CHECK(passes == 100);
}

TEST_CASE("hankel partition") {
  TrajectoryDataset d;
  d.u.resize(1, 6);
  d.u << 1, 2, 3, 4, 5, 6;
  d.eps = MatrixXd::Zero(1, 6);
  d.y = MatrixXd::Ones(2, 6);
  auto b = partition_hankel(d, 1, 1);
  MatrixXd up(1, 5), uf(1, 5);
  up << 1, 2, 3, 4, 5;
  uf << 2, 3, 4, 5, 6;
  CHECK((b.U_P - up).norm() == 0.0);
  CHECK((b.U_F - uf).norm() == 0.0);

  // Stacking past over future reproduces the depth-(T_ini+N) Hankel matrix.
  Rng rng(3);
  TrajectoryDataset r;
  r.u.resize(2, 20);
  r.eps.resize(1, 20);
  r.y.resize(3, 20);
  for (int k = 0; k < 20; ++k) {
    for (int i = 0; i < 2; ++i) r.u(i, k) = rng.uniform(-1, 1);
    r.eps(0, k) = rng.uniform(-1, 1);
    for (int i = 0; i < 3; ++i) r.y(i, k) = rng.uniform(-1, 1);
  }
  auto blocks = partition_hankel(r, 3, 4);
  MatrixXd stacked(blocks.U_P.rows() + blocks.U_F.rows(), blocks.cols());
  stacked << blocks.U_P, blocks.U_F;
  CHECK((stacked - build_hankel(r.u, 7)).norm() == 0.0);

  CHECK_THROWS_AS(partition_hankel(r, 10, 10), std::invalid_argument);
}

TEST_CASE("hankel columns are valid LTI trajectories") {
  // Data generated by the linearized subsystem model; every stacked column
  // must be reproducible by rolling the model from a fitted initial state.
  auto cfg = TrafficConfig::uniform(3, {1});
  const double v_star = 15.0;
  StateSpace ss = linearize(cfg, v_star, ModelScope::Global);
  const int T_ini = 4, N = 6, L = T_ini + N, T = 60;

  Rng rng(11);
  MatrixXd U(1, T), E(1, T);
  for (int k = 0; k < T; ++k) {
    U(0, k) = rng.uniform(-1, 1);
    E(0, k) = rng.uniform(-1, 1);
  }
  TrajectoryDataset d;
  d.u = U;
  d.eps = E;
  d.y = lti_rollout(ss, VectorXd::Zero(ss.state_dim()), U, E);
  auto b = partition_hankel(d, T_ini, N);

  const int dy = ss.output_dim();
  // Observability-style fit of the window-start state from the past block.
  for (int col : {0, 7, b.cols() - 1}) {
    MatrixXd obs(T_ini * dy, ss.state_dim());
    VectorXd rhs(T_ini * dy);
    VectorXd upast = b.U_P.col(col), epast = b.E_P.col(col), ypast = b.Y_P.col(col);
    MatrixXd Ak = MatrixXd::Identity(ss.state_dim(), ss.state_dim());
    VectorXd forced = VectorXd::Zero(ss.state_dim());
    for (int k = 0; k < T_ini; ++k) {
      obs.middleRows(k * dy, dy) = ss.C * Ak;
      rhs.segment(k * dy, dy) = ypast.segment(k * dy, dy) - ss.C * forced;
      forced = ss.A * forced + ss.B * upast.segment(k, 1) + ss.H * epast.segment(k, 1);
      Ak = ss.A * Ak;
    }
    VectorXd x0 = obs.colPivHouseholderQr().solve(rhs);
    VectorXd x = Ak * x0 + forced;  // state at the future window start
    MatrixXd Uf(1, N), Ef(1, N);
    Uf = b.U_F.col(col).transpose();
    Ef = b.E_F.col(col).transpose();
    MatrixXd Yf = lti_rollout(ss, x, Uf, Ef);
    VectorXd yf_expected = b.Y_F.col(col);
    for (int k = 0; k < N; ++k)
      CHECK((Yf.col(k) - yf_expected.segment(k * dy, dy)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("LTI exactness of the data-driven span") {
  auto cfg = TrafficConfig::uniform(3, {1});
  const double v_star = 15.0;
  StateSpace ss = linearize(cfg, v_star, ModelScope::Global);
  const int T_ini = 5, N = 8, L = T_ini + N;
  const int T = min_data_length(ModelScope::Subsystem, T_ini, N, 2, 1) + 40;

  Rng rng(5);
  MatrixXd U(1, T), E(1, T);
  for (int k = 0; k < T; ++k) {
    U(0, k) = rng.uniform(-1, 1);
    E(0, k) = rng.uniform(-1, 1);
  }
  TrajectoryDataset d;
  d.u = U;
  d.eps = E;
  d.y = lti_rollout(ss, VectorXd::Zero(ss.state_dim()), U, E);

  MatrixXd combined(2, T);
  combined << U, E;
  REQUIRE(check_persistent_excitation(combined, L + ss.state_dim()).pass);

  auto b = partition_hankel(d, T_ini, N);
  const int dy = ss.output_dim();
  MatrixXd stack(b.U_P.rows() + b.E_P.rows() + b.Y_P.rows() + b.U_F.rows() + b.E_F.rows() + b.Y_F.rows(),
                 b.cols());
  stack << b.U_P, b.E_P, b.Y_P, b.U_F, b.E_F, b.Y_F;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(stack);

  for (int trial = 0; trial < 50; ++trial) {
    VectorXd x0(ss.state_dim());
    for (int i = 0; i < x0.size(); ++i) x0(i) = rng.uniform(-1, 1);
    MatrixXd Ut(1, L), Et(1, L);
    for (int k = 0; k < L; ++k) {
      Ut(0, k) = rng.uniform(-1, 1);
      Et(0, k) = rng.uniform(-1, 1);
    }
    MatrixXd Yt = lti_rollout(ss, x0, Ut, Et);
    VectorXd traj(stack.rows());
    int at = 0;
    auto put = [&](const MatrixXd& M, int from, int count, int dim) {
      for (int k = 0; k < count; ++k)
        for (int i = 0; i < dim; ++i) traj(at++) = M(i, from + k);
    };
    put(Ut, 0, T_ini, 1);
    put(Et, 0, T_ini, 1);
    put(Yt, 0, T_ini, dy);
    put(Ut, T_ini, N, 1);
    put(Et, T_ini, N, 1);
    put(Yt, T_ini, N, dy);
    REQUIRE(at == stack.rows());

    VectorXd g = qr.solve(traj);
    CHECK((stack * g - traj).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("minimum data lengths") {
  CHECK(min_data_length(ModelScope::Global, 20, 50, 16, 4) == 611);
  CHECK(min_data_length(ModelScope::Subsystem, 20, 50, 3, 1) == 233);
  CHECK(min_data_length(ModelScope::Subsystem, 1, 2, 0, 1) == 14);
  // Monotone in every argument.
  const int base_c = min_data_length(ModelScope::Global, 10, 20, 8, 2);
  CHECK(min_data_length(ModelScope::Global, 11, 20, 8, 2) > base_c);
  CHECK(min_data_length(ModelScope::Global, 10, 21, 8, 2) > base_c);
  CHECK(min_data_length(ModelScope::Global, 10, 20, 9, 2) > base_c);
  CHECK(min_data_length(ModelScope::Global, 10, 20, 8, 3) > base_c);
  const int base_d = min_data_length(ModelScope::Subsystem, 10, 20, 3, 1);
  CHECK(min_data_length(ModelScope::Subsystem, 11, 20, 3, 1) > base_d);
  CHECK(min_data_length(ModelScope::Subsystem, 10, 20, 4, 1) > base_d);
}

TEST_CASE("offline collection") {
  auto cfg = TrafficConfig::uniform(16, {3, 6, 10, 13});

  SUBCASE("subsystem collection is excited and bounded") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto res = collect_offline_data(cfg, ModelScope::Subsystem, 1, 700, seed);
      CHECK(res.data.u.rows() == 1);
      CHECK(res.data.T() == 700);
      CHECK(res.data.eps.minCoeff() >= -1.0);
      CHECK(res.data.eps.maxCoeff() <= 1.0);
      CHECK(res.pe.order == 70 + 8);
      CHECK(res.pe.pass);
    }
  }

  SUBCASE("global collection dimensions") {
    auto res = collect_offline_data(cfg, ModelScope::Global, 0, 1500, 42);
    CHECK(res.data.u.rows() == 4);
    CHECK(res.data.u.cols() == 1500);
    CHECK(res.data.eps.cols() == 1500);
    CHECK(res.data.y.rows() == 20);
    CHECK(res.pe.order == 70 + 32);
    CHECK(res.pe.pass);
  }

  SUBCASE("zero excitation fails the PE check") {
    auto res = collect_offline_data(cfg, ModelScope::Subsystem, 0, 700, 9, 15.0, 20, 50, 100, 0.0, 0.0);
    CHECK_FALSE(res.pe.pass);
  }

  SUBCASE("identical seeds reproduce identical datasets") {
    auto a = collect_offline_data(cfg, ModelScope::Subsystem, 2, 300, 123, 15.0, 5, 10);
    auto b = collect_offline_data(cfg, ModelScope::Subsystem, 2, 300, 123, 15.0, 5, 10);
    CHECK((a.data.u - b.data.u).norm() == 0.0);
    CHECK((a.data.eps - b.data.eps).norm() == 0.0);
    CHECK((a.data.y - b.data.y).norm() == 0.0);
  }

  SUBCASE("refuses too-short records") {
    CHECK_THROWS_WITH_AS(collect_offline_data(cfg, ModelScope::Subsystem, 1, 100, 1),
                         doctest::Contains("233"), std::invalid_argument);
  }
}

TEST_CASE("dataset csv round trip") {
  auto cfg = TrafficConfig::uniform(4, {1});
  auto res = collect_offline_data(cfg, ModelScope::Subsystem, 0, 300, 77, 15.0, 5, 10);
  const std::string path = "test_dataset_roundtrip.csv";
  save_dataset_csv(res.data, &res.pe, path);
  auto loaded = load_dataset_csv(path);
  CHECK(loaded.T() == 300);
  CHECK((loaded.u - res.data.u).norm() == 0.0);
  CHECK((loaded.eps - res.data.eps).norm() == 0.0);
  CHECK((loaded.y - res.data.y).norm() == 0.0);
  std::remove(path.c_str());
}
