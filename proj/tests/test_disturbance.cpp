#include <doctest.h>

#include <Eigen/Dense>
#include <set>

#include "mixflow/data.hpp"
#include "mixflow/disturbance.hpp"

using namespace mixflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("zero estimation") {
  auto box = estimate_zero(50);
  CHECK(box.dim() == 50);
  CHECK(box.eps_min.norm() == 0.0);
  CHECK(box.eps_max.norm() == 0.0);
  CHECK(enumerate_vertices(box).cols() == 1);
}

TEST_CASE("constant bound estimation") {
  VectorXd zeros = VectorXd::Zero(5);
  auto box = estimate_zero(4);
  box = estimate_constant(zeros, 4);
  CHECK(box.eps_min.norm() == 0.0);
  CHECK(box.eps_max.norm() == 0.0);

  VectorXd ramp(3);
  ramp << 1, 2, 3;
  box = estimate_constant(ramp, 6);
  CHECK(box.dim() == 6);
  for (int k = 0; k < 6; ++k) {
    CHECK(box.eps_min(k) == doctest::Approx(2.0));
    CHECK(box.eps_max(k) == doctest::Approx(4.0));
  }

  VectorXd flat = VectorXd::Constant(4, 0.5);
  box = estimate_constant(flat, 3);
  CHECK((box.eps_min - VectorXd::Constant(3, 0.5)).norm() == doctest::Approx(0.0));
  CHECK((box.eps_max - VectorXd::Constant(3, 0.5)).norm() == doctest::Approx(0.0));

  CHECK_THROWS_AS(estimate_constant(VectorXd::Zero(1), 3), std::invalid_argument);
}

TEST_CASE("time-varying bound estimation") {
  const double dt = 0.05;

  // A perfect ramp is recovered exactly: both bounds follow the true future.
  VectorXd ramp(4);
  ramp << 0.0, 0.1, 0.2, 0.3;
  auto box = estimate_timevarying(ramp, 5, dt);
  for (int k = 1; k <= 5; ++k) {
    CHECK(box.eps_min(k - 1) == doctest::Approx(0.3 + 2.0 * k * dt).epsilon(1e-12));
    CHECK(box.eps_max(k - 1) == doctest::Approx(0.3 + 2.0 * k * dt).epsilon(1e-12));
  }

  VectorXd flat = VectorXd::Constant(4, 0.7);
  box = estimate_timevarying(flat, 3, dt);
  for (int k = 0; k < 3; ++k) {
    CHECK(box.eps_min(k) == doctest::Approx(0.7));
    CHECK(box.eps_max(k) == doctest::Approx(0.7));
  }

  // Hand-evaluated sawtooth: accelerations (2,-2,2), mean 2/3, a_cur = 2.
  VectorXd saw(4);
  saw << 0.0, 0.1, 0.0, 0.1;
  box = estimate_timevarying(saw, 4, dt);
  for (int k = 1; k <= 4; ++k) {
    CHECK(box.eps_min(k - 1) == doctest::Approx(0.1 - (2.0 / 3.0) * k * dt).epsilon(1e-12));
    CHECK(box.eps_max(k - 1) == doctest::Approx(0.1 + (10.0 / 3.0) * k * dt).epsilon(1e-12));
  }

  CHECK_THROWS_AS(estimate_timevarying(VectorXd::Zero(2), 3, dt), std::invalid_argument);
}

TEST_CASE("down-sampling operator") {
  auto op = build_downsample(5, 2);
  CHECK(op.n_eps() == 3);
  VectorXd knots(3);
  knots << 1.0, 5.0, 2.0;
  VectorXd up = op.E * knots;
  VectorXd expect(5);
  expect << 1.0, 3.0, 5.0, 3.5, 2.0;
  CHECK((up - expect).norm() == doctest::Approx(0.0));

  auto ident = build_downsample(7, 1);
  CHECK(ident.n_eps() == 7);
  CHECK((ident.E - MatrixXd::Identity(7, 7)).norm() == 0.0);

  // Affine signals survive the round trip exactly.
  const int N = 50;
  auto big = build_downsample(N, 12);
  CHECK(big.n_eps() == 6);
  VectorXd affine(N);
  for (int k = 0; k < N; ++k) affine(k) = 0.3 - 0.02 * k;
  VectorXd knot_vals(big.n_eps());
  for (int j = 0; j < big.n_eps(); ++j) knot_vals(j) = affine(big.knots[j]);
  CHECK((big.E * knot_vals - affine).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(build_downsample(50, 0), std::domain_error);
  CHECK_THROWS_AS(build_downsample(50, 49), std::domain_error);
}

TEST_CASE("down-sampled boxes sample the knot bounds") {
  DisturbanceBox box;
  box.eps_min = VectorXd::LinSpaced(5, 0, 4);
  box.eps_max = VectorXd::LinSpaced(5, 10, 14);
  auto op = build_downsample(5, 2);
  auto small = downsample_box(box, op);
  VectorXd lo(3), hi(3);
  lo << 0, 2, 4;
  hi << 10, 12, 14;
  CHECK((small.eps_min - lo).norm() == 0.0);
  CHECK((small.eps_max - hi).norm() == 0.0);

  // Constant-bound boxes keep their constant bounds at the knots.
  auto cbox = estimate_constant((VectorXd(3) << 1, 2, 3).finished(), 50);
  auto cs = downsample_box(cbox, build_downsample(50, 12));
  CHECK((cs.eps_min - VectorXd::Constant(6, 2.0)).norm() == 0.0);
  CHECK((cs.eps_max - VectorXd::Constant(6, 4.0)).norm() == 0.0);

  // Time-varying boxes evaluate the linear-in-k formulas at knot indices.
  VectorXd saw(4);
  saw << 0.0, 0.1, 0.0, 0.1;
  auto tbox = estimate_timevarying(saw, 50, 0.05);
  auto op50 = build_downsample(50, 12);
  auto ts = downsample_box(tbox, op50);
  for (int j = 0; j < ts.dim(); ++j) {
    const int k = op50.knots[j] + 1;
    CHECK(ts.eps_min(j) == doctest::Approx(0.1 - (2.0 / 3.0) * k * 0.05));
    CHECK(ts.eps_max(j) == doctest::Approx(0.1 + (10.0 / 3.0) * k * 0.05));
  }
}

TEST_CASE("vertex enumeration") {
  DisturbanceBox box;
  box.eps_min = VectorXd::Constant(2, -1.0);
  box.eps_max = VectorXd::Constant(2, 1.0);
  MatrixXd V = enumerate_vertices(box);
  CHECK(V.cols() == 4);
  std::set<std::pair<double, double>> seen;
  for (int j = 0; j < 4; ++j) seen.insert({V(0, j), V(1, j)});
  CHECK(seen.size() == 4);
  for (auto& [a, b] : seen) {
    CHECK(std::abs(a) == 1.0);
    CHECK(std::abs(b) == 1.0);
  }

  DisturbanceBox mixed;
  mixed.eps_min.resize(3);
  mixed.eps_max.resize(3);
  mixed.eps_min << -1, 0.5, -2;
  mixed.eps_max << 1, 0.5, 3;
  MatrixXd Vm = enumerate_vertices(mixed);
  CHECK(Vm.cols() == 4);
  for (int j = 0; j < 4; ++j) CHECK(Vm(1, j) == 0.5);

  DisturbanceBox too_big;
  too_big.eps_min = VectorXd::Constant(21, -1.0);
  too_big.eps_max = VectorXd::Constant(21, 1.0);
  CHECK_THROWS_AS(enumerate_vertices(too_big), std::length_error);
  // A wide but fully degenerate box is still cheap to enumerate.
  CHECK(enumerate_vertices(estimate_zero(50)).cols() == 1);
}

TEST_CASE("estimator properties over random histories") {
  Rng rng(2024);
  const double dt = 0.05;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T_ini = 3 + static_cast<int>(rng.raw() % 18);
    const int N = 3 + static_cast<int>(rng.raw() % 48);
    VectorXd hist(T_ini);
    for (int k = 0; k < T_ini; ++k) hist(k) = rng.uniform(-5, 5);

    auto cbox = estimate_constant(hist, N);
    auto tbox = estimate_timevarying(hist, N, dt);
    CHECK((cbox.eps_max - cbox.eps_min).minCoeff() >= 0.0);
    CHECK((tbox.eps_max - tbox.eps_min).minCoeff() >= 0.0);

    // One-step containment of the constant-acceleration continuation.
    const double cur = hist(T_ini - 1);
    const double a_cur = (hist(T_ini - 1) - hist(T_ini - 2)) / dt;
    CHECK(tbox.eps_min(0) <= cur + a_cur * dt + 1e-12);
    CHECK(tbox.eps_max(0) >= cur + a_cur * dt - 1e-12);
    // The constant box brackets the current value.
    CHECK(cbox.eps_min(0) <= cur + 1e-12);
    CHECK(cbox.eps_max(0) >= cur - 1e-12);

    if (N >= 3) {
      const int T_s = 1 + static_cast<int>(rng.raw() % (N - 2));
      auto op = build_downsample(N, T_s);
      CHECK(op.n_eps() == (N - 2) / T_s + 2);
      for (int r = 0; r < N; ++r) {
        int nnz = 0;
        double sum = 0;
        for (int c = 0; c < op.n_eps(); ++c) {
          if (op.E(r, c) != 0.0) {
            ++nnz;
            CHECK(op.E(r, c) >= 0.0);
            CHECK(op.E(r, c) <= 1.0);
          }
          sum += op.E(r, c);
        }
        CHECK(nnz <= 2);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }

      if (op.n_eps() <= 12) {
        auto small = downsample_box(tbox, op);
        MatrixXd V = enumerate_vertices(small);
        int d = 0;
        for (int i = 0; i < small.dim(); ++i)
          if (!small.degenerate(i)) ++d;
        CHECK(V.cols() == (1L << d));
        for (int j = 0; j < V.cols(); ++j)
          for (int i = 0; i < small.dim(); ++i) {
            const bool at_min = V(i, j) == small.eps_min(i);
            const bool at_max = V(i, j) == small.eps_max(i);
            CHECK((at_min || at_max));
          }
      }
    }
  }
}
