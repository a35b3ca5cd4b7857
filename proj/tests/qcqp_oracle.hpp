#pragma once

// Test-only reference solver for the robust vertex program
//   min_xd  max_j  q_j(xd)
//   s.t.    B xd <= beta,
// with q_j(xd) = xd' Mdd xd + (dd + 2 Mdw w_j)' xd + const_j. A primal
// log-barrier Newton method over the epigraph variable (t, xd): slow, dense
// and entirely independent of the conic pipeline it is used to check.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "mixflow/robust.hpp"

namespace oracle {

struct QcqpResult {
  double objective = std::numeric_limits<double>::quiet_NaN();  // includes c0
  Eigen::VectorXd xd;
  bool converged = false;
};

inline QcqpResult solve_vertex_qcqp(const mixflow::RobustQP& qp, const Eigen::MatrixXd& vertices,
                                    double barrier_target = 1e10) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const auto& L = qp.layout();
  const int nd = L.n_u + L.n_sigma;
  const int ne = L.n_eps;
  const int n_v = static_cast<int>(vertices.cols());

  const MatrixXd Mdd = qp.M().topLeftCorner(nd, nd);
  const MatrixXd Mdw = qp.M().topRightCorner(nd, ne);
  const MatrixXd Mww = qp.M().bottomRightCorner(ne, ne);
  const VectorXd dd = qp.d.head(nd);
  const VectorXd dw = qp.d.tail(ne);

  std::vector<VectorXd> lin(n_v);
  std::vector<double> cst(n_v);
  for (int j = 0; j < n_v; ++j) {
    const VectorXd w = vertices.col(j);
    lin[j] = dd + 2.0 * Mdw * w;
    cst[j] = w.dot(Mww * w) + dw.dot(w);
  }

  // Aggregated linear constraints B xd <= beta over all vertices.
  const MatrixXd P1d = qp.P1().leftCols(nd);
  const MatrixXd P1w = qp.P1().rightCols(ne);
  const int nsp = static_cast<int>(P1d.rows());
  MatrixXd B(2 * nsp + 2 * L.n_u, nd);
  VectorXd beta(B.rows());
  for (int l = 0; l < nsp; ++l) {
    double smax = -std::numeric_limits<double>::infinity();
    double smin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_v; ++j) {
      const double shift = P1w.row(l).dot(vertices.col(j)) + qp.c1(l);
      smax = std::max(smax, shift);
      smin = std::min(smin, shift);
    }
    B.row(l) = P1d.row(l);
    beta(l) = qp.bounds.s_tilde_max - smax;
    B.row(nsp + l) = -P1d.row(l);
    beta(nsp + l) = -(qp.bounds.s_tilde_min - smin);
  }
  B.block(2 * nsp, 0, L.n_u, nd).setZero();
  B.block(2 * nsp, 0, L.n_u, L.n_u).setIdentity();
  beta.segment(2 * nsp, L.n_u).setConstant(qp.bounds.u_max);
  B.block(2 * nsp + L.n_u, 0, L.n_u, nd).setZero();
  B.block(2 * nsp + L.n_u, 0, L.n_u, L.n_u) = -MatrixXd::Identity(L.n_u, L.n_u);
  beta.segment(2 * nsp + L.n_u, L.n_u).setConstant(-qp.bounds.u_min);

  VectorXd xd = VectorXd::Zero(nd);
  if (((B * xd - beta).array() >= -1e-9).any())
    throw std::runtime_error("qcqp oracle: origin is not strictly feasible");

  auto qmax = [&](const VectorXd& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_v; ++j) m = std::max(m, v.dot(Mdd * v) + lin[j].dot(v) + cst[j]);
    return m;
  };
  double t = qmax(xd) + 1.0;

  const int m_total = n_v + static_cast<int>(B.rows());
  double tb = 1.0;
  while (tb < barrier_target) {
    // Newton iterations at this barrier weight.
    for (int newton = 0; newton < 60; ++newton) {
      VectorXd grad = VectorXd::Zero(nd + 1);
      MatrixXd hess = MatrixXd::Zero(nd + 1, nd + 1);
      grad(0) = tb;
      for (int j = 0; j < n_v; ++j) {
        const double qj = xd.dot(Mdd * xd) + lin[j].dot(xd) + cst[j];
        const double gj = t - qj;
        const VectorXd dq = 2.0 * Mdd * xd + lin[j];
        grad(0) -= 1.0 / gj;
        grad.tail(nd) += dq / gj;
        hess(0, 0) += 1.0 / (gj * gj);
        hess.block(0, 1, 1, nd) -= dq.transpose() / (gj * gj);
        hess.block(1, 0, nd, 1) -= dq / (gj * gj);
        hess.block(1, 1, nd, nd) += dq * dq.transpose() / (gj * gj) + 2.0 * Mdd / gj;
      }
      for (int i = 0; i < B.rows(); ++i) {
        const double ri = beta(i) - B.row(i).dot(xd);
        grad.tail(nd) += B.row(i).transpose() / ri;
        hess.block(1, 1, nd, nd) += B.row(i).transpose() * B.row(i) / (ri * ri);
      }
      hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
      VectorXd step = hess.ldlt().solve(-grad);
      const double decrement = -grad.dot(step);
      if (decrement < 1e-14) break;

      double alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        const double t_new = t + alpha * step(0);
        const VectorXd x_new = xd + alpha * step.tail(nd);
        bool ok = ((B * x_new - beta).array() < 0.0).all();
        if (ok) {
          for (int j = 0; j < n_v && ok; ++j) {
            const double qj = x_new.dot(Mdd * x_new) + lin[j].dot(x_new) + cst[j];
            ok = t_new - qj > 0.0;
          }
        }
        if (ok) {
          t = t_new;
          xd = x_new;
          break;
        }
        alpha *= 0.5;
      }
    }
    tb *= 10.0;
  }

  QcqpResult res;
  res.xd = xd;
  res.objective = qmax(xd) + qp.c0;
  res.converged = true;
  return res;
}

}  // namespace oracle
