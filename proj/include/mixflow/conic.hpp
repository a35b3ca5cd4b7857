#pragma once

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace mixflow {

enum class ConeKind { Zero, NonNegative, SecondOrder };

struct ConeSpec {
  ConeKind kind = ConeKind::NonNegative;
  int size = 0;
};

/// One cone's rows of the stacked constraint matrix. The matrix block is
/// held by shared pointer so programs with repeated structure (one block per
/// disturbance vertex, say) can alias a single allocation; the solver
/// aggregates sections that share a block.
struct ConeSection {
  ConeSpec cone;
  std::shared_ptr<const Eigen::MatrixXd> A;  // cone.size x num_vars
  Eigen::VectorXd c;                         // cone.size
};

/// Standard conic dual form
///   maximize    b'y
///   subject to  A'y + s = c,  s in K,
/// with K an ordered product of zero cones, nonnegative orthants and
/// second-order cones. Rows of A' are stored per cone section.
struct ConicProgram {
  int num_vars = 0;
  Eigen::VectorXd b;
  std::vector<ConeSection> sections;

  int total_rows() const;
  std::vector<ConeSpec> cones() const;
  /// Stacked dense A' (total_rows x num_vars).
  Eigen::MatrixXd dense_At() const;
  Eigen::VectorXd dense_c() const;
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalLimit };

const char* to_string(SolveStatus s);

struct SolverSettings {
  double feas_tol = 1e-7;
  double abs_gap_tol = 1e-8;
  double rel_gap_tol = 1e-8;
  int max_iters = 100;
  double static_reg = 1e-11;
  bool verbose = false;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalLimit;
  Eigen::VectorXd y;  // decision vector
  Eigen::VectorXd s;  // stacked slack, section order
  double objective = std::numeric_limits<double>::quiet_NaN();  // b'y
  int iterations = 0;
  double solve_seconds = 0.0;
  double primal_residual = std::numeric_limits<double>::quiet_NaN();
  double dual_residual = std::numeric_limits<double>::quiet_NaN();
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
};

/// Homogeneous self-dual interior-point backend.
ConicSolution solve_conic_native(const ConicProgram& cp, const SolverSettings& settings = {});

/// Dispatches on the MIXFLOW_SOLVER environment variable ("native" is the
/// only backend compiled in by default). Throws on unknown names.
ConicSolution solve_conic(const ConicProgram& cp, const SolverSettings& settings = {});

/// Text interchange format (field order documented in the file header):
/// counts, cone list, b, c, then A' as row/col/value triplets.
void save_conic_program(const ConicProgram& cp, const std::string& path);
ConicProgram load_conic_program(const std::string& path);

}  // namespace mixflow
