#include "mixflow/conic.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mixflow {

int ConicProgram::total_rows() const {
  int rows = 0;
  for (const auto& sec : sections) rows += sec.cone.size;
  return rows;
}

std::vector<ConeSpec> ConicProgram::cones() const {
  std::vector<ConeSpec> out;
  out.reserve(sections.size());
  for (const auto& sec : sections) out.push_back(sec.cone);
  return out;
}

Eigen::MatrixXd ConicProgram::dense_At() const {
  Eigen::MatrixXd At(total_rows(), num_vars);
  int at = 0;
  for (const auto& sec : sections) {
    At.middleRows(at, sec.cone.size) = *sec.A;
    at += sec.cone.size;
  }
  return At;
}

Eigen::VectorXd ConicProgram::dense_c() const {
  Eigen::VectorXd c(total_rows());
  int at = 0;
  for (const auto& sec : sections) {
    c.segment(at, sec.cone.size) = sec.c;
    at += sec.cone.size;
  }
  return c;
}

void ConicProgram::validate() const {
  if (num_vars < 1) throw std::invalid_argument("ConicProgram: no decision variables");
  if (b.size() != num_vars) throw std::invalid_argument("ConicProgram: objective size mismatch");
  if (sections.empty()) throw std::invalid_argument("ConicProgram: no constraints");
  for (const auto& sec : sections) {
    if (!sec.A) throw std::invalid_argument("ConicProgram: null section block");
    if (sec.cone.size < 1 || sec.A->rows() != sec.cone.size || sec.A->cols() != num_vars ||
        sec.c.size() != sec.cone.size)
      throw std::invalid_argument("ConicProgram: section dimension mismatch");
    if (sec.cone.kind == ConeKind::SecondOrder && sec.cone.size < 2)
      throw std::invalid_argument("ConicProgram: second-order cone needs size >= 2");
  }
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalLimit: return "numerical-limit";
  }
  return "unknown";
}

ConicSolution solve_conic(const ConicProgram& cp, const SolverSettings& settings) {
  const char* env = std::getenv("MIXFLOW_SOLVER");
  const std::string backend = env ? env : "native";
  if (backend == "native") return solve_conic_native(cp, settings);
  throw std::runtime_error("solve_conic: unknown backend '" + backend +
                           "' requested via MIXFLOW_SOLVER");
}

namespace {
char cone_tag(ConeKind k) {
  switch (k) {
    case ConeKind::Zero: return 'z';
    case ConeKind::NonNegative: return 'o';
    case ConeKind::SecondOrder: return 's';
  }
  return '?';
}
ConeKind cone_from_tag(char t) {
  switch (t) {
    case 'z': return ConeKind::Zero;
    case 'o': return ConeKind::NonNegative;
    case 's': return ConeKind::SecondOrder;
  }
  throw std::runtime_error("load_conic_program: bad cone tag");
}
}  // namespace

void save_conic_program(const ConicProgram& cp, const std::string& path) {
  cp.validate();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_conic_program: cannot open " + path);
  f.precision(17);
  f << "# mixflow conic program, dual form: max b'y s.t. A'y + s = c, s in K\n";
  f << "# fields in order: 'dims num_vars rows num_cones', then one cone per\n";
  f << "# line 'cone <z|o|s> <size>', then 'b <num_vars values>', then\n";
  f << "# 'c <rows values>', then nonzeros of A' one per line 'row col value'\n";
  f << "# with 0-based row/col indices, row-major over the stacked sections.\n";
  f << "dims " << cp.num_vars << " " << cp.total_rows() << " " << cp.sections.size() << "\n";
  for (const auto& sec : cp.sections) f << "cone " << cone_tag(sec.cone.kind) << " " << sec.cone.size << "\n";
  f << "b";
  for (int i = 0; i < cp.num_vars; ++i) f << " " << cp.b(i);
  f << "\nc";
  const Eigen::VectorXd c = cp.dense_c();
  for (int i = 0; i < c.size(); ++i) f << " " << c(i);
  f << "\n";
  int row0 = 0;
  for (const auto& sec : cp.sections) {
    const auto& A = *sec.A;
    for (int r = 0; r < A.rows(); ++r)
      for (int j = 0; j < A.cols(); ++j)
        if (A(r, j) != 0.0) f << row0 + r << " " << j << " " << A(r, j) << "\n";
    row0 += sec.cone.size;
  }
}

ConicProgram load_conic_program(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_conic_program: cannot open " + path);
  ConicProgram cp;
  std::string line;
  int rows = 0, ncones = 0;
  std::vector<ConeSpec> cones;
  Eigen::VectorXd c;
  Eigen::MatrixXd At;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "dims") {
      ss >> cp.num_vars >> rows >> ncones;
      At = Eigen::MatrixXd::Zero(rows, cp.num_vars);
      c.resize(rows);
      cp.b.resize(cp.num_vars);
    } else if (tok == "cone") {
      char tag;
      int size;
      ss >> tag >> size;
      cones.push_back({cone_from_tag(tag), size});
    } else if (tok == "b") {
      for (int i = 0; i < cp.num_vars; ++i) ss >> cp.b(i);
    } else if (tok == "c") {
      for (int i = 0; i < rows; ++i) ss >> c(i);
    } else {
      const int r = std::stoi(tok);
      int col;
      double v;
      ss >> col >> v;
      At(r, col) = v;
    }
  }
  if (static_cast<int>(cones.size()) != ncones)
    throw std::runtime_error("load_conic_program: cone count mismatch");
  int at = 0;
  for (const auto& spec : cones) {
    ConeSection sec;
    sec.cone = spec;
    sec.A = std::make_shared<Eigen::MatrixXd>(At.middleRows(at, spec.size));
    sec.c = c.segment(at, spec.size);
    at += spec.size;
    cp.sections.push_back(std::move(sec));
  }
  cp.validate();
  return cp;
}

}  // namespace mixflow
