#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "maslov/assembly.hpp"
#include "maslov/grid.hpp"
#include "maslov/symplectic.hpp"

namespace maslov {

struct DirichletSpectrumHit : std::runtime_error {
  double near_zero_eig;
  explicit DirichletSpectrumHit(double mu)
      : std::runtime_error("0 is in the discrete Dirichlet spectrum at this s "
                           "(nearest eigenvalue " + std::to_string(mu) + ")"),
        near_zero_eig(mu) {}
};

struct NeumannSpectrumHit : std::runtime_error {
  double near_zero_eig;
  explicit NeumannSpectrumHit(double mu)
      : std::runtime_error("0 is in the discrete Neumann spectrum at this s "
                           "(nearest eigenvalue " + std::to_string(mu) + ")"),
        near_zero_eig(mu) {}
};

enum class TraceMapKind { DtN, NtD };

/// Discrete Dirichlet-to-Neumann / Neumann-to-Dirichlet map of L_s (no
/// rescaling): N_L f = -gamma_N u_D, M_L g = gamma_D u_N.
struct DtNMap {
  MatrixXd matrix;  // m x m on raw boundary coordinates
  TraceMapKind kind = TraceMapKind::DtN;
  double s = 0.0, lambda = 0.0, t = 1.0;
  double sigma_min = 0.0;  // smallest |eigenvalue| of the solve block
  double sym_defect = 0.0; // relative asymmetry of M_b * matrix
};

namespace detail {

struct FreeOperatorParts {
  MatrixXd A;                 // free operator, full node space
  std::vector<int> int_dof;   // interior dof indices
  std::vector<int> bnd_dof;   // boundary dof indices (b*N+c order)
};

inline FreeOperatorParts free_operator_parts(const StiffnessMass& sm,
                                             const std::vector<MatrixXd>& Vsamp,
                                             double t, double lambda) {
  FreeOperatorParts parts;
  parts.A = assemble_free_operator(sm, Vsamp, t, lambda);
  const GridDomain& g = *sm.grid;
  for (int ii : g.interior_nodes)
    for (int c = 0; c < sm.N; ++c) parts.int_dof.push_back(ii * sm.N + c);
  for (int id : g.boundary_nodes)
    for (int c = 0; c < sm.N; ++c) parts.bnd_dof.push_back(id * sm.N + c);
  return parts;
}

inline MatrixXd submatrix(const MatrixXd& A, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  MatrixXd S(rows.size(), cols.size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols.size(); ++j) S(i, j) = A(rows[i], cols[j]);
  return S;
}

inline double smallest_abs_eig(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().minCoeff();
}

inline double rel_sym_defect(const MatrixXd& weighted) {
  const double scale = std::max(1.0, weighted.norm());
  return (weighted - weighted.transpose()).norm() / scale;
}

}  // namespace detail

inline DtNMap dirichlet_to_neumann(const GridDomain& grid,
                                   const StiffnessMass& sm,
                                   const PotentialField& field,
                                   const GammaPath& path, double s) {
  const auto pt = path.eval(s);
  const auto Vsamp = sample_potential(field, grid, pt.t);
  const auto parts = detail::free_operator_parts(sm, Vsamp, pt.t, pt.lambda);
  const MatrixXd AII = detail::submatrix(parts.A, parts.int_dof, parts.int_dof);
  const MatrixXd AIB = detail::submatrix(parts.A, parts.int_dof, parts.bnd_dof);
  const MatrixXd ABB = detail::submatrix(parts.A, parts.bnd_dof, parts.bnd_dof);

  const double sig = detail::smallest_abs_eig(AII);
  if (sig <= 1e-10 * std::max(1.0, AII.norm())) throw DirichletSpectrumHit(sig);

  const MatrixXd schur = ABB - AIB.transpose() * AII.ldlt().solve(AIB);
  // residual / M_b gives gamma_N; N_L = -gamma_N of the harmonic extension
  const int nb = grid.num_boundary(), N = sm.N;
  MatrixXd NL = -schur;
  for (int b = 0; b < nb; ++b)
    for (int c = 0; c < N; ++c) NL.row(b * N + c) /= sm.M_b_scalar[b];

  DtNMap map;
  map.matrix = std::move(NL);
  map.kind = TraceMapKind::DtN;
  map.s = s;
  map.lambda = pt.lambda;
  map.t = pt.t;
  map.sigma_min = sig;
  MatrixXd weighted = map.matrix;
  for (int b = 0; b < nb; ++b)
    for (int c = 0; c < N; ++c) weighted.row(b * N + c) *= sm.M_b_scalar[b];
  map.sym_defect = detail::rel_sym_defect(weighted);
  return map;
}

inline DtNMap neumann_to_dirichlet(const GridDomain& grid,
                                   const StiffnessMass& sm,
                                   const PotentialField& field,
                                   const GammaPath& path, double s) {
  const auto pt = path.eval(s);
  const auto Vsamp = sample_potential(field, grid, pt.t);
  const auto parts = detail::free_operator_parts(sm, Vsamp, pt.t, pt.lambda);

  const double sig = detail::smallest_abs_eig(parts.A);
  if (sig <= 1e-10 * std::max(1.0, parts.A.norm())) throw NeumannSpectrumHit(sig);

  // solve A u = gamma_D^T M_b g for each boundary basis vector g
  const int nb = grid.num_boundary(), N = sm.N;
  const int m = nb * N;
  MatrixXd rhs = MatrixXd::Zero(parts.A.rows(), m);
  for (int b = 0; b < nb; ++b)
    for (int c = 0; c < N; ++c)
      rhs(grid.boundary_nodes[b] * N + c, b * N + c) = sm.M_b_scalar[b];
  const MatrixXd U = parts.A.ldlt().solve(rhs);
  MatrixXd ML(m, m);
  for (int b = 0; b < nb; ++b)
    for (int c = 0; c < N; ++c)
      ML.row(b * N + c) = U.row(grid.boundary_nodes[b] * N + c);

  DtNMap map;
  map.matrix = std::move(ML);
  map.kind = TraceMapKind::NtD;
  map.s = s;
  map.lambda = pt.lambda;
  map.t = pt.t;
  map.sigma_min = sig;
  MatrixXd weighted = map.matrix;
  for (int b = 0; b < nb; ++b)
    for (int c = 0; c < N; ++c) weighted.row(b * N + c) *= sm.M_b_scalar[b];
  map.sym_defect = detail::rel_sym_defect(weighted);
  return map;
}

/// Trace subspace Upsilon(s) = { (gamma_D u, t^{-1} gamma_N u) : L_s u = 0 }
/// as a Lagrangian frame.  Built from whichever of the DtN / NtD routes is
/// better conditioned; near a Dirichlet spectrum hit the NtD graph keeps the
/// subspace smooth even though the DtN map blows up.
inline LagrangianFrame upsilon_frame(const GridDomain& grid,
                                     const StiffnessMass& sm,
                                     const PotentialField& field,
                                     const SymplecticSpace& space,
                                     const GammaPath& path, double s) {
  const double switch_tol = 1e-10;
  DtNMap dtn, ntd;
  bool have_dtn = false, have_ntd = false;
  try {
    dtn = dirichlet_to_neumann(grid, sm, field, path, s);
    have_dtn = dtn.sigma_min > switch_tol * std::max(1.0, dtn.matrix.norm());
  } catch (const DirichletSpectrumHit&) {}
  try {
    ntd = neumann_to_dirichlet(grid, sm, field, path, s);
    have_ntd = true;
  } catch (const NeumannSpectrumHit&) {}
  if (!have_dtn && !have_ntd)
    throw std::runtime_error(
        "upsilon_frame: simultaneous Dirichlet and Neumann spectrum hit; "
        "perturb s");

  const double t = path.eval(s).t;
  if (have_ntd && (!have_dtn || ntd.sigma_min >= dtn.sigma_min)) {
    // subspace = { (t M_L g, g) }, the inverse graph of t M_L
    return build_graph_lagrangian(t * ntd.matrix, GraphMode::InverseGraph,
                                  space);
  }
  // graph of the rescaled map N_s = -t^{-1} N_L: second component t^{-1}gamma_N
  return build_graph_lagrangian(-dtn.matrix / t, GraphMode::Graph, space);
}

}  // namespace maslov
