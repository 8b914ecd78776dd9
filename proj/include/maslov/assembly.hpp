#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "maslov/grid.hpp"
#include "maslov/symplectic.hpp"

namespace maslov {

/// Natural (Neumann-form) stiffness from the discrete Dirichlet energy
/// (1/2) sum_edges |u_i - u_j|^2 / h^2 * h^d, plus diagonal volume and
/// boundary masses.  Constants are exactly in the kernel of K.
struct StiffnessMass {
  const GridDomain* grid = nullptr;
  int N = 1;
  MatrixXd K_scalar;       // num_nodes x num_nodes
  VectorXd M_vol_scalar;   // per node
  VectorXd M_b_scalar;     // per boundary node

  int dof() const { return grid->num_nodes * N; }
  int boundary_dof() const { return grid->num_boundary() * N; }
};

inline StiffnessMass build_stiffness_mass(const GridDomain& grid, int N) {
  if (N < 1) throw std::invalid_argument("stiffness: N must be positive");
  StiffnessMass sm;
  sm.grid = &grid;
  sm.N = N;
  sm.M_vol_scalar = grid.volume_weights;
  sm.M_b_scalar = grid.boundary_weights;
  const int P = grid.num_nodes;
  sm.K_scalar = MatrixXd::Zero(P, P);
  const double c = std::pow(grid.h, grid.d) / (grid.h * grid.h);
  auto add_edge = [&](int i, int j) {
    sm.K_scalar(i, i) += c;
    sm.K_scalar(j, j) += c;
    sm.K_scalar(i, j) -= c;
    sm.K_scalar(j, i) -= c;
  };
  if (grid.d == 1) {
    for (int i = 0; i + 1 < grid.n; ++i) add_edge(i, i + 1);
  } else {
    const int n = grid.n;
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const int id = ix + n * iy;
        if (ix + 1 < n) add_edge(id, id + 1);
        if (iy + 1 < n) add_edge(id, id + n);
      }
  }
  return sm;
}

/// Boundary condition in the sense of the Lagrangian subspace G:
/// Neumann-based G = Gr(Theta) with gamma_N u = t Theta gamma_D u,
/// Dirichlet-based G = Gr'(Theta') with t gamma_D u = Theta' gamma_N u.
/// Theta / Theta' act pointwise on boundary values via a constant symmetric
/// NxN matrix.
struct BoundaryCondition {
  enum class Kind { NeumannBased, DirichletBased };
  Kind kind = Kind::NeumannBased;
  MatrixXd theta;  // NxN, symmetric; Theta for Neumann-based, Theta' otherwise

  static BoundaryCondition neumann(int N = 1) {
    return {Kind::NeumannBased, MatrixXd::Zero(N, N)};
  }
  static BoundaryCondition dirichlet(int N = 1) {
    return {Kind::DirichletBased, MatrixXd::Zero(N, N)};
  }
  static BoundaryCondition robin(double th, int N = 1) {
    return {Kind::NeumannBased, th * MatrixXd::Identity(N, N)};
  }
  static BoundaryCondition robin_matrix(const MatrixXd& th) {
    if (!th.isApprox(th.transpose(), 1e-10))
      throw std::invalid_argument("bc: theta matrix must be symmetric");
    return {Kind::NeumannBased, th};
  }
  static BoundaryCondition dirichlet_based(const MatrixXd& thp) {
    if (!thp.isApprox(thp.transpose(), 1e-10))
      throw std::invalid_argument("bc: theta' matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(thp);
    const double scale = std::max(1.0, thp.norm());
    if (es.eigenvalues().maxCoeff() > 1e-10 * scale)
      throw std::invalid_argument(
          "bc: Dirichlet-based theta' must be nonpositive");
    return {Kind::DirichletBased, thp};
  }

  int N() const { return static_cast<int>(theta.rows()); }
  bool is_pure_dirichlet() const {
    return kind == Kind::DirichletBased && theta.norm() == 0.0;
  }
};

/// Counterclockwise parametrization of the boundary of [-Lambda,0]x[tau,1]:
/// Sigma_1 = [-Lambda, 0]                    lambda = s,          t = tau
/// Sigma_2 = [0, 1-tau]                      lambda = 0,          t = s + tau
/// Sigma_3 = [1-tau, 1-tau+Lambda]           lambda = -s + 1-tau, t = 1
/// Sigma_4 = [1-tau+Lambda, 2(1-tau)+Lambda] lambda = -Lambda,    t decreasing
struct GammaPath {
  double tau = 0.0;
  double Lambda = 0.0;

  struct Point {
    double lambda = 0.0;
    double t = 0.0;
    int segment = 0;  // 1..4
  };

  GammaPath(double tau_, double Lambda_) : tau(tau_), Lambda(Lambda_) {
    if (!(tau > 0.0 && tau <= 1.0))
      throw std::invalid_argument("path: tau must be in (0,1]");
    if (!(Lambda > 0.0)) throw std::invalid_argument("path: Lambda must be > 0");
  }

  double seg_start(int j) const {
    switch (j) {
      case 1: return -Lambda;
      case 2: return 0.0;
      case 3: return 1.0 - tau;
      case 4: return 1.0 - tau + Lambda;
    }
    throw std::invalid_argument("path: segment out of range");
  }
  double seg_end(int j) const {
    return j == 4 ? 2.0 * (1.0 - tau) + Lambda : seg_start(j + 1);
  }

  Point eval(double s) const {
    const double eps = 1e-12 * std::max(1.0, Lambda);
    if (s < -Lambda - eps || s > 2.0 * (1.0 - tau) + Lambda + eps)
      throw std::invalid_argument("path: s out of range");
    Point p;
    if (s < 0.0) {  // half-open: junction points report the later segment
      p = {s, tau, 1};
    } else if (s < 1.0 - tau) {
      p = {0.0, s + tau, 2};
    } else if (s < 1.0 - tau + Lambda) {
      p = {-s + 1.0 - tau, 1.0, 3};
    } else {
      p = {-Lambda, -s + 2.0 - tau + Lambda, 4};
    }
    return p;
  }
};

/// Assembled symmetric pencil for L_{s,G}(tau): generalized eigenproblem
/// A x = mu M x on a reduced dof set (Dirichlet-constrained directions
/// eliminated).  u_full = P * x.
struct SchrodingerPencil {
  MatrixXd A;
  MatrixXd M;
  MatrixXd P;  // full_dof x reduced_dof
  double s = 0.0, lambda = 0.0, t = 1.0;
  int segment = 0;
  const GridDomain* grid = nullptr;
  const StiffnessMass* sm = nullptr;
  int N = 1;
};

namespace detail {

// K (+ blockdiag V_s M_vol) on the full node space, V_s = t^2 (V(t x) - lambda)
inline MatrixXd assemble_free_operator(const StiffnessMass& sm,
                                       const std::vector<MatrixXd>& Vsamp,
                                       double t, double lambda) {
  const GridDomain& g = *sm.grid;
  const int N = sm.N, P = g.num_nodes;
  MatrixXd A = MatrixXd::Zero(P * N, P * N);
  if (N == 1) {
    A = sm.K_scalar;
  } else {
    for (int i = 0; i < P; ++i)
      for (int j = 0; j < P; ++j)
        if (sm.K_scalar(i, j) != 0.0)
          for (int c = 0; c < N; ++c) A(i * N + c, j * N + c) = sm.K_scalar(i, j);
  }
  const double t2 = t * t;
  for (int i = 0; i < P; ++i) {
    const MatrixXd Vs =
        t2 * (Vsamp[i] - lambda * MatrixXd::Identity(N, N));
    A.block(i * N, i * N, N, N) += sm.M_vol_scalar[i] * Vs;
  }
  return A;
}

inline void add_boundary_coupling(MatrixXd& A, const StiffnessMass& sm,
                                  const MatrixXd& theta, double coeff) {
  // A += coeff * gamma_D^T M_b Theta gamma_D, Theta pointwise = theta
  const GridDomain& g = *sm.grid;
  const int N = sm.N;
  for (int b = 0; b < g.num_boundary(); ++b) {
    const int id = g.boundary_nodes[b];
    A.block(id * N, id * N, N, N) += coeff * sm.M_b_scalar[b] * theta;
  }
}

}  // namespace detail

inline SchrodingerPencil assemble_pencil(const GridDomain& grid,
                                         const StiffnessMass& sm,
                                         const PotentialField& field,
                                         const BoundaryCondition& bc,
                                         const GammaPath& path, double s) {
  if (field.N != sm.N || field.N != bc.N())
    throw std::invalid_argument("assemble_pencil: N mismatch");
  const auto pt = path.eval(s);
  const auto Vsamp = sample_potential(field, grid, pt.t);
  const int N = sm.N;

  SchrodingerPencil pen;
  pen.s = s;
  pen.lambda = pt.lambda;
  pen.t = pt.t;
  pen.segment = pt.segment;
  pen.grid = &grid;
  pen.sm = &sm;
  pen.N = N;

  MatrixXd A = detail::assemble_free_operator(sm, Vsamp, pt.t, pt.lambda);
  const int full = sm.dof();

  if (bc.kind == BoundaryCondition::Kind::NeumannBased) {
    detail::add_boundary_coupling(A, sm, bc.theta, -pt.t);
    pen.A = std::move(A);
    pen.M = MatrixXd::Zero(full, full);
    for (int i = 0; i < grid.num_nodes; ++i)
      for (int c = 0; c < N; ++c)
        pen.M(i * N + c, i * N + c) = sm.M_vol_scalar[i];
    pen.P = MatrixXd::Identity(full, full);
    return pen;
  }

  // Dirichlet-based: split theta' spectrally; zero modes are hard Dirichlet
  // constraints, strictly negative modes become Robin couplings with
  // coefficient t/d_k (gamma_N = (t/d_k) gamma_D on that mode).
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(bc.theta);
  const double scale = std::max(1.0, bc.theta.norm());
  std::vector<int> robin_modes;
  for (int j = 0; j < N; ++j) {
    const double dj = es.eigenvalues()[j];
    if (dj > 1e-10 * scale)
      throw std::invalid_argument("assemble_pencil: indefinite theta'");
    if (dj < -1e-10 * scale) robin_modes.push_back(j);
  }
  const int nb = grid.num_boundary();
  const int nred = grid.num_interior() * N +
                   nb * static_cast<int>(robin_modes.size());
  MatrixXd P = MatrixXd::Zero(full, nred);
  int col = 0;
  for (int ii : grid.interior_nodes)
    for (int c = 0; c < N; ++c) P(ii * N + c, col++) = 1.0;
  for (int b = 0; b < nb; ++b) {
    const int id = grid.boundary_nodes[b];
    for (int j : robin_modes) {
      for (int c = 0; c < N; ++c) P(id * N + c, col) = es.eigenvectors()(c, j);
      ++col;
    }
  }
  // Robin coupling on the surviving boundary modes
  if (!robin_modes.empty()) {
    MatrixXd theta_eff = MatrixXd::Zero(N, N);
    for (int j : robin_modes)
      theta_eff += (1.0 / es.eigenvalues()[j]) *
                   es.eigenvectors().col(j) * es.eigenvectors().col(j).transpose();
    detail::add_boundary_coupling(A, sm, theta_eff, -pt.t);
  }
  MatrixXd Mfull = MatrixXd::Zero(full, full);
  for (int i = 0; i < grid.num_nodes; ++i)
    for (int c = 0; c < N; ++c)
      Mfull(i * N + c, i * N + c) = sm.M_vol_scalar[i];
  pen.A = P.transpose() * A * P;
  pen.M = P.transpose() * Mfull * P;
  pen.P = std::move(P);
  return pen;
}

struct SpectrumResult {
  int negative_count = 0;
  VectorXd eigenvalues;  // ascending
  MatrixXd vectors;      // reduced coordinates, M-orthonormal
  double zero_tol = 0.0;
};

inline SpectrumResult pencil_spectrum(const SchrodingerPencil& pen,
                                      double zero_tol = -1.0) {
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(pen.A, pen.M);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("pencil_spectrum: eigensolver failed");
  SpectrumResult r;
  r.eigenvalues = es.eigenvalues();
  r.vectors = es.eigenvectors();
  const double emax = r.eigenvalues.cwiseAbs().maxCoeff();
  r.zero_tol = zero_tol > 0.0 ? zero_tol : 1e-8 * emax;
  r.negative_count =
      static_cast<int>((r.eigenvalues.array() < -r.zero_tol).count());
  return r;
}

/// Eigenvalues only — cheaper than pencil_spectrum when vectors are not needed
/// (crossing detection samples many pencils).
inline SpectrumResult pencil_eigenvalues(const SchrodingerPencil& pen,
                                         double zero_tol = -1.0) {
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(
      pen.A, pen.M, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("pencil_eigenvalues: eigensolver failed");
  SpectrumResult r;
  r.eigenvalues = es.eigenvalues();
  const double emax = r.eigenvalues.cwiseAbs().maxCoeff();
  r.zero_tol = zero_tol > 0.0 ? zero_tol : 1e-8 * emax;
  r.negative_count =
      static_cast<int>((r.eigenvalues.array() < -r.zero_tol).count());
  return r;
}

inline int morse_index(const SchrodingerPencil& pen, double zero_tol = -1.0) {
  return pencil_eigenvalues(pen, zero_tol).negative_count;
}

/// M_vol-orthonormal kernel vectors on the full node space.
inline std::vector<VectorXd> kernel_basis(const SchrodingerPencil& pen,
                                          double zero_tol = -1.0) {
  const auto sp = pencil_spectrum(pen, zero_tol);
  std::vector<VectorXd> out;
  for (int i = 0; i < sp.eigenvalues.size(); ++i)
    if (std::abs(sp.eigenvalues[i]) <= sp.zero_tol)
      out.push_back(pen.P * sp.vectors.col(i));
  return out;
}

/// Weak Neumann trace from the boundary residual of the free operator, so
/// that the discrete Green identity holds to round-off:
/// <gamma_N u, gamma_D phi>_{M_b} = (grad phi, grad u)_h + (V_s u, phi)_{M_vol}.
/// Requires u to satisfy the interior equations.
inline VectorXd weak_neumann_trace(const VectorXd& u, const StiffnessMass& sm,
                                   const std::vector<MatrixXd>& Vsamp, double t,
                                   double lambda) {
  const GridDomain& g = *sm.grid;
  const int N = sm.N;
  const MatrixXd A = detail::assemble_free_operator(sm, Vsamp, t, lambda);
  const VectorXd r = A * u;
  double int_res = 0.0;
  for (int ii : g.interior_nodes)
    for (int c = 0; c < N; ++c) int_res = std::max(int_res, std::abs(r[ii * N + c]));
  const double scale = std::max(1.0, A.norm() * u.norm());
  if (int_res > 1e-9 * scale)
    throw std::invalid_argument(
        "weak_neumann_trace: u is not a discrete weak solution (residual " +
        std::to_string(int_res) + ")");
  VectorXd gn(g.num_boundary() * N);
  for (int b = 0; b < g.num_boundary(); ++b) {
    const int id = g.boundary_nodes[b];
    for (int c = 0; c < N; ++c)
      gn[b * N + c] = r[id * N + c] / sm.M_b_scalar[b];
  }
  return gn;
}

inline VectorXd dirichlet_trace(const VectorXd& u, const StiffnessMass& sm) {
  const GridDomain& g = *sm.grid;
  const int N = sm.N;
  VectorXd f(g.num_boundary() * N);
  for (int b = 0; b < g.num_boundary(); ++b)
    for (int c = 0; c < N; ++c) f[b * N + c] = u[g.boundary_nodes[b] * N + c];
  return f;
}

/// Boundary symplectic space: weights are the boundary quadrature masses,
/// replicated across the N components.
inline SymplecticSpace boundary_space(const GridDomain& grid, int N) {
  VectorXd w(grid.num_boundary() * N);
  for (int b = 0; b < grid.num_boundary(); ++b)
    for (int c = 0; c < N; ++c) w[b * N + c] = grid.boundary_weights[b];
  return SymplecticSpace(std::move(w));
}

/// Reference Lagrangian G for a boundary condition.
inline LagrangianFrame reference_frame(const BoundaryCondition& bc,
                                       const SymplecticSpace& space,
                                       const GridDomain& grid) {
  const int N = bc.N();
  const int m = space.half_dim;
  MatrixXd Th = MatrixXd::Zero(m, m);
  for (int b = 0; b < grid.num_boundary(); ++b)
    Th.block(b * N, b * N, N, N) = bc.theta;
  return build_graph_lagrangian(Th,
                                bc.kind == BoundaryCondition::Kind::NeumannBased
                                    ? GraphMode::Graph
                                    : GraphMode::InverseGraph,
                                space);
}

/// Lambda large enough that Sigma_4 is crossing-free: with c the measured
/// lower spectral bound over Sigma_2, Lambda = (max(0,-c)+1)/tau^2 shifts the
/// mirrored operators by Lambda t^2 >= |c|+1.
inline double auto_select_lambda(const GridDomain& grid, const StiffnessMass& sm,
                                 const PotentialField& field,
                                 const BoundaryCondition& bc, double tau,
                                 int n_samples = 21) {
  GammaPath probe(tau, 1.0);  // Lambda irrelevant for Sigma_2 points
  double cmin = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double s = (1.0 - tau) * i / (n_samples - 1.0);
    const auto pen = assemble_pencil(grid, sm, field, bc, probe, s);
    const auto sp = pencil_spectrum(pen);
    cmin = std::min(cmin, sp.eigenvalues.minCoeff());
  }
  return (std::max(0.0, -cmin) + 1.0) / (tau * tau);
}

}  // namespace maslov
