#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace maslov {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Finite-dimensional model of the boundary trace space H^{1/2} x H^{-1/2}.
/// Coordinates are pairs (f,g) of Dirichlet/Neumann traces; the pairing
/// <g,f> is realized as f^T diag(w) g with w the boundary quadrature masses.
///
/// All frames are stored in sqrt(w)-normalized coordinates, in which the
/// w-weighted inner product is the standard one and the complex structure J
/// takes the block form J(f,g) = (-g,f).
struct SymplecticSpace {
  int half_dim = 0;  // m
  VectorXd weights;  // length m, strictly positive
  VectorXd sqrt_w;
  VectorXd inv_sqrt_w;

  explicit SymplecticSpace(VectorXd w) : weights(std::move(w)) {
    half_dim = static_cast<int>(weights.size());
    if (half_dim == 0) throw std::invalid_argument("symplectic: empty weights");
    if ((weights.array() <= 0.0).any())
      throw std::invalid_argument("symplectic: weights must be positive");
    sqrt_w = weights.array().sqrt();
    inv_sqrt_w = sqrt_w.cwiseInverse();
  }

  int dim() const { return 2 * half_dim; }

  // raw (f,g) -> normalized coordinates
  VectorXd normalize(const VectorXd& x) const {
    check_dim(x);
    VectorXd y(dim());
    y.head(half_dim) = sqrt_w.cwiseProduct(x.head(half_dim));
    y.tail(half_dim) = sqrt_w.cwiseProduct(x.tail(half_dim));
    return y;
  }

  VectorXd denormalize(const VectorXd& y) const {
    check_dim(y);
    VectorXd x(dim());
    x.head(half_dim) = inv_sqrt_w.cwiseProduct(y.head(half_dim));
    x.tail(half_dim) = inv_sqrt_w.cwiseProduct(y.tail(half_dim));
    return x;
  }

  // J in normalized coordinates: (f,g) -> (-g,f); multiplication by i
  MatrixXd complex_structure() const {
    const int m = half_dim;
    MatrixXd J = MatrixXd::Zero(2 * m, 2 * m);
    J.topRightCorner(m, m) = -MatrixXd::Identity(m, m);
    J.bottomLeftCorner(m, m) = MatrixXd::Identity(m, m);
    return J;
  }

  void check_dim(const VectorXd& x) const {
    if (x.size() != dim())
      throw std::invalid_argument("symplectic: vector has wrong dimension");
  }
};

/// omega((f1,g1),(f2,g2)) = <g2,f1>_w - <g1,f2>_w on raw coordinates.
inline double symplectic_form(const VectorXd& x, const VectorXd& y,
                              const SymplecticSpace& space) {
  space.check_dim(x);
  space.check_dim(y);
  const int m = space.half_dim;
  const auto fx = x.head(m), gx = x.tail(m);
  const auto fy = y.head(m), gy = y.tail(m);
  return fx.dot(space.weights.cwiseProduct(gy)) -
         fy.dot(space.weights.cwiseProduct(gx));
}

enum class FrameTag { GraphOfOperator, InverseGraph, Explicit };

/// A k-column orthonormal frame (normalized coordinates) spanning an
/// isotropic subspace; Lagrangian iff k == m.
struct LagrangianFrame {
  const SymplecticSpace* space = nullptr;
  MatrixXd basis;  // 2m x k, orthonormal columns, normalized coordinates
  FrameTag tag = FrameTag::Explicit;

  int k() const { return static_cast<int>(basis.cols()); }
  bool lagrangian() const { return k() == space->half_dim; }
};

namespace detail {

inline MatrixXd orthonormalize(const MatrixXd& cols) {
  Eigen::HouseholderQR<MatrixXd> qr(cols);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(cols.rows(), cols.cols());
  return Q;
}

inline double frame_isotropy_defect(const MatrixXd& basis, int m) {
  // omega in normalized coords has matrix J_std^T acting as below
  const auto F = basis.topRows(m);
  const auto G = basis.bottomRows(m);
  const MatrixXd Om = F.transpose() * G - G.transpose() * F;
  return Om.norm();
}

}  // namespace detail

inline LagrangianFrame make_explicit_frame(const SymplecticSpace& space,
                                           const MatrixXd& raw_cols,
                                           FrameTag tag = FrameTag::Explicit) {
  MatrixXd norm_cols(raw_cols.rows(), raw_cols.cols());
  for (int j = 0; j < raw_cols.cols(); ++j)
    norm_cols.col(j) = space.normalize(raw_cols.col(j));
  LagrangianFrame fr;
  fr.space = &space;
  fr.basis = detail::orthonormalize(norm_cols);
  fr.tag = tag;
  return fr;
}

/// Graph {(f, Af)} or inverse graph {(Ag, g)} of an operator A that is
/// symmetric with respect to the w-pairing (diag(w) A symmetric).
enum class GraphMode { Graph, InverseGraph };

inline LagrangianFrame build_graph_lagrangian(const MatrixXd& A, GraphMode mode,
                                              const SymplecticSpace& space) {
  const int m = space.half_dim;
  if (A.rows() != m || A.cols() != m)
    throw std::invalid_argument("build_graph_lagrangian: operator size mismatch");
  const MatrixXd WA = space.weights.asDiagonal() * A;
  const double scale = std::max(1.0, WA.norm());
  const double defect = (WA - WA.transpose()).norm();
  if (defect > 1e-8 * scale)
    throw std::invalid_argument(
        "build_graph_lagrangian: operator not w-symmetric, defect " +
        std::to_string(defect / scale));
  // normalized coordinates: A_hat = W^{1/2} A W^{-1/2} is symmetric
  const MatrixXd Ah = space.sqrt_w.asDiagonal() * A * space.inv_sqrt_w.asDiagonal();
  MatrixXd cols(2 * m, m);
  if (mode == GraphMode::Graph) {
    cols.topRows(m) = MatrixXd::Identity(m, m);
    cols.bottomRows(m) = Ah;
  } else {
    cols.topRows(m) = Ah;
    cols.bottomRows(m) = MatrixXd::Identity(m, m);
  }
  LagrangianFrame fr;
  fr.space = &space;
  fr.basis = detail::orthonormalize(cols);
  fr.tag = mode == GraphMode::Graph ? FrameTag::GraphOfOperator
                                    : FrameTag::InverseGraph;
  return fr;
}

inline LagrangianFrame neumann_subspace(const SymplecticSpace& space) {
  return build_graph_lagrangian(MatrixXd::Zero(space.half_dim, space.half_dim),
                                GraphMode::Graph, space);
}

inline LagrangianFrame dirichlet_subspace(const SymplecticSpace& space) {
  return build_graph_lagrangian(MatrixXd::Zero(space.half_dim, space.half_dim),
                                GraphMode::InverseGraph, space);
}

struct IntersectionResult {
  int dim = 0;
  MatrixXd basis;  // 2m x dim, orthonormal, normalized coordinates
};

/// Intersection via principal angles: singular values of F1^T F2 equal to 1
/// within tol count toward the intersection.
inline IntersectionResult intersection(const LagrangianFrame& F1,
                                       const LagrangianFrame& F2,
                                       double tol = 1e-8) {
  if (F1.space != F2.space)
    throw std::invalid_argument("intersection: frames from different spaces");
  Eigen::JacobiSVD<MatrixXd> svd(F1.basis.transpose() * F2.basis,
                                 Eigen::ComputeFullU);
  IntersectionResult r;
  const auto& sv = svd.singularValues();
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] >= 1.0 - tol) ++r.dim;
  r.basis = F1.basis * svd.matrixU().leftCols(r.dim);
  return r;
}

inline int intersection_dim(const LagrangianFrame& F1, const LagrangianFrame& F2,
                            double tol = 1e-8) {
  return intersection(F1, F2, tol).dim;
}

/// Orthogonal projection onto span(F) in normalized coordinates.
inline MatrixXd orth_projection(const LagrangianFrame& F) {
  return F.basis * F.basis.transpose();
}

/// Souriau unitary W = (I - 2 Pi_F)(2 Pi_G - I) folded to a complex m x m
/// matrix through the identification (f,g) -> f + i g.  Requires both frames
/// Lagrangian; the fold is valid because W commutes with J, which is checked.
inline MatrixXcd souriau_unitary(const LagrangianFrame& F,
                                 const LagrangianFrame& G_ref) {
  if (F.space != G_ref.space)
    throw std::invalid_argument("souriau_unitary: frames from different spaces");
  const SymplecticSpace& sp = *F.space;
  const int m = sp.half_dim;
  if (!F.lagrangian() || !G_ref.lagrangian())
    throw std::invalid_argument("souriau_unitary: frames must be Lagrangian");
  const MatrixXd I2 = MatrixXd::Identity(2 * m, 2 * m);
  const MatrixXd W =
      (I2 - 2.0 * orth_projection(F)) * (2.0 * orth_projection(G_ref) - I2);
  const MatrixXd J = sp.complex_structure();
  const double comm = (W * J - J * W).norm();
  if (comm > 1e-9 * std::max(1.0, W.norm()))
    throw std::runtime_error(
        "souriau_unitary: W does not commute with J (defect " +
        std::to_string(comm) + "); input frame not Lagrangian?");
  // W = [[A, -B],[B, A]] with J(f,g)=(-g,f); complex fold is A + iB
  MatrixXcd Wc(m, m);
  Wc.real() = W.topLeftCorner(m, m);
  Wc.imag() = W.bottomLeftCorner(m, m);
  return Wc;
}

}  // namespace maslov
