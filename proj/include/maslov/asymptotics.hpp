#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "maslov/assembly.hpp"
#include "maslov/grid.hpp"

namespace maslov {

/// Boundary quadratic form b(p,q) = <Theta p, q> on constant boundary
/// vectors, its kernel projection, and V(0) restricted to that kernel.
struct BoundaryFormData {
  MatrixXd B;         // N x N, = perimeter * theta for pointwise Theta
  MatrixXd Q0;        // orthogonal projection onto ker(B)
  MatrixXd V0;        // V(0)
  MatrixXd QVQ_res;   // ker_dim x ker_dim restriction of Q0 V(0) Q0
  MatrixXd ker_basis; // N x ker_dim, orthonormal
  double domain_volume = 0.0;
  int ker_dim = 0;
  bool v_nondegenerate = true;

  int morse_minus_B() const {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(B, Eigen::EigenvaluesOnly);
    const double tol = 1e-10 * std::max(1.0, B.norm());
    return static_cast<int>((es.eigenvalues().array() > tol).count());
  }
  int morse_QVQ() const {
    if (ker_dim == 0) return 0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(QVQ_res, Eigen::EigenvaluesOnly);
    const double tol = 1e-10 * std::max(1.0, V0.norm());
    return static_cast<int>((es.eigenvalues().array() < -tol).count());
  }
  int predicted_morse() const { return morse_minus_B() + morse_QVQ(); }
};

inline BoundaryFormData compute_boundary_form(const BoundaryCondition& bc,
                                              const GridDomain& grid,
                                              const PotentialField& field) {
  if (bc.kind != BoundaryCondition::Kind::NeumannBased)
    throw std::invalid_argument(
        "compute_boundary_form: requires a Neumann-based condition");
  BoundaryFormData d;
  const int N = bc.N();
  d.B = grid.perimeter() * bc.theta;
  d.V0 = field.eval(Eigen::Vector2d::Zero());
  d.domain_volume = grid.volume();

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(d.B);
  const double tol = 1e-10 * std::max(1.0, d.B.norm());
  std::vector<int> kercols;
  for (int i = 0; i < N; ++i)
    if (std::abs(es.eigenvalues()[i]) <= tol) kercols.push_back(i);
  d.ker_dim = static_cast<int>(kercols.size());
  d.ker_basis.resize(N, d.ker_dim);
  for (int j = 0; j < d.ker_dim; ++j)
    d.ker_basis.col(j) = es.eigenvectors().col(kercols[j]);
  d.Q0 = d.ker_basis * d.ker_basis.transpose();
  d.QVQ_res = d.ker_basis.transpose() * d.V0 * d.ker_basis;
  if (d.ker_dim > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> ev(d.QVQ_res, Eigen::EigenvaluesOnly);
    d.v_nondegenerate = ev.eigenvalues().cwiseAbs().minCoeff() >
                        1e-8 * std::max(1.0, d.V0.norm());
  }
  return d;
}

namespace detail {

// N eigenvalues of L_{0,G}(tau) closest to zero (ascending), plus the gap to
// the rest of the spectrum.
struct NearZeroGroup {
  VectorXd group;      // sorted ascending
  double group_max_abs = 0.0;
  double rest_min_abs = std::numeric_limits<double>::infinity();
  int negative_count = 0;
};

inline NearZeroGroup near_zero_group(const GridDomain& grid,
                                     const StiffnessMass& sm,
                                     const PotentialField& field,
                                     const BoundaryCondition& bc, double tau) {
  GammaPath path(tau, 1.0);  // only the s=0 point (lambda=0, t=tau) is used
  const auto pen = assemble_pencil(grid, sm, field, bc, path, 0.0);
  const auto sp = pencil_spectrum(pen);
  const int N = sm.N;
  std::vector<int> order(sp.eigenvalues.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(sp.eigenvalues[i]) < std::abs(sp.eigenvalues[j]);
  });
  NearZeroGroup g;
  g.group.resize(N);
  for (int i = 0; i < N; ++i) {
    // one Rayleigh-quotient correction: the raw eigenvalue carries an absolute
    // error ~ eps * ||A||, which swamps the O(tau^2) branch values on fine
    // grids; the residual-based update restores near machine-exact branches
    const double lam = sp.eigenvalues[order[i]];
    const VectorXd v = sp.vectors.col(order[i]);
    const VectorXd Mv = pen.M * v;
    g.group[i] = lam + v.dot(pen.A * v - lam * Mv) / v.dot(Mv);
  }
  std::sort(g.group.data(), g.group.data() + N);
  g.group_max_abs = g.group.cwiseAbs().maxCoeff();
  for (size_t i = N; i < order.size(); ++i)
    g.rest_min_abs = std::min(g.rest_min_abs, std::abs(sp.eigenvalues[order[i]]));
  g.negative_count = sp.negative_count;
  return g;
}

}  // namespace detail

struct SmallTauCheck {
  double tau = 0.0;
  int morse = 0;
  int predicted = 0;
  bool separated = false;  // near-zero group clear of the rest of the spectrum
  double group_max_abs = 0.0, gap = 0.0;
  bool ok = false;
};

/// Checks Mor(L_{0,G}(tau)) = Mor(-B) + Mor(Q0 V(0) Q0) for each tau, and
/// reports whether the near-zero eigenvalue group is spectrally separated.
inline std::vector<SmallTauCheck> verify_small_tau_morse(
    const GridDomain& grid, const StiffnessMass& sm, const PotentialField& field,
    const BoundaryCondition& bc, const std::vector<double>& taus) {
  const auto bf = compute_boundary_form(bc, grid, field);
  if (!bf.v_nondegenerate)
    throw std::invalid_argument(
        "verify_small_tau_morse: V(0) restricted to ker(B) is degenerate; the "
        "decomposition hypothesis fails");
  std::vector<SmallTauCheck> out;
  for (double tau : taus) {
    const auto g = detail::near_zero_group(grid, sm, field, bc, tau);
    SmallTauCheck c;
    c.tau = tau;
    c.morse = g.negative_count;
    c.predicted = bf.predicted_morse();
    c.group_max_abs = g.group_max_abs;
    c.gap = g.rest_min_abs;
    c.separated = g.group_max_abs < 0.5 * g.rest_min_abs;
    c.ok = c.separated && c.morse == c.predicted;
    out.push_back(c);
  }
  return out;
}

struct BranchFit {
  double slope = 0.0, curvature = 0.0;
  double slope_target = 0.0;
  double curvature_target = std::numeric_limits<double>::quiet_NaN();
  bool zero_slope = false;       // target slope vanishes; curvature is checked
  double slope_err = 0.0;        // relative where the target is nonzero
  double curvature_err = 0.0;
};

struct ExpansionFit {
  std::vector<double> taus;  // ascending
  MatrixXd branches;         // taus.size() x N, branch j ascending per row
  std::vector<BranchFit> fits;
  bool pass(double tol) const {
    for (const auto& f : fits) {
      if (f.slope_err > tol) return false;
      if (f.zero_slope && f.curvature_err > tol) return false;
    }
    return true;
  }
};

/// Tracks the N near-zero eigenvalue branches lambda_j(tau) over a geometric
/// tau grid, Richardson-extrapolates slope and curvature from the two finest
/// levels, and compares against eig(-B)/|Omega| and (for slope-zero branches)
/// the eigenvalues of Q0 V(0) Q0 on ker(B).
inline ExpansionFit eigenvalue_expansion_fit(const GridDomain& grid,
                                             const StiffnessMass& sm,
                                             const PotentialField& field,
                                             const BoundaryCondition& bc,
                                             std::vector<double> taus) {
  if (taus.size() < 2)
    throw std::invalid_argument("expansion_fit: need at least two tau values");
  std::sort(taus.begin(), taus.end());
  const auto bf = compute_boundary_form(bc, grid, field);
  const int N = sm.N;

  ExpansionFit fit;
  fit.taus = taus;
  fit.branches.resize(taus.size(), N);
  for (size_t k = 0; k < taus.size(); ++k)
    fit.branches.row(k) = detail::near_zero_group(grid, sm, field, bc, taus[k])
                              .group.transpose();

  // targets: slope -mu/|Omega| per eigenvalue mu of B; zero-slope branches
  // additionally carry a curvature from the restricted V(0)
  Eigen::SelfAdjointEigenSolver<MatrixXd> esB(bf.B, Eigen::EigenvaluesOnly);
  const double kertol = 1e-10 * std::max(1.0, bf.B.norm());
  std::vector<BranchFit> targets;
  std::vector<double> zero_curvs;
  if (bf.ker_dim > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> esQ(bf.QVQ_res,
                                                Eigen::EigenvaluesOnly);
    for (int i = 0; i < bf.ker_dim; ++i) zero_curvs.push_back(esQ.eigenvalues()[i]);
    std::sort(zero_curvs.begin(), zero_curvs.end());
  }
  size_t zc = 0;
  for (int i = 0; i < N; ++i) {
    BranchFit t;
    const double mu = esB.eigenvalues()[i];
    t.zero_slope = std::abs(mu) <= kertol;
    t.slope_target = t.zero_slope ? 0.0 : -mu / bf.domain_volume;
    if (t.zero_slope) t.curvature_target = zero_curvs[zc++];
    targets.push_back(t);
  }
  // order targets by predicted eigenvalue at the finest tau
  const double tmin = taus.front();
  std::sort(targets.begin(), targets.end(), [&](const BranchFit& a,
                                                const BranchFit& b) {
    const double pa = a.slope_target * tmin +
                      (a.zero_slope ? a.curvature_target * tmin * tmin : 0.0);
    const double pb = b.slope_target * tmin +
                      (b.zero_slope ? b.curvature_target * tmin * tmin : 0.0);
    return pa < pb;
  });

  // branch rows are sorted ascending; for small tau that ordering matches the
  // predicted ordering, so pair columns with sorted targets directly
  const double t1 = taus[0], t2 = taus[1];  // two finest (ratio should be 2)
  for (int j = 0; j < N; ++j) {
    BranchFit f = targets[j];
    const double l1 = fit.branches(0, j), l2 = fit.branches(1, j);
    const double s1 = l1 / t1, s2 = l2 / t2;
    // lambda/tau = a + b*tau + O(tau^2): eliminate the linear term
    f.slope = (t2 * s1 - t1 * s2) / (t2 - t1);
    const double c1 = (l1 - t1 * f.slope_target) / (t1 * t1);
    const double c2 = (l2 - t2 * f.slope_target) / (t2 * t2);
    f.curvature = (t2 * c1 - t1 * c2) / (t2 - t1);
    const double sden = std::abs(f.slope_target) > 0 ? std::abs(f.slope_target)
                                                     : 1.0;
    f.slope_err = std::abs(f.slope - f.slope_target) / sden;
    if (f.zero_slope) {
      const double cden = std::abs(f.curvature_target) > 0
                              ? std::abs(f.curvature_target)
                              : 1.0;
      f.curvature_err = std::abs(f.curvature - f.curvature_target) / cden;
    }
    fit.fits.push_back(f);
  }
  return fit;
}

}  // namespace maslov
