#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "maslov/dtn.hpp"

using namespace maslov;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("1d DtN of the Laplacian reproduces the interval map exactly") {
  // harmonic extensions are linear, which the grid represents exactly:
  // N = -(1/2) [[1,-1],[-1,1]]
  const auto g = build_square_grid(1, 17);
  const auto sm = build_stiffness_mass(g, 1);
  const auto field = PotentialField::constant(MatrixXd::Zero(1, 1));
  GammaPath path(1.0, 1.0);  // tau = 1: the only Sigma_2 point is s=0, t=1
  const auto dtn = dirichlet_to_neumann(g, sm, field, path, 0.0);
  MatrixXd expect(2, 2);
  expect << -0.5, 0.5, 0.5, -0.5;
  CHECK((dtn.matrix - expect).norm() < 1e-12);
}

TEST_CASE("DtN and NtD are mutually inverse up to sign") {
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 1);
  const auto field = PotentialField::constant(-7.0 * MatrixXd::Identity(1, 1));
  GammaPath path(0.25, 1.0);
  for (double s : {0.1, 0.35, 0.6}) {
    const auto dtn = dirichlet_to_neumann(g, sm, field, path, s);
    const auto ntd = neumann_to_dirichlet(g, sm, field, path, s);
    const int m = static_cast<int>(dtn.matrix.rows());
    const MatrixXd comp = dtn.matrix * ntd.matrix + MatrixXd::Identity(m, m);
    CHECK(comp.norm() / std::max(1.0, dtn.matrix.norm() * ntd.matrix.norm()) <
          1e-10);
    CHECK(dtn.sym_defect < 1e-10);
    CHECK(ntd.sym_defect < 1e-10);
  }
}

TEST_CASE("trace subspace frames: graph vs inverse graph, isotropy") {
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 1);
  const auto field = PotentialField::constant(-7.0 * MatrixXd::Identity(1, 1));
  const auto space = boundary_space(g, 1);
  GammaPath path(0.25, 1.0);
  for (double s : {0.1, 0.35, 0.6}) {
    const double t = path.eval(s).t;
    const auto dtn = dirichlet_to_neumann(g, sm, field, path, s);
    const auto ntd = neumann_to_dirichlet(g, sm, field, path, s);
    const auto Fg =
        build_graph_lagrangian(-dtn.matrix / t, GraphMode::Graph, space);
    const auto Fi =
        build_graph_lagrangian(t * ntd.matrix, GraphMode::InverseGraph, space);
    CHECK((orth_projection(Fg) - orth_projection(Fi)).norm() < 1e-8);
    CHECK(detail::frame_isotropy_defect(Fg.basis, space.half_dim) < 1e-12);
    CHECK(detail::frame_isotropy_defect(Fi.basis, space.half_dim) < 1e-12);
    // the selector agrees with both routes
    const auto F = upsilon_frame(g, sm, field, space, path, s);
    CHECK((orth_projection(F) - orth_projection(Fg)).norm() < 1e-8);
  }
}

TEST_CASE("Dirichlet spectrum hit: DtN singular, trace subspace survives") {
  // V = -c constant; the Dirichlet pencil K - t^2 c M is singular exactly at
  // t* = sqrt(mu_11 / c) with mu_11 the smallest discrete box eigenvalue
  const int n = 9;
  const auto g = build_square_grid(2, n);
  const auto sm = build_stiffness_mass(g, 1);
  const double c = 30.0;
  const auto field = PotentialField::constant(-c * MatrixXd::Identity(1, 1));
  const auto space = boundary_space(g, 1);
  const double h = g.h;
  const double mu1 = 4.0 / (h * h) * std::pow(std::sin(M_PI / (2.0 * (n - 1))), 2);
  const double tstar = std::sqrt(2.0 * mu1 / c);
  const double tau = 0.1;
  GammaPath path(tau, 1.0);
  const double sstar = tstar - tau;

  CHECK_THROWS_AS(dirichlet_to_neumann(g, sm, field, path, sstar),
                  DirichletSpectrumHit);
  // NtD route still yields the Lagrangian frame, which now meets the
  // Dirichlet subspace
  const auto F = upsilon_frame(g, sm, field, space, path, sstar);
  CHECK(detail::frame_isotropy_defect(F.basis, space.half_dim) < 1e-10);
  CHECK(intersection_dim(F, dirichlet_subspace(space)) >= 1);
  // generic nearby s: no intersection with the Dirichlet plane
  const auto F2 = upsilon_frame(g, sm, field, space, path, sstar + 0.05);
  CHECK(intersection_dim(F2, dirichlet_subspace(space)) == 0);
}

TEST_CASE("matrix-valued system DtN stays block-consistent") {
  // block-diagonal V acts componentwise, so the DtN map must be
  // block-diagonal in the component index
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 2);
  MatrixXd V(2, 2);
  V << 1.0, 0.0, 0.0, -2.0;
  const auto field = PotentialField::constant(V);
  GammaPath path(0.25, 1.0);
  const auto dtn = dirichlet_to_neumann(g, sm, field, path, 0.4);
  const int nb = g.num_boundary();
  double offdiag = 0.0;
  for (int b1 = 0; b1 < nb; ++b1)
    for (int b2 = 0; b2 < nb; ++b2) {
      offdiag = std::max(offdiag, std::abs(dtn.matrix(b1 * 2, b2 * 2 + 1)));
      offdiag = std::max(offdiag, std::abs(dtn.matrix(b1 * 2 + 1, b2 * 2)));
    }
  CHECK(offdiag < 1e-12);
}
