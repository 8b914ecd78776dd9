#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "maslov/asymptotics.hpp"

using namespace maslov;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<double> tau_grid() {
  std::vector<double> taus;
  for (int p = 4; p <= 9; ++p) taus.push_back(std::ldexp(1.0, -p));
  return taus;
}

}  // namespace

TEST_CASE("boundary form examples") {
  const auto g = build_square_grid(2, 9);
  SECTION("Theta = 0") {
    const auto bc = BoundaryCondition::neumann(2);
    MatrixXd V(2, 2);
    V << 1, 0, 0, -2;
    const auto bf = compute_boundary_form(bc, g, PotentialField::constant(V));
    CHECK(bf.B.norm() == 0.0);
    CHECK((bf.Q0 - MatrixXd::Identity(2, 2)).norm() < 1e-14);
    CHECK(bf.morse_minus_B() == 0);
    CHECK(bf.morse_QVQ() == 1);
  }
  SECTION("scalar Robin") {
    const auto bc = BoundaryCondition::robin(0.3, 1);
    const auto bf = compute_boundary_form(
        bc, g, PotentialField::constant(MatrixXd::Identity(1, 1)));
    CHECK(bf.B(0, 0) == Catch::Approx(2.4).margin(1e-12));
    CHECK(bf.ker_dim == 0);
    CHECK(bf.morse_minus_B() == 1);
  }
  SECTION("mixed N=2") {
    MatrixXd th(2, 2);
    th << 0.3, 0, 0, 0;
    const auto bc = BoundaryCondition::robin_matrix(th);
    MatrixXd V(2, 2);
    V << 1, 0, 0, -2;
    const auto bf = compute_boundary_form(bc, g, PotentialField::constant(V));
    CHECK(bf.B(0, 0) == Catch::Approx(2.4));
    CHECK(bf.B(1, 1) == 0.0);
    CHECK(bf.ker_dim == 1);
    MatrixXd e2 = MatrixXd::Zero(2, 2);
    e2(1, 1) = 1.0;
    CHECK((bf.Q0 - e2).norm() < 1e-12);
    CHECK(bf.QVQ_res(0, 0) == Catch::Approx(-2.0));
    CHECK(bf.v_nondegenerate);
    CHECK(bf.predicted_morse() == 2);
  }
  SECTION("Dirichlet rejected") {
    CHECK_THROWS_AS(
        compute_boundary_form(BoundaryCondition::dirichlet(1), g,
                              PotentialField::constant(MatrixXd::Zero(1, 1))),
        std::invalid_argument);
  }
}

TEST_CASE("constants are exact branches when Theta=0 and V constant") {
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 2);
  MatrixXd V(2, 2);
  V << 1, 0, 0, -2;
  const auto field = PotentialField::constant(V);
  const auto bc = BoundaryCondition::neumann(2);
  const auto fit = eigenvalue_expansion_fit(g, sm, field, bc, tau_grid());
  for (size_t k = 0; k < fit.taus.size(); ++k) {
    const double t2 = fit.taus[k] * fit.taus[k];
    CHECK(fit.branches(k, 0) == Catch::Approx(-2.0 * t2).margin(1e-12));
    CHECK(fit.branches(k, 1) == Catch::Approx(1.0 * t2).margin(1e-12));
  }
  for (const auto& f : fit.fits) {
    CHECK(f.zero_slope);
    // extrapolation divides eigensolver roundoff by tau^2, so the fitted
    // curvature is good to ~1e-7 even though the branch values are exact
    CHECK(f.curvature_err < 1e-6);
  }
}

TEST_CASE("scalar Robin slope matches -2 theta after extrapolation") {
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 1);
  const auto field = PotentialField::constant(MatrixXd::Identity(1, 1));
  const auto bc = BoundaryCondition::robin(0.3, 1);
  const auto fit = eigenvalue_expansion_fit(g, sm, field, bc, tau_grid());
  REQUIRE(fit.fits.size() == 1);
  CHECK(fit.fits[0].slope_target == Catch::Approx(-0.6));
  CHECK(fit.fits[0].slope_err < 1e-2);
  CHECK(fit.pass(1e-2));
}

TEST_CASE("mixed N=2 slope and curvature targets") {
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 2);
  MatrixXd th(2, 2), V(2, 2);
  th << 0.3, 0, 0, 0;
  V << 1, 0, 0, -2;
  const auto field = PotentialField::constant(V);
  const auto bc = BoundaryCondition::robin_matrix(th);
  const auto fit = eigenvalue_expansion_fit(g, sm, field, bc, tau_grid());
  REQUIRE(fit.fits.size() == 2);
  int n_zero = 0;
  for (const auto& f : fit.fits) {
    if (f.zero_slope) {
      ++n_zero;
      CHECK(f.curvature_target == Catch::Approx(-2.0));
      CHECK(f.curvature_err < 1e-2);
    } else {
      CHECK(f.slope_target == Catch::Approx(-0.6));
      CHECK(f.slope_err < 1e-2);
    }
  }
  CHECK(n_zero == 1);
}

TEST_CASE("small-tau Morse decomposition") {
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 2);
  MatrixXd V(2, 2);
  V << 1, 0, 0, -2;
  const auto field = PotentialField::constant(V);
  const auto bc = BoundaryCondition::neumann(2);
  const auto checks =
      verify_small_tau_morse(g, sm, field, bc, {1.0 / 64, 1.0 / 128});
  for (const auto& c : checks) {
    CHECK(c.predicted == 1);
    CHECK(c.morse == 1);
    CHECK(c.separated);
    CHECK(c.ok);
  }
}

TEST_CASE("degenerate restricted potential is refused") {
  const auto g = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(g, 1);
  const auto field = PotentialField::constant(MatrixXd::Zero(1, 1));
  const auto bc = BoundaryCondition::neumann(1);  // B = 0 and V(0) = 0
  CHECK_THROWS_AS(verify_small_tau_morse(g, sm, field, bc, {1.0 / 64}),
                  std::invalid_argument);
}

TEST_CASE("predicted Morse split is rotation-equivariant") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const auto g = build_square_grid(2, 9);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd th = MatrixXd::Zero(2, 2), V(2, 2);
    th(0, 0) = u(rng);
    V << u(rng), 0.3, 0.3, u(rng);
    const double a = u(rng);
    Eigen::Rotation2D<double> rot(a);
    const MatrixXd R = rot.toRotationMatrix();

    auto predicted = [&](const MatrixXd& theta, const MatrixXd& pot) {
      const auto bc = BoundaryCondition::robin_matrix(theta);
      const auto bf =
          compute_boundary_form(bc, g, PotentialField::constant(pot));
      if (bf.ker_dim > 0 && !bf.v_nondegenerate) return -1;  // skip marker
      return bf.predicted_morse();
    };
    const int p1 = predicted(th, V);
    const int p2 = predicted(R * th * R.transpose(), R * V * R.transpose());
    if (p1 >= 0 && p2 >= 0) CHECK(p1 == p2);
  }
}
