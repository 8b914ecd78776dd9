#include <catch2/catch_amalgamated.hpp>

#include "maslov/grid.hpp"

using namespace maslov;

TEST_CASE("square grid counts and quadrature") {
  const auto g = build_square_grid(2, 17);
  CHECK(g.num_nodes == 289);
  CHECK(g.num_boundary() == 64);
  CHECK(g.num_interior() == 225);
  CHECK(g.h == Catch::Approx(0.125));
  // trapezoidal quadrature integrates constants exactly on the box
  CHECK(g.volume() == Catch::Approx(4.0).margin(1e-12));
  CHECK(g.perimeter() == Catch::Approx(8.0).margin(1e-12));
}

TEST_CASE("boundary normals and nu.x on the unit box") {
  const auto g = build_square_grid(2, 9);
  for (int b = 0; b < g.num_boundary(); ++b) {
    // the box is star-shaped about the origin with nu.x = 1 on every face;
    // averaged corner normals keep that value at corners
    CHECK(g.nu_dot_x[b] == Catch::Approx(1.0).margin(1e-14));
  }
  // corner node (-1,-1)
  const int corner = g.boundary_index_of_node[0];
  REQUIRE(corner >= 0);
  CHECK(g.normals[corner].isApprox(Eigen::Vector2d(-0.5, -0.5)));
  CHECK(g.boundary_weights[corner] == Catch::Approx(g.h));
}

TEST_CASE("1d grid") {
  const auto g = build_square_grid(1, 9);
  CHECK(g.num_nodes == 9);
  CHECK(g.num_boundary() == 2);
  CHECK(g.volume() == Catch::Approx(2.0));
  CHECK(g.perimeter() == Catch::Approx(2.0));
  CHECK(g.normals[0][0] == -1.0);
  CHECK(g.nu_dot_x[0] == Catch::Approx(1.0));
}

TEST_CASE("grid argument validation") {
  CHECK_THROWS_AS(build_square_grid(3, 9), std::invalid_argument);
  CHECK_THROWS_AS(build_square_grid(2, 8), std::invalid_argument);
  CHECK_THROWS_AS(build_square_grid(2, 3), std::invalid_argument);
}

TEST_CASE("potential sampling") {
  const auto g = build_square_grid(2, 5);
  auto f = PotentialField::scalar(
      [](const Eigen::Vector2d& x) { return 1.0 + x.squaredNorm(); },
      [](const Eigen::Vector2d& x) { return Eigen::Vector2d(2.0 * x); });
  const auto samp = sample_potential(f, g, 0.5);
  REQUIRE(static_cast<int>(samp.size()) == g.num_nodes);
  // node at (1,1) scaled by t=0.5 -> V = 1 + 0.5
  const int corner_id = g.num_nodes - 1;
  CHECK(samp[corner_id](0, 0) == Catch::Approx(1.5));
  CHECK_THROWS_AS(sample_potential(f, g, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_potential(f, g, 1.5), std::invalid_argument);

  PotentialField bad;
  bad.N = 2;
  bad.eval = [](const Eigen::Vector2d&) {
    Eigen::MatrixXd m(2, 2);
    m << 0, 1, 0, 0;
    return m;
  };
  CHECK_THROWS_AS(sample_potential(bad, g, 1.0), std::invalid_argument);
}

TEST_CASE("constant potential requires symmetry") {
  Eigen::MatrixXd m(2, 2);
  m << 0, 1, 0, 0;
  CHECK_THROWS_AS(PotentialField::constant(m), std::invalid_argument);
}
