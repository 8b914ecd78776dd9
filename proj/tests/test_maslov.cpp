#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "maslov/index.hpp"

using namespace maslov;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// discrete Dirichlet box eigenvalues mu_k + mu_l for an n-node grid
std::vector<double> box_spectrum(int n) {
  const double h = 2.0 / (n - 1);
  std::vector<double> mu1d;
  for (int k = 1; k <= n - 2; ++k) {
    const double s = std::sin(k * M_PI / (2.0 * (n - 1)));
    mu1d.push_back(4.0 / (h * h) * s * s);
  }
  std::vector<double> out;
  for (double a : mu1d)
    for (double b : mu1d) out.push_back(a + b);
  std::sort(out.begin(), out.end());
  return out;
}

// derivative of the eigenvalue branch through zero at a crossing, by central
// differences on the k smallest-magnitude eigenvalues
std::vector<double> branch_derivatives(const ProblemContext& ctx,
                                       const CrossingRecord& rec,
                                       double delta = 1e-5) {
  auto small = [&](double s) {
    const auto sp = pencil_eigenvalues(ctx.pencil(s));
    std::vector<double> v(sp.eigenvalues.data(),
                          sp.eigenvalues.data() + sp.eigenvalues.size());
    std::sort(v.begin(), v.end(),
              [](double a, double b) { return std::abs(a) < std::abs(b); });
    v.resize(rec.kernel_dim);
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto lo = small(rec.s_star - delta), hi = small(rec.s_star + delta);
  std::vector<double> d(rec.kernel_dim);
  for (int i = 0; i < rec.kernel_dim; ++i) d[i] = (hi[i] - lo[i]) / (2 * delta);
  return d;
}

}  // namespace

TEST_CASE("Dirichlet constant well: index theorem against the box oracle") {
  const int n = 9;
  const double c = 10.0, tau = 0.25;
  const auto grid = build_square_grid(2, n);
  const auto sm = build_stiffness_mass(grid, 1);
  const auto field = PotentialField::constant(-c * MatrixXd::Identity(1, 1));
  const auto bc = BoundaryCondition::dirichlet(1);
  ProblemContext ctx(grid, sm, field, bc, tau, -1.0);

  const auto mus = box_spectrum(n);
  const int expected_morse =
      static_cast<int>(std::count_if(mus.begin(), mus.end(),
                                     [&](double m) { return m < c; }));
  std::vector<double> expected_t;
  for (double m : mus) {
    const double t = std::sqrt(m / c);
    if (t > tau && t <= 1.0) expected_t.push_back(t);
  }

  const int mor = morse_index(ctx.pencil(1.0 - tau));
  CHECK(mor == expected_morse);

  auto seg2 = maslov_index_crossing_form(ctx, 2);
  REQUIRE(seg2.crossings.size() == expected_t.size());
  for (size_t i = 0; i < expected_t.size(); ++i) {
    const auto& rec = seg2.crossings[i];
    CHECK(rec.t == Catch::Approx(expected_t[i]).margin(1e-8));
    CHECK(rec.kernel_dim == rec.frame_intersection_dim);
    CHECK(rec.n_plus == 0);  // Sigma_2 Dirichlet crossings are negative
    CHECK(rec.n_minus == rec.kernel_dim);
    for (double d : branch_derivatives(ctx, rec)) CHECK(d < 0.0);
  }
  CHECK(mor == -seg2.index);

  const auto sf = maslov_index_spectral_flow(ctx, 2);
  CHECK(sf.index == seg2.index);
}

TEST_CASE("boundary-flux formula at Dirichlet Sigma_2 crossings") {
  const auto grid = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(grid, 1);
  const auto field = PotentialField::constant(-10.0 * MatrixXd::Identity(1, 1));
  const auto bc = BoundaryCondition::dirichlet(1);
  ProblemContext ctx(grid, sm, field, bc, 0.25, -1.0);
  auto crossings = detect_crossings(ctx, 2);
  REQUIRE(!crossings.empty());
  for (auto& rec : crossings) {
    const MatrixXd m_general = crossing_form(ctx, rec, FormRoute::General);
    const MatrixXd m_boundary = crossing_form(ctx, rec, FormRoute::BoundaryFlux);
    Eigen::SelfAdjointEigenSolver<MatrixXd> e1(m_general), e2(m_boundary);
    CHECK(e2.eigenvalues().maxCoeff() < 0.0);  // negative definite
    CHECK(e1.eigenvalues().maxCoeff() < 0.0);
  }
  // boundary route is Dirichlet-only
  const auto bcr = BoundaryCondition::robin(0.3, 1);
  ProblemContext ctxr(grid, sm, field, bcr, 0.25, -1.0);
  auto cr = detect_crossings(ctxr, 2);
  REQUIRE(!cr.empty());
  CHECK_THROWS_AS(crossing_form(ctxr, cr[0], FormRoute::BoundaryFlux),
                  std::invalid_argument);
}

TEST_CASE("Sigma_1 crossings: negative form, index -Mor(L_{0,G}(tau))") {
  const auto grid = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(grid, 2);
  MatrixXd V(2, 2);
  V << 1.0, 0.0, 0.0, -2.0;
  const auto field = PotentialField::constant(V);
  const auto bc = BoundaryCondition::neumann(2);
  const double tau = 0.25;
  ProblemContext ctx(grid, sm, field, bc, tau, -1.0);

  const auto seg1 = maslov_index_crossing_form(ctx, 1);
  const int mor0 = morse_index(ctx.pencil(0.0));
  CHECK(mor0 == 1);  // constant e_2 mode, eigenvalue -2 tau^2
  CHECK(seg1.index == -mor0);
  REQUIRE(seg1.crossings.size() == 1);
  const auto& rec = seg1.crossings[0];
  CHECK(rec.lambda == Catch::Approx(-2.0).margin(1e-7));
  CHECK(rec.kernel_dim == 1);
  // Sigma_1 form: m(q,q) = -tau ||u||^2 = -tau for the normalized kernel vector
  CHECK(rec.form(0, 0) == Catch::Approx(-tau).margin(1e-6));
  CHECK(rec.n_minus == 1);

  const auto seg3 = maslov_index_crossing_form(ctx, 3);
  const int morG = morse_index(ctx.pencil(1.0 - tau));
  CHECK(seg3.index == morG);
  for (const auto& r : seg3.crossings) {
    CHECK(r.n_minus == 0);  // Sigma_3 crossings are positive
    CHECK(r.n_plus == r.kernel_dim);
  }

  const auto seg4 = detect_crossings(ctx, 4, 60);
  CHECK(seg4.empty());
}

TEST_CASE("Sigma_3 crossing form value: +t at t=1 for a simple crossing") {
  // on this segment lambda-dot = -1 and t-dot = 0, so the general formula
  // m = (1/t) <t^2 u, u>_M = t for an M-normalized kernel vector
  const auto grid = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(grid, 2);
  MatrixXd V(2, 2);
  V << 1.0, 0.0, 0.0, -2.0;
  const auto field = PotentialField::constant(V);
  const auto bc = BoundaryCondition::neumann(2);
  ProblemContext ctx(grid, sm, field, bc, 0.25, -1.0);
  auto seg3 = maslov_index_crossing_form(ctx, 3);
  bool found = false;
  for (const auto& r : seg3.crossings)
    if (r.kernel_dim == 1) {
      CHECK(r.form(0, 0) == Catch::Approx(1.0).margin(1e-6));
      found = true;
    }
  CHECK(found);
}

TEST_CASE("scalar Robin configuration: positive Sigma_2 crossing, loop zero") {
  const auto grid = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(grid, 1);
  const auto field = PotentialField::constant(MatrixXd::Identity(1, 1));
  const auto bc = BoundaryCondition::robin(0.3, 1);
  ProblemContext ctx(grid, sm, field, bc, 0.25, -1.0);

  auto seg2 = maslov_index_crossing_form(ctx, 2);
  REQUIRE(seg2.crossings.size() == 1);
  CHECK(seg2.crossings[0].t == Catch::Approx(0.6).margin(0.05));
  CHECK(seg2.crossings[0].n_plus == 1);
  CHECK(seg2.index == 1);
  for (double d : branch_derivatives(ctx, seg2.crossings[0])) CHECK(d > 0.0);

  const auto cf = maslov_closed_loop(ctx, false);
  CHECK(cf.total == 0);
  const auto sf = maslov_closed_loop(ctx, true);
  CHECK(sf.total == 0);
  for (int j = 0; j < 4; ++j)
    CHECK(cf.segments[j].index == sf.segments[j].index);
}

TEST_CASE("reconstructed-gradient boundary form cross-validates the general formula") {
  const auto grid = build_square_grid(2, 17);
  const auto sm = build_stiffness_mass(grid, 1);
  const auto field = PotentialField::constant(MatrixXd::Identity(1, 1));
  const auto bc = BoundaryCondition::robin(0.3, 1);
  ProblemContext ctx(grid, sm, field, bc, 0.25, -1.0);
  auto crossings = detect_crossings(ctx, 2);
  REQUIRE(crossings.size() == 1);
  auto& rec = crossings[0];
  const MatrixXd m_general = crossing_form(ctx, rec, FormRoute::General);
  const MatrixXd m_reconstructed = crossing_form(ctx, rec, FormRoute::BoundaryReconstructed);
  // gradient reconstruction is O(h) at corners; signs must agree and the
  // magnitudes should be in the same ballpark
  CHECK(m_general(0, 0) > 0.0);
  CHECK(m_reconstructed(0, 0) > 0.0);
  CHECK(std::abs(m_reconstructed(0, 0) / m_general(0, 0) - 1.0) < 0.3);
}

TEST_CASE("sufficient negativity condition on Sigma_2") {
  // W(x) = 2V(tx) + t grad V(tx).x negative at all nodes and Theta <= 0
  // forces negative crossings (here V(x) = -3 - |x|^2)
  const auto grid = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(grid, 1);
  const auto field = PotentialField::scalar(
      [](const Eigen::Vector2d& x) { return -3.0 - x.squaredNorm(); },
      [](const Eigen::Vector2d& x) { return Eigen::Vector2d(-2.0 * x); });
  const auto bc = BoundaryCondition::neumann(1);
  ProblemContext ctx(grid, sm, field, bc, 0.25, -1.0);
  auto seg2 = maslov_index_crossing_form(ctx, 2);
  REQUIRE(!seg2.crossings.empty());
  for (const auto& r : seg2.crossings) {
    CHECK(r.n_plus == 0);
    CHECK(r.n_minus == r.kernel_dim);
  }
}

TEST_CASE("spectral flow of a crossing-free segment is zero") {
  const auto grid = build_square_grid(2, 9);
  const auto sm = build_stiffness_mass(grid, 1);
  const auto field = PotentialField::constant(MatrixXd::Identity(1, 1));
  const auto bc = BoundaryCondition::neumann(1);
  ProblemContext ctx(grid, sm, field, bc, 0.25, -1.0);
  // V = +1: L_{s,G} > 0 along Sigma_2, no crossings
  CHECK(detect_crossings(ctx, 2).empty());
  CHECK(maslov_index_spectral_flow(ctx, 2).index == 0);
}
