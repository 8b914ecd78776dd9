#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

namespace maslov {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Uniform tensor grid on the box [-1,1]^d (d = 1 or 2), star-shaped about
/// the origin.  Carries trapezoidal volume/boundary quadrature, outward
/// normals and the nu.x table used by the crossing forms.
struct GridDomain {
  int d = 0;          // spatial dimension
  int n = 0;          // nodes per side
  double h = 0.0;     // spacing 2/(n-1)
  int num_nodes = 0;  // n^d

  std::vector<Eigen::Vector2d> coords;  // node coordinates (y=0 when d=1)
  std::vector<int> interior_nodes;
  std::vector<int> boundary_nodes;
  std::vector<int> boundary_index_of_node;  // -1 for interior

  VectorXd volume_weights;    // per node, size num_nodes
  VectorXd boundary_weights;  // per boundary node
  std::vector<Eigen::Vector2d> normals;  // per boundary node; corner normals
                                         // are face averages (not unit)
  VectorXd nu_dot_x;                     // per boundary node

  int num_boundary() const { return static_cast<int>(boundary_nodes.size()); }
  int num_interior() const { return static_cast<int>(interior_nodes.size()); }

  double volume() const { return volume_weights.sum(); }
  double perimeter() const { return boundary_weights.sum(); }
};

inline GridDomain build_square_grid(int d, int n) {
  if (d != 1 && d != 2) throw std::invalid_argument("grid: d must be 1 or 2");
  if (n < 5 || n % 2 == 0)
    throw std::invalid_argument("grid: n must be odd and >= 5");

  GridDomain g;
  g.d = d;
  g.n = n;
  g.h = 2.0 / (n - 1);
  g.num_nodes = (d == 1) ? n : n * n;
  g.coords.resize(g.num_nodes);
  g.boundary_index_of_node.assign(g.num_nodes, -1);
  g.volume_weights.resize(g.num_nodes);

  auto w1 = [&](int i) { return (i == 0 || i == n - 1) ? 0.5 * g.h : g.h; };

  if (d == 1) {
    for (int i = 0; i < n; ++i) {
      g.coords[i] = {-1.0 + i * g.h, 0.0};
      g.volume_weights[i] = w1(i);
      if (i == 0 || i == n - 1)
        g.boundary_nodes.push_back(i);
      else
        g.interior_nodes.push_back(i);
    }
    const int nb = 2;
    g.boundary_weights = VectorXd::Ones(nb);  // h^{d-1} = 1 per endpoint
    g.normals = {{-1.0, 0.0}, {1.0, 0.0}};
    g.nu_dot_x.resize(nb);
    for (int b = 0; b < nb; ++b) {
      g.boundary_index_of_node[g.boundary_nodes[b]] = b;
      g.nu_dot_x[b] = g.normals[b].dot(g.coords[g.boundary_nodes[b]]);
    }
  } else {
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const int id = ix + n * iy;
        g.coords[id] = {-1.0 + ix * g.h, -1.0 + iy * g.h};
        g.volume_weights[id] = w1(ix) * w1(iy);
        const bool bnd = (ix == 0 || ix == n - 1 || iy == 0 || iy == n - 1);
        if (bnd)
          g.boundary_nodes.push_back(id);
        else
          g.interior_nodes.push_back(id);
      }
    const int nb = g.num_boundary();
    g.boundary_weights.resize(nb);
    g.normals.resize(nb);
    g.nu_dot_x.resize(nb);
    for (int b = 0; b < nb; ++b) {
      const int id = g.boundary_nodes[b];
      g.boundary_index_of_node[id] = b;
      const int ix = id % n, iy = id / n;
      Eigen::Vector2d nu{0.0, 0.0};
      int faces = 0;
      if (ix == 0) { nu += Eigen::Vector2d{-1.0, 0.0}; ++faces; }
      if (ix == n - 1) { nu += Eigen::Vector2d{1.0, 0.0}; ++faces; }
      if (iy == 0) { nu += Eigen::Vector2d{0.0, -1.0}; ++faces; }
      if (iy == n - 1) { nu += Eigen::Vector2d{0.0, 1.0}; ++faces; }
      nu /= faces;  // face average at corners, so nu.x = 1 there
      g.normals[b] = nu;
      // trapezoid per face gives h mid-face and h/2 at each face endpoint;
      // a corner collects h/2 from both meeting faces, so every node gets h
      g.boundary_weights[b] = g.h;
      g.nu_dot_x[b] = nu.dot(g.coords[id]);
    }
  }
  return g;
}

/// Matrix-valued potential x -> V(x), V symmetric NxN.  An optional gradient
/// evaluator supplies dV/dx_k for the Gamma_2 crossing form.
struct PotentialField {
  int N = 1;
  std::function<MatrixXd(const Eigen::Vector2d&)> eval;
  // grad(x)[k] = dV/dx_k; empty means "gradient identically zero"
  std::function<std::vector<MatrixXd>(const Eigen::Vector2d&)> grad;

  static PotentialField constant(const MatrixXd& C) {
    if (C.rows() != C.cols() || !C.isApprox(C.transpose(), 1e-12))
      throw std::invalid_argument("potential: constant matrix must be symmetric");
    PotentialField f;
    f.N = static_cast<int>(C.rows());
    f.eval = [C](const Eigen::Vector2d&) { return C; };
    return f;
  }

  static PotentialField scalar(std::function<double(const Eigen::Vector2d&)> v,
                               std::function<Eigen::Vector2d(const Eigen::Vector2d&)> dv = {}) {
    PotentialField f;
    f.N = 1;
    f.eval = [v](const Eigen::Vector2d& x) {
      MatrixXd m(1, 1);
      m(0, 0) = v(x);
      return m;
    };
    if (dv)
      f.grad = [dv](const Eigen::Vector2d& x) {
        const Eigen::Vector2d gx = dv(x);
        std::vector<MatrixXd> out(2, MatrixXd(1, 1));
        out[0](0, 0) = gx[0];
        out[1](0, 0) = gx[1];
        return out;
      };
    return f;
  }
};

/// Samples V(t*x_i) at every grid node.  Throws if the evaluator produces a
/// non-symmetric block anywhere.
inline std::vector<MatrixXd> sample_potential(const PotentialField& field,
                                              const GridDomain& grid, double t) {
  if (!(t > 0.0 && t <= 1.0))
    throw std::invalid_argument("sample_potential: t must be in (0,1]");
  std::vector<MatrixXd> out(grid.num_nodes);
  for (int i = 0; i < grid.num_nodes; ++i) {
    MatrixXd V = field.eval(t * grid.coords[i]);
    if (V.rows() != field.N || V.cols() != field.N)
      throw std::invalid_argument("sample_potential: block size mismatch");
    const double scale = std::max(1.0, V.norm());
    if ((V - V.transpose()).norm() > 1e-10 * scale)
      throw std::invalid_argument("sample_potential: V(x) not symmetric");
    out[i] = 0.5 * (V + V.transpose());
  }
  return out;
}

}  // namespace maslov
