#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maslov/assembly.hpp"
#include "maslov/dtn.hpp"
#include "maslov/grid.hpp"
#include "maslov/symplectic.hpp"

namespace maslov {

/// Everything needed to walk the path Gamma for one configuration.
struct ProblemContext {
  const GridDomain* grid = nullptr;
  const StiffnessMass* sm = nullptr;
  const PotentialField* field = nullptr;
  const BoundaryCondition* bc = nullptr;
  GammaPath path;
  SymplecticSpace space;
  LagrangianFrame G;

  ProblemContext(const GridDomain& g, const StiffnessMass& s,
                 const PotentialField& f, const BoundaryCondition& b,
                 double tau, double Lambda)
      : grid(&g), sm(&s), field(&f), bc(&b),
        path(tau, Lambda > 0.0 ? Lambda
                               : auto_select_lambda(g, s, f, b, tau)),
        space(boundary_space(g, s.N)),
        G(reference_frame(b, space, g)) {}

  SchrodingerPencil pencil(double s) const {
    return assemble_pencil(*grid, *sm, *field, *bc, path, s);
  }
  LagrangianFrame upsilon(double s) const {
    return upsilon_frame(*grid, *sm, *field, space, path, s);
  }
};

enum class CrossingPosition { Interior, InitialEndpoint, FinalEndpoint };
enum class FormRoute { General, Sigma1Gram, BoundaryFlux, BoundaryReconstructed };

struct CrossingRecord {
  double s_star = 0.0;
  int segment = 0;
  double lambda = 0.0, t = 0.0;
  int kernel_dim = 0;
  int frame_intersection_dim = -1;  // cross-check via Upsilon(s*) vs G
  CrossingPosition position = CrossingPosition::Interior;
  MatrixXd form;  // k x k symmetric crossing form (filled by crossing_form)
  int n_plus = 0, n_minus = 0;
  bool degenerate = false;
  int contribution = 0;  // per the endpoint convention
  std::vector<VectorXd> kernel;  // full node space, M_vol-orthonormal
};

struct SegmentResult {
  int segment = 0;
  int index = 0;
  std::vector<CrossingRecord> crossings;
};

struct MaslovResult {
  std::vector<SegmentResult> segments;
  int total = 0;
  std::string method;
};

namespace detail {

struct SampleEigs {
  double s;
  int n_neg;
  double min_abs;
  double emax;
  int n_zero;
};

inline SampleEigs eval_sample(const ProblemContext& ctx, double s) {
  const auto sp = pencil_eigenvalues(ctx.pencil(s));
  SampleEigs out;
  out.s = s;
  // raw sign count: bisection on a tolerance-based count would stall at the
  // edge of the zero band instead of converging to the crossing
  out.n_neg = static_cast<int>((sp.eigenvalues.array() < 0.0).count());
  out.min_abs = sp.eigenvalues.cwiseAbs().minCoeff();
  out.emax = sp.eigenvalues.cwiseAbs().maxCoeff();
  out.n_zero =
      static_cast<int>((sp.eigenvalues.cwiseAbs().array() <= sp.zero_tol).count());
  return out;
}

inline void refine_bracket(const ProblemContext& ctx, double a, int na, double b,
                           int nb, double tol, std::vector<double>& out,
                           int depth = 0) {
  if (b - a <= tol || depth > 60) {
    out.push_back(0.5 * (a + b));
    return;
  }
  const double m = 0.5 * (a + b);
  const int nm = eval_sample(ctx, m).n_neg;
  if (nm != na) refine_bracket(ctx, a, na, m, nm, tol, out, depth + 1);
  if (nm != nb) refine_bracket(ctx, m, nm, b, nb, tol, out, depth + 1);
}

}  // namespace detail

/// Locates conjugate points on one Gamma segment by bracketing changes of the
/// negative-eigenvalue count of the pencil, refining by bisection, and
/// cross-checking each kernel dimension against the frame intersection.
inline std::vector<CrossingRecord> detect_crossings(const ProblemContext& ctx,
                                                    int segment,
                                                    int n_samples = 200,
                                                    double refine_tol = 1e-10) {
  const double a = ctx.path.seg_start(segment);
  const double b = ctx.path.seg_end(segment);
  std::vector<detail::SampleEigs> samples;
  samples.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const double s = a + (b - a) * i / (n_samples - 1.0);
    samples.push_back(detail::eval_sample(ctx, s));
  }

  std::vector<double> locations;
  for (size_t i = 0; i + 1 < samples.size(); ++i)
    if (samples[i].n_neg != samples[i + 1].n_neg)
      detail::refine_bracket(ctx, samples[i].s, samples[i].n_neg,
                             samples[i + 1].s, samples[i + 1].n_neg, refine_tol,
                             locations);
  // kernel sitting exactly on a sample (endpoints included)
  for (const auto& smp : samples)
    if (smp.n_zero > 0) locations.push_back(smp.s);
  // near-zero dips without a sign change: a tangential touch only counts if
  // the minimized |mu| actually reaches the kernel tolerance
  for (size_t i = 1; i + 1 < samples.size(); ++i) {
    if (samples[i].n_zero > 0) continue;
    if (samples[i - 1].n_neg != samples[i].n_neg ||
        samples[i].n_neg != samples[i + 1].n_neg)
      continue;
    if (samples[i].min_abs >= samples[i - 1].min_abs ||
        samples[i].min_abs >= samples[i + 1].min_abs ||
        samples[i].min_abs > 1e-3 * samples[i].emax)
      continue;
    double lo = samples[i - 1].s, hi = samples[i + 1].s;
    while (hi - lo > refine_tol) {  // ternary search on |mu_min|
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (detail::eval_sample(ctx, m1).min_abs <
          detail::eval_sample(ctx, m2).min_abs)
        hi = m2;
      else
        lo = m1;
    }
    const double s_min = 0.5 * (lo + hi);
    if (detail::eval_sample(ctx, s_min).n_zero > 0) locations.push_back(s_min);
  }

  std::sort(locations.begin(), locations.end());
  const double merge_tol = std::max(refine_tol * 10.0, 1e-12 * (b - a));
  std::vector<double> merged;
  for (double s : locations)
    if (merged.empty() || s - merged.back() > merge_tol) merged.push_back(s);

  std::vector<CrossingRecord> out;
  for (double s_star : merged) {
    const auto pen = ctx.pencil(s_star);
    const auto sp = pencil_spectrum(pen);
    CrossingRecord rec;
    rec.s_star = s_star;
    rec.segment = segment;
    rec.lambda = pen.lambda;
    rec.t = pen.t;
    rec.kernel_dim =
        static_cast<int>((sp.eigenvalues.cwiseAbs().array() <= sp.zero_tol).count());
    if (rec.kernel_dim == 0) continue;  // spurious bracket (count change by dip)
    // kernel vectors, smallest magnitude first
    std::vector<int> order(sp.eigenvalues.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
      return std::abs(sp.eigenvalues[i]) < std::abs(sp.eigenvalues[j]);
    });
    for (int i = 0; i < rec.kernel_dim; ++i)
      rec.kernel.push_back(pen.P * sp.vectors.col(order[i]));
    rec.position = (s_star - a <= merge_tol) ? CrossingPosition::InitialEndpoint
                   : (b - s_star <= merge_tol) ? CrossingPosition::FinalEndpoint
                                               : CrossingPosition::Interior;
    try {
      rec.frame_intersection_dim =
          intersection_dim(ctx.upsilon(s_star), ctx.G);
    } catch (const std::exception&) {
      rec.frame_intersection_dim = -1;  // simultaneous spectrum hit
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace detail {

// dV_s/ds at the nodes, V_s(x) = t^2 (V(t x) - lambda(s))
inline std::vector<MatrixXd> potential_rate(const ProblemContext& ctx, double t,
                                            double lambda, double tdot,
                                            double ldot) {
  const GridDomain& g = *ctx.grid;
  const int N = ctx.sm->N;
  std::vector<MatrixXd> out(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) {
    const Eigen::Vector2d x = g.coords[i];
    MatrixXd r = 2.0 * t * tdot *
                 (ctx.field->eval(t * x) - lambda * MatrixXd::Identity(N, N));
    MatrixXd gradterm = MatrixXd::Zero(N, N);
    if (ctx.field->grad) {
      const auto dV = ctx.field->grad(t * x);
      for (int k = 0; k < g.d; ++k) gradterm += dV[k] * x[k];
    }
    r += t * t * (tdot * gradterm - ldot * MatrixXd::Identity(N, N));
    out[i] = r;
  }
  return out;
}

inline void segment_rates(int segment, double& tdot, double& ldot) {
  switch (segment) {
    case 1: tdot = 0.0; ldot = 1.0; break;
    case 2: tdot = 1.0; ldot = 0.0; break;
    case 3: tdot = 0.0; ldot = -1.0; break;
    case 4: tdot = -1.0; ldot = 0.0; break;
    default: throw std::invalid_argument("segment out of range");
  }
}

// one-sided/centered gradient reconstruction at boundary nodes (d<=2)
inline std::vector<Eigen::Vector2d> boundary_gradient(const GridDomain& g,
                                                      const VectorXd& u_comp) {
  std::vector<Eigen::Vector2d> out(g.num_boundary(), Eigen::Vector2d::Zero());
  const double h = g.h;
  const int n = g.n;
  auto val1 = [&](int i) { return u_comp[i]; };
  if (g.d == 1) {
    out[0][0] = (-3.0 * val1(0) + 4.0 * val1(1) - val1(2)) / (2.0 * h);
    out[1][0] = (3.0 * val1(n - 1) - 4.0 * val1(n - 2) + val1(n - 3)) / (2.0 * h);
    return out;
  }
  auto val = [&](int ix, int iy) { return u_comp[ix + n * iy]; };
  auto deriv = [&](int i, int nmax, auto get) {
    if (i == 0) return (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h);
    if (i == nmax - 1)
      return (3.0 * get(nmax - 1) - 4.0 * get(nmax - 2) + get(nmax - 3)) /
             (2.0 * h);
    return (get(i + 1) - get(i - 1)) / (2.0 * h);
  };
  for (int b = 0; b < g.num_boundary(); ++b) {
    const int id = g.boundary_nodes[b];
    const int ix = id % n, iy = id / n;
    out[b][0] = deriv(ix, n, [&](int i) { return val(i, iy); });
    out[b][1] = deriv(iy, n, [&](int i) { return val(ix, i); });
  }
  return out;
}

}  // namespace detail

/// Crossing form by the general derivative formula
/// m(q_i,q_j) = (1/t) <Vdot u_i, u_j>_{M_vol} - (tdot/t^2) <gamma_N u_i, gamma_D u_j>_{M_b}.
inline MatrixXd crossing_form(const ProblemContext& ctx, CrossingRecord& rec,
                              FormRoute route = FormRoute::General) {
  const int k = rec.kernel_dim;
  const GridDomain& g = *ctx.grid;
  const StiffnessMass& sm = *ctx.sm;
  const int N = sm.N;
  double tdot, ldot;
  detail::segment_rates(rec.segment, tdot, ldot);
  const auto Vsamp = sample_potential(*ctx.field, g, rec.t);

  std::vector<VectorXd> gammaN(k), gammaD(k);
  for (int i = 0; i < k; ++i) {
    gammaN[i] = weak_neumann_trace(rec.kernel[i], sm, Vsamp, rec.t, rec.lambda);
    gammaD[i] = dirichlet_trace(rec.kernel[i], sm);
  }

  MatrixXd m = MatrixXd::Zero(k, k);
  if (route == FormRoute::General || route == FormRoute::Sigma1Gram) {
    if (route == FormRoute::Sigma1Gram && rec.segment != 1)
      throw std::invalid_argument("crossing_form: the Sigma_1 Gram route applies to Sigma_1 only");
    const auto Vdot =
        detail::potential_rate(ctx, rec.t, rec.lambda, tdot, ldot);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        double vterm = 0.0;
        for (int p = 0; p < g.num_nodes; ++p) {
          const auto ui = rec.kernel[i].segment(p * N, N);
          const auto uj = rec.kernel[j].segment(p * N, N);
          vterm += sm.M_vol_scalar[p] * ui.dot(Vdot[p] * uj);
        }
        double bterm = 0.0;
        for (int b = 0; b < g.num_boundary(); ++b)
          bterm += sm.M_b_scalar[b] *
                   gammaN[i].segment(b * N, N).dot(gammaD[j].segment(b * N, N));
        m(i, j) = vterm / rec.t - tdot / (rec.t * rec.t) * bterm;
      }
  } else if (route == FormRoute::BoundaryFlux) {
    if (rec.segment != 2)
      throw std::invalid_argument("crossing_form: the boundary-flux route applies to Sigma_2 only");
    if (ctx.bc->kind != BoundaryCondition::Kind::DirichletBased ||
        !ctx.bc->is_pure_dirichlet())
      throw std::invalid_argument(
          "crossing_form: the boundary-flux route requires the pure Dirichlet condition");
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        double acc = 0.0;
        for (int b = 0; b < g.num_boundary(); ++b)
          acc += sm.M_b_scalar[b] * g.nu_dot_x[b] *
                 gammaN[i].segment(b * N, N).dot(gammaN[j].segment(b * N, N));
        m(i, j) = -acc / (rec.t * rec.t);
      }
  } else {  // boundary integral with reconstructed gradients
    if (rec.segment != 2)
      throw std::invalid_argument("crossing_form: the reconstructed-gradient route applies to Sigma_2 only");
    auto quad = [&](const VectorXd& u) {
      std::vector<std::vector<Eigen::Vector2d>> gradc(N);
      for (int c = 0; c < N; ++c) {
        VectorXd comp(g.num_nodes);
        for (int p = 0; p < g.num_nodes; ++p) comp[p] = u[p * N + c];
        gradc[c] = detail::boundary_gradient(g, comp);
      }
      double acc = 0.0;
      for (int b = 0; b < g.num_boundary(); ++b) {
        const int id = g.boundary_nodes[b];
        const Eigen::Vector2d x = g.coords[id];
        const Eigen::Vector2d nu = g.normals[b];
        double grad2 = 0.0, gradx_dot_gns = 0.0, gns_dot_u = 0.0;
        Eigen::VectorXd gns(N);
        for (int c = 0; c < N; ++c) gns[c] = nu.dot(gradc[c][b]);
        for (int c = 0; c < N; ++c) {
          grad2 += gradc[c][b].squaredNorm();
          gradx_dot_gns += gradc[c][b].dot(x) * gns[c];
          gns_dot_u += gns[c] * u[id * N + c];
        }
        const MatrixXd Vb = rec.t * rec.t * ctx.field->eval(rec.t * x);
        const auto ub = u.segment(id * N, N);
        const double vterm = ub.dot(Vb * ub) * g.nu_dot_x[b];
        acc += sm.M_b_scalar[b] *
               (grad2 * g.nu_dot_x[b] - 2.0 * gradx_dot_gns +
                (1.0 - g.d) * gns_dot_u + vterm);
      }
      return acc / (rec.t * rec.t);
    };
    for (int i = 0; i < k; ++i) {
      m(i, i) = quad(rec.kernel[i]);
      for (int j = i + 1; j < k; ++j) {
        const double qp = quad(rec.kernel[i] + rec.kernel[j]);
        const double qm = quad(rec.kernel[i] - rec.kernel[j]);
        m(i, j) = m(j, i) = 0.25 * (qp - qm);
      }
    }
  }
  m = 0.5 * (m + m.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  const double scale = std::max(1e-12, es.eigenvalues().cwiseAbs().maxCoeff());
  rec.n_plus = rec.n_minus = 0;
  rec.degenerate = false;
  for (int i = 0; i < k; ++i) {
    const double ev = es.eigenvalues()[i];
    if (std::abs(ev) <= 1e-8 * scale)
      rec.degenerate = true;
    else if (ev > 0)
      ++rec.n_plus;
    else
      ++rec.n_minus;
  }
  switch (rec.position) {
    case CrossingPosition::Interior: rec.contribution = rec.n_plus - rec.n_minus; break;
    case CrossingPosition::InitialEndpoint: rec.contribution = -rec.n_minus; break;
    case CrossingPosition::FinalEndpoint: rec.contribution = rec.n_plus; break;
  }
  rec.form = m;
  return m;
}

/// Segment Maslov index from regular crossings and the endpoint convention:
/// interior crossings contribute sign(m), the initial endpoint -n_-, the
/// final endpoint +n_+.
inline SegmentResult maslov_index_crossing_form(const ProblemContext& ctx,
                                                int segment, int n_samples = 200,
                                                double refine_tol = 1e-10) {
  SegmentResult res;
  res.segment = segment;
  res.crossings = detect_crossings(ctx, segment, n_samples, refine_tol);
  for (auto& rec : res.crossings) {
    crossing_form(ctx, rec, FormRoute::General);
    if (rec.degenerate) {
      std::string msg = "degenerate crossing at s=" + std::to_string(rec.s_star) +
                        ", form eigenvalues:";
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(rec.form);
      for (int i = 0; i < es.eigenvalues().size(); ++i)
        msg += " " + std::to_string(es.eigenvalues()[i]);
      throw std::runtime_error(msg);
    }
    res.index += rec.contribution;
  }
  return res;
}

namespace detail {

// phases of W relative to -1: delta = arg(-eig) in (-pi, pi]
inline std::vector<double> souriau_phases(const ProblemContext& ctx, double s) {
  const auto W = souriau_unitary(ctx.upsilon(s), ctx.G);
  Eigen::ComplexEigenSolver<MatrixXcd> es(W);
  std::vector<double> delta(W.rows());
  for (int i = 0; i < W.rows(); ++i) {
    double d = std::arg(-es.eigenvalues()[i]);
    if (std::abs(d) < 1e-9) d = 0.0;
    delta[i] = d;
  }
  std::sort(delta.begin(), delta.end());
  return delta;
}

inline double circ_dist(double a, double b) {
  double d = std::abs(a - b);
  return std::min(d, 2.0 * M_PI - d);
}

inline double phase_motion(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, circ_dist(a[i], b[i]));
  return m;
}

inline int count_window(const std::vector<double>& delta, double eps) {
  int k = 0;
  for (double d : delta)
    if (d >= 0.0 && d <= eps) ++k;
  return k;
}

// epsilon in (0, pi/2] centered in the largest gap of the endpoint spectra;
// the window count between the two samples is reliable only while no phase
// travels more than half that gap, so the gap is reported for refinement
struct EpsChoice {
  double eps = 0.25 * M_PI;
  double gap = 0.0;
};

inline EpsChoice choose_eps(const std::vector<double>& da,
                            const std::vector<double>& db) {
  std::vector<double> levels{0.0, 0.5 * M_PI};
  for (const auto* v : {&da, &db})
    for (double d : *v) {
      const double a = std::abs(d);
      if (a > 1e-12 && a < 0.5 * M_PI) levels.push_back(a);
    }
  std::sort(levels.begin(), levels.end());
  EpsChoice best;
  for (size_t i = 0; i + 1 < levels.size(); ++i) {
    const double gap = levels[i + 1] - levels[i];
    if (gap > best.gap) {
      best.gap = gap;
      best.eps = 0.5 * (levels[i] + levels[i + 1]);
    }
  }
  return best;
}

}  // namespace detail

/// Maslov index as the spectral flow of the Souriau unitary through -1,
/// accumulated over a sampled partition with adaptive refinement.
inline SegmentResult maslov_index_spectral_flow(const ProblemContext& ctx,
                                                int segment,
                                                int n_samples = 200) {
  const double a = ctx.path.seg_start(segment);
  const double b = ctx.path.seg_end(segment);
  struct Node {
    double s;
    std::vector<double> delta;
  };
  std::vector<Node> nodes;
  nodes.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const double s = a + (b - a) * i / (n_samples - 1.0);
    nodes.push_back({s, detail::souriau_phases(ctx, s)});
  }
  // refine until adjacent phase motion is small against both pi/4 and the
  // clearance of the counting window: with a dense spectrum a uniform drift
  // can carry phases across the window edge between samples even when the
  // per-index motion looks modest, so pi/4 alone is not enough
  const int max_extra = 20000;
  int extra = 0;
  for (size_t i = 0; i + 1 < nodes.size();) {
    const double motion =
        detail::phase_motion(nodes[i].delta, nodes[i + 1].delta);
    const auto win = detail::choose_eps(nodes[i].delta, nodes[i + 1].delta);
    if (motion > std::min(0.25 * M_PI, 0.5 * win.gap) &&
        nodes[i + 1].s - nodes[i].s > 1e-12 * std::max(1.0, b - a) &&
        extra < max_extra) {
      const double mid = 0.5 * (nodes[i].s + nodes[i + 1].s);
      nodes.insert(nodes.begin() + i + 1, {mid, detail::souriau_phases(ctx, mid)});
      ++extra;
    } else {
      ++i;
    }
  }
  if (extra >= max_extra)
    throw std::runtime_error("spectral flow: phase tracking did not resolve");

  SegmentResult res;
  res.segment = segment;
  for (size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double eps = detail::choose_eps(nodes[i].delta, nodes[i + 1].delta).eps;
    res.index += detail::count_window(nodes[i + 1].delta, eps) -
                 detail::count_window(nodes[i].delta, eps);
  }
  return res;
}

/// Sum of the four segment indices over the closed loop Gamma; the endpoint
/// convention makes the catenation additive, and homotopy invariance forces
/// the total to vanish.
inline MaslovResult maslov_closed_loop(const ProblemContext& ctx,
                                       bool spectral_flow = false,
                                       int n_samples = 200) {
  MaslovResult res;
  res.method = spectral_flow ? "spectral-flow" : "crossing-form";
  for (int seg = 1; seg <= 4; ++seg) {
    // on Sigma_1/3/4 the eigenvalue branches move monotonically in s, so a
    // coarser base sampling cannot miss a net index change there
    const int ns = seg == 2 ? n_samples : std::min(n_samples, 60);
    auto sr = spectral_flow ? maslov_index_spectral_flow(ctx, seg, ns)
                            : maslov_index_crossing_form(ctx, seg, ns);
    res.total += sr.index;
    res.segments.push_back(std::move(sr));
  }
  return res;
}

}  // namespace maslov
