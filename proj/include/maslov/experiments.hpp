#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maslov/assembly.hpp"
#include "maslov/asymptotics.hpp"
#include "maslov/dtn.hpp"
#include "maslov/grid.hpp"
#include "maslov/index.hpp"

namespace maslov {

using json = nlohmann::ordered_json;

/// Config for one verification run, parsed from JSON.  Schema:
/// { "domain": {"d":2,"n":17}, "system_dim": N,
///   "potential": {"kind":"constant","matrix":[[...]]} |
///                {"kind":"radial-quadratic","c0":..,"c1":..},
///   "bc": {"kind":"dirichlet"|"neumann"|"robin","theta":..} |
///         {"kind":"matrix","theta":[[...]]},
///   "path": {"tau":0.25,"Lambda":"auto"|number},
///   "out": "dir", "seed": 0, "samples_per_segment": 200 }
struct ExperimentConfig {
  int d = 2, n = 17, N = 1;
  std::string potential_kind = "constant";
  MatrixXd V_const;
  double poly_c0 = 0.0, poly_c1 = 0.0;
  std::string bc_kind = "neumann";
  MatrixXd theta;
  double tau = 0.25;
  double Lambda = -1.0;  // <= 0 means auto
  int samples_per_segment = 200;
  double refine_tol = 1e-10;
  std::string out_dir = "out";
  unsigned seed = 0;

  static ExperimentConfig from_json(const json& j);
  json echo() const;
  PotentialField potential() const;
  BoundaryCondition boundary_condition() const;
};

namespace detail {

inline MatrixXd parse_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("config: " + what + " must be a nonempty array");
  const size_t rows = j.size(), cols = j[0].size();
  MatrixXd m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw std::invalid_argument("config: " + what + " rows differ in length");
    for (size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline json matrix_to_json(const MatrixXd& m) {
  json out = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("domain")) {
    c.d = j["domain"].value("d", 2);
    c.n = j["domain"].value("n", 17);
  }
  c.N = j.value("system_dim", 1);
  if (c.N < 1) throw std::invalid_argument("config: system_dim must be >= 1");

  const json pot = j.value("potential", json{{"kind", "constant"}});
  c.potential_kind = pot.value("kind", "constant");
  if (c.potential_kind == "constant") {
    if (pot.contains("matrix"))
      c.V_const = detail::parse_matrix(pot["matrix"], "potential.matrix");
    else if (pot.contains("value"))
      c.V_const = pot["value"].get<double>() * MatrixXd::Identity(c.N, c.N);
    else
      c.V_const = MatrixXd::Zero(c.N, c.N);
    if (c.V_const.rows() != c.N)
      throw std::invalid_argument("config: potential size != system_dim");
  } else if (c.potential_kind == "radial-quadratic") {
    if (c.N != 1)
      throw std::invalid_argument("config: radial-quadratic needs system_dim 1");
    c.poly_c0 = pot.value("c0", 0.0);
    c.poly_c1 = pot.value("c1", 0.0);
  } else {
    throw std::invalid_argument("config: unknown potential kind '" +
                                c.potential_kind + "'");
  }

  const json bc = j.value("bc", json{{"kind", "neumann"}});
  c.bc_kind = bc.value("kind", "neumann");
  if (c.bc_kind == "robin") {
    c.theta = bc.value("theta", 0.0) * MatrixXd::Identity(c.N, c.N);
  } else if (c.bc_kind == "matrix") {
    c.theta = detail::parse_matrix(bc.at("theta"), "bc.theta");
    if (c.theta.rows() != c.N || c.theta.cols() != c.N)
      throw std::invalid_argument(
          "config: bc.theta must be system_dim x system_dim");
  } else if (c.bc_kind == "dirichlet" || c.bc_kind == "neumann") {
    c.theta = MatrixXd::Zero(c.N, c.N);
  } else {
    throw std::invalid_argument("config: unknown bc kind '" + c.bc_kind + "'");
  }

  if (j.contains("path")) {
    c.tau = j["path"].value("tau", 0.25);
    if (j["path"].contains("Lambda") && !j["path"]["Lambda"].is_string())
      c.Lambda = j["path"]["Lambda"].get<double>();
  }
  if (!(c.tau > 0.0 && c.tau <= 1.0))
    throw std::invalid_argument("config: tau must be in (0,1]");
  c.samples_per_segment = j.value("samples_per_segment", 200);
  c.refine_tol = j.value("refine_tol", 1e-10);
  c.out_dir = j.value("out", "out");
  c.seed = j.value("seed", 0u);
  return c;
}

inline json ExperimentConfig::echo() const {
  json j;
  j["domain"] = {{"d", d}, {"n", n}};
  j["system_dim"] = N;
  if (potential_kind == "constant")
    j["potential"] = {{"kind", "constant"},
                      {"matrix", detail::matrix_to_json(V_const)}};
  else
    j["potential"] = {{"kind", potential_kind}, {"c0", poly_c0}, {"c1", poly_c1}};
  if (bc_kind == "robin")
    j["bc"] = {{"kind", "robin"}, {"theta", theta(0, 0)}};
  else if (bc_kind == "matrix")
    j["bc"] = {{"kind", "matrix"}, {"theta", detail::matrix_to_json(theta)}};
  else
    j["bc"] = {{"kind", bc_kind}};
  j["path"] = {{"tau", tau},
               {"Lambda", Lambda > 0.0 ? json(Lambda) : json("auto")}};
  j["samples_per_segment"] = samples_per_segment;
  j["refine_tol"] = refine_tol;
  j["seed"] = seed;
  return j;
}

inline PotentialField ExperimentConfig::potential() const {
  if (potential_kind == "constant") return PotentialField::constant(V_const);
  const double c0 = poly_c0, c1 = poly_c1;
  return PotentialField::scalar(
      [c0, c1](const Eigen::Vector2d& x) { return c0 + c1 * x.squaredNorm(); },
      [c1](const Eigen::Vector2d& x) { return Eigen::Vector2d(2.0 * c1 * x); });
}

inline BoundaryCondition ExperimentConfig::boundary_condition() const {
  if (bc_kind == "dirichlet") return BoundaryCondition::dirichlet(N);
  return BoundaryCondition::robin_matrix(theta);
}

struct IdentityRecord {
  std::string name;
  double lhs = 0.0, rhs = 0.0;
  bool integer_identity = true;
  double tol = 0.0;  // unused for integer identities
  bool ok = false;
  std::string details;
};

struct TraceSample {
  double s = 0.0, lambda = 0.0, t = 0.0;
  int segment = 0;
  double mu_min = 0.0;
  std::vector<double> eigenphases;
};

struct BranchTable {
  std::vector<double> taus;
  MatrixXd values;  // taus x N
};

struct VerificationReport {
  std::string experiment;
  json inputs;
  std::vector<IdentityRecord> identities;
  std::vector<CrossingRecord> crossings;
  std::vector<TraceSample> trace;
  BranchTable branches;  // asymptotics only
  double chosen_Lambda = 0.0;
  double seconds = 0.0;
  bool pass = true;

  void add(IdentityRecord rec) {
    pass = pass && rec.ok;
    identities.push_back(std::move(rec));
  }
  void add_exact(const std::string& name, long lhs, long rhs,
                 const std::string& details = "") {
    IdentityRecord r;
    r.name = name;
    r.lhs = static_cast<double>(lhs);
    r.rhs = static_cast<double>(rhs);
    r.ok = lhs == rhs;
    r.details = details;
    add(std::move(r));
  }
  void add_bounded(const std::string& name, double value, double bound,
                   const std::string& details = "") {
    IdentityRecord r;
    r.name = name;
    r.lhs = value;
    r.rhs = 0.0;
    r.integer_identity = false;
    r.tol = bound;
    r.ok = value <= bound;
    r.details = details;
    add(std::move(r));
  }
  json to_json() const;
};

namespace detail {

inline void collect_trace(const ProblemContext& ctx, VerificationReport& rep,
                          int per_segment = 25) {
  for (int seg = 1; seg <= 4; ++seg) {
    const double a = ctx.path.seg_start(seg), b = ctx.path.seg_end(seg);
    for (int i = 0; i < per_segment; ++i) {
      const double s = a + (b - a) * i / (per_segment - 1.0);
      TraceSample ts;
      ts.s = s;
      const auto pt = ctx.path.eval(s);
      ts.lambda = pt.lambda;
      ts.t = pt.t;
      ts.segment = pt.segment;
      const auto sp = pencil_spectrum(ctx.pencil(s));
      int imin = 0;
      sp.eigenvalues.cwiseAbs().minCoeff(&imin);
      ts.mu_min = sp.eigenvalues[imin];
      ts.eigenphases = souriau_phases(ctx, s);
      rep.trace.push_back(std::move(ts));
    }
  }
}

inline const char* position_name(CrossingPosition p) {
  switch (p) {
    case CrossingPosition::Interior: return "interior";
    case CrossingPosition::InitialEndpoint: return "initial";
    default: return "final";
  }
}

}  // namespace detail

/// verify-dirichlet: Mor(L_{H_D}) = -Mas(Upsilon|Sigma_2) = conjugate-point
/// count, all exact integers.
inline void run_verify_dirichlet(const ExperimentConfig& cfg,
                                 VerificationReport& rep) {
  if (cfg.bc_kind != "dirichlet")
    throw std::invalid_argument("verify-dirichlet requires bc kind dirichlet");
  const auto grid = build_square_grid(cfg.d, cfg.n);
  const auto sm = build_stiffness_mass(grid, cfg.N);
  const auto field = cfg.potential();
  const auto bc = cfg.boundary_condition();
  ProblemContext ctx(grid, sm, field, bc, cfg.tau, cfg.Lambda);
  rep.chosen_Lambda = ctx.path.Lambda;

  const double s_end = 1.0 - cfg.tau;  // (lambda, t) = (0, 1)
  const int mor = morse_index(ctx.pencil(s_end));
  const auto seg2 = maslov_index_crossing_form(ctx, 2, cfg.samples_per_segment,
                                               cfg.refine_tol);
  long conj = 0;
  for (const auto& c : seg2.crossings)
    if (c.position != CrossingPosition::FinalEndpoint) conj += c.kernel_dim;
  rep.crossings = seg2.crossings;
  rep.add_exact("morse == -maslov_sigma2", mor, -seg2.index);
  rep.add_exact("-maslov_sigma2 == conjugate_points", -seg2.index, conj);

  const auto sf = maslov_index_spectral_flow(ctx, 2, cfg.samples_per_segment);
  rep.add_exact("crossing_form == spectral_flow (sigma2)", seg2.index, sf.index);
}

/// verify-neumann / verify-robin-scalar: Mor(L_G) = -Mas + Mor(-B) + Mor(QVQ).
inline void run_verify_neumann(const ExperimentConfig& cfg,
                               VerificationReport& rep, bool scalar_display) {
  if (cfg.bc_kind == "dirichlet")
    throw std::invalid_argument("verify-neumann requires a Neumann-based bc");
  if (scalar_display && cfg.N != 1)
    throw std::invalid_argument("verify-robin-scalar requires system_dim 1");
  const auto grid = build_square_grid(cfg.d, cfg.n);
  const auto sm = build_stiffness_mass(grid, cfg.N);
  const auto field = cfg.potential();
  const auto bc = cfg.boundary_condition();
  ProblemContext ctx(grid, sm, field, bc, cfg.tau, cfg.Lambda);
  rep.chosen_Lambda = ctx.path.Lambda;

  const auto bf = compute_boundary_form(bc, grid, field);
  const double s_end = 1.0 - cfg.tau;
  const int mor = morse_index(ctx.pencil(s_end));
  const auto seg2 = maslov_index_crossing_form(ctx, 2, cfg.samples_per_segment,
                                               cfg.refine_tol);
  rep.crossings = seg2.crossings;
  rep.add_exact("morse == -maslov + mor(-B) + mor(QVQ)", mor,
                -seg2.index + bf.morse_minus_B() + bf.morse_QVQ(),
                "mor(-B)=" + std::to_string(bf.morse_minus_B()) +
                    " mor(QVQ)=" + std::to_string(bf.morse_QVQ()));
  if (scalar_display) {
    // scalar case: no correction iff B < 0, or B = 0 and V(0) > 0
    const double B = bf.B(0, 0), v0 = bf.V0(0, 0);
    const double tol = 1e-10 * std::max(1.0, std::abs(B));
    const int corr = B > tol ? 1 : (std::abs(B) <= tol && v0 < 0.0 ? 1 : 0);
    rep.add_exact("scalar display: morse == -maslov + correction", mor,
                  -seg2.index + corr, "correction=" + std::to_string(corr));
  }
  const auto sf = maslov_index_spectral_flow(ctx, 2, cfg.samples_per_segment);
  rep.add_exact("crossing_form == spectral_flow (sigma2)", seg2.index, sf.index);
}

/// loop-zero: total Maslov index over the closed curve Gamma vanishes, by
/// both methods, and the methods agree segment by segment.
inline void run_loop_zero(const ExperimentConfig& cfg, VerificationReport& rep) {
  const auto grid = build_square_grid(cfg.d, cfg.n);
  const auto sm = build_stiffness_mass(grid, cfg.N);
  const auto field = cfg.potential();
  const auto bc = cfg.boundary_condition();
  ProblemContext ctx(grid, sm, field, bc, cfg.tau, cfg.Lambda);
  rep.chosen_Lambda = ctx.path.Lambda;

  const auto cf = maslov_closed_loop(ctx, false, cfg.samples_per_segment);
  const auto sf = maslov_closed_loop(ctx, true, cfg.samples_per_segment);
  rep.add_exact("closed loop total (crossing form)", cf.total, 0);
  rep.add_exact("closed loop total (spectral flow)", sf.total, 0);
  for (int j = 0; j < 4; ++j) {
    rep.add_exact("segment " + std::to_string(j + 1) + " methods agree",
                  cf.segments[j].index, sf.segments[j].index);
    // junction crossings are listed once, on the segment that starts there
    for (const auto& c : cf.segments[j].crossings)
      if (c.position != CrossingPosition::FinalEndpoint)
        rep.crossings.push_back(c);
  }
  detail::collect_trace(ctx, rep);
}

/// dtn-diagnostics: symmetry, inverse relation, frame agreement and isotropy
/// of the trace subspace along Sigma_2.
inline void run_dtn_diagnostics(const ExperimentConfig& cfg,
                                VerificationReport& rep) {
  const auto grid = build_square_grid(cfg.d, cfg.n);
  const auto sm = build_stiffness_mass(grid, cfg.N);
  const auto field = cfg.potential();
  const auto space = boundary_space(grid, cfg.N);
  GammaPath path(cfg.tau, 1.0);

  double sym_max = 0.0, comp_max = 0.0, frame_max = 0.0, iso_max = 0.0;
  const int samples = 21;
  int used = 0;
  for (int i = 1; i + 1 < samples; ++i) {  // interior points of Sigma_2
    const double s = (1.0 - cfg.tau) * i / (samples - 1.0);
    DtNMap dtn, ntd;
    try {
      dtn = dirichlet_to_neumann(grid, sm, field, path, s);
      ntd = neumann_to_dirichlet(grid, sm, field, path, s);
    } catch (const std::exception&) {
      continue;  // spectrum hit at this sample; skip
    }
    ++used;
    sym_max = std::max({sym_max, dtn.sym_defect, ntd.sym_defect});
    const MatrixXd comp = dtn.matrix * ntd.matrix +
                          MatrixXd::Identity(dtn.matrix.rows(), dtn.matrix.cols());
    comp_max = std::max(comp_max, comp.norm() / std::max(1.0, dtn.matrix.norm() *
                                                                  ntd.matrix.norm()));
    const double t = path.eval(s).t;
    const auto Fg = build_graph_lagrangian(-dtn.matrix / t, GraphMode::Graph, space);
    const auto Fi =
        build_graph_lagrangian(t * ntd.matrix, GraphMode::InverseGraph, space);
    frame_max = std::max(
        frame_max, (orth_projection(Fg) - orth_projection(Fi)).norm());
    iso_max = std::max(
        iso_max, detail::frame_isotropy_defect(Fg.basis, space.half_dim));
    iso_max = std::max(
        iso_max, detail::frame_isotropy_defect(Fi.basis, space.half_dim));
  }
  rep.add_bounded("weighted symmetry defect of N_s, M_s", sym_max, 1e-8);
  rep.add_bounded("composition defect N(-M) = I", comp_max, 1e-7);
  rep.add_bounded("graph vs inverse-graph frame distance", frame_max, 1e-7);
  rep.add_bounded("trace subspace isotropy defect", iso_max, 1e-11);
  rep.add_exact("samples evaluated", used, used,
                std::to_string(used) + " of " + std::to_string(samples - 2));
}

/// asymptotics: eigenvalue expansion fit and the small-tau Morse split.
inline void run_asymptotics(const ExperimentConfig& cfg,
                            VerificationReport& rep) {
  if (cfg.bc_kind == "dirichlet")
    throw std::invalid_argument("asymptotics requires a Neumann-based bc");
  const auto grid = build_square_grid(cfg.d, cfg.n);
  const auto sm = build_stiffness_mass(grid, cfg.N);
  const auto field = cfg.potential();
  const auto bc = cfg.boundary_condition();

  std::vector<double> taus;
  for (int p = 4; p <= 9; ++p) taus.push_back(std::ldexp(1.0, -p));
  const auto fit = eigenvalue_expansion_fit(grid, sm, field, bc, taus);
  rep.branches.taus = fit.taus;
  rep.branches.values = fit.branches;

  double slope_err = 0.0, curv_err = 0.0;
  for (const auto& f : fit.fits) {
    slope_err = std::max(slope_err, f.slope_err);
    if (f.zero_slope) curv_err = std::max(curv_err, f.curvature_err);
  }
  rep.add_bounded("slope fit error vs eig(-B)/|Omega|", slope_err, 1e-2);
  rep.add_bounded("curvature fit error vs eig(Q0 V(0) Q0)", curv_err, 1e-2);

  const auto checks = verify_small_tau_morse(grid, sm, field, bc,
                                             {taus[3], taus[4], taus[5]});
  for (const auto& c : checks)
    rep.add_exact("small-tau morse split at tau=" + std::to_string(c.tau),
                  c.morse, c.predicted,
                  c.separated ? "group separated" : "group NOT separated");
}

inline VerificationReport run_experiment(const ExperimentConfig& cfg,
                                         const std::string& name) {
  VerificationReport rep;
  rep.experiment = name;
  rep.inputs = cfg.echo();
  const auto start = std::chrono::steady_clock::now();
  try {
    if (name == "verify-dirichlet")
      run_verify_dirichlet(cfg, rep);
    else if (name == "verify-neumann")
      run_verify_neumann(cfg, rep, false);
    else if (name == "verify-robin-scalar")
      run_verify_neumann(cfg, rep, true);
    else if (name == "loop-zero")
      run_loop_zero(cfg, rep);
    else if (name == "dtn-diagnostics")
      run_dtn_diagnostics(cfg, rep);
    else if (name == "asymptotics")
      run_asymptotics(cfg, rep);
    else
      throw std::invalid_argument("unknown experiment '" + name + "'");
  } catch (const std::exception& e) {
    throw std::runtime_error("experiment '" + name + "': " + e.what());
  }
  rep.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rep;
}

inline std::vector<std::string> experiment_names() {
  return {"verify-dirichlet", "verify-neumann", "verify-robin-scalar",
          "loop-zero", "dtn-diagnostics", "asymptotics"};
}

inline json VerificationReport::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["inputs"] = inputs;
  j["chosen_Lambda"] = chosen_Lambda;
  j["identities"] = json::array();
  for (const auto& r : identities) {
    json e;
    e["name"] = r.name;
    e["lhs"] = r.lhs;
    e["rhs"] = r.rhs;
    e["kind"] = r.integer_identity ? "integer" : "bounded";
    if (!r.integer_identity) e["tol"] = r.tol;
    e["ok"] = r.ok;
    if (!r.details.empty()) e["details"] = r.details;
    j["identities"].push_back(e);
  }
  j["crossings"] = json::array();
  for (const auto& c : crossings)
    j["crossings"].push_back({{"s_star", c.s_star},
                              {"segment", c.segment},
                              {"lambda", c.lambda},
                              {"t", c.t},
                              {"kernel_dim", c.kernel_dim},
                              {"intersection_dim", c.frame_intersection_dim},
                              {"position", detail::position_name(c.position)},
                              {"n_plus", c.n_plus},
                              {"n_minus", c.n_minus},
                              {"contribution", c.contribution}});
  j["pass"] = pass;
  j["timing_seconds"] = seconds;
  return j;
}

namespace detail {

inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Writes report.json plus crossings.csv, trace.csv and (for asymptotics)
/// branches.csv into out_dir.  Files are written atomically.
inline void emit_report(const VerificationReport& rep,
                        const std::filesystem::path& out_dir) {
  detail::atomic_write(out_dir / "report.json", rep.to_json().dump(2) + "\n");

  std::ostringstream cs;
  cs << "s_star,segment,lambda,t,kernel_dim,signature,contribution\n";
  for (const auto& c : rep.crossings)
    cs << detail::fmt(c.s_star) << ',' << c.segment << ','
       << detail::fmt(c.lambda) << ',' << detail::fmt(c.t) << ','
       << c.kernel_dim << ',' << (c.n_plus - c.n_minus) << ','
       << c.contribution << '\n';
  detail::atomic_write(out_dir / "crossings.csv", cs.str());

  if (!rep.trace.empty()) {
    std::ostringstream ts;
    const size_t m = rep.trace.front().eigenphases.size();
    ts << "s,segment,lambda,t,mu_min";
    for (size_t i = 0; i < m; ++i) ts << ",phase_" << i;
    ts << '\n';
    for (const auto& p : rep.trace) {
      ts << detail::fmt(p.s) << ',' << p.segment << ',' << detail::fmt(p.lambda)
         << ',' << detail::fmt(p.t) << ',' << detail::fmt(p.mu_min);
      for (double ph : p.eigenphases) ts << ',' << detail::fmt(ph);
      ts << '\n';
    }
    detail::atomic_write(out_dir / "trace.csv", ts.str());
  }

  if (!rep.branches.taus.empty()) {
    std::ostringstream bs;
    bs << "tau";
    for (int j = 0; j < rep.branches.values.cols(); ++j) bs << ",lambda_" << j;
    bs << '\n';
    for (size_t k = 0; k < rep.branches.taus.size(); ++k) {
      bs << detail::fmt(rep.branches.taus[k]);
      for (int j = 0; j < rep.branches.values.cols(); ++j)
        bs << ',' << detail::fmt(rep.branches.values(k, j));
      bs << '\n';
    }
    detail::atomic_write(out_dir / "branches.csv", bs.str());
  }
}

}  // namespace maslov
