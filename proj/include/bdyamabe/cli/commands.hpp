#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../geometry_checks.hpp"
#include "../halfspace.hpp"
#include "../mass_flux.hpp"
#include "../variational.hpp"
#include "config.hpp"

namespace bdyamabe::cli {

/// Raised by a command for numerical non-convergence once its outputs are written.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------------------
// Option tables
// ---------------------------------------------------------------------------

inline std::vector<OptionSpec> common_options() {
  return {
      {"n", Kind::integer, 3, "ambient dimension n >= 3"},
      {"seed", Kind::seed, nullptr, "seed for every randomized choice"},
      {"jobs", Kind::integer, 1, "worker threads (sweep)"},
      {"out", Kind::text, nullptr, "output directory (overrides $BDYAMABE_OUT_DIR)"},
  };
}

inline std::vector<OptionSpec> solver_options() {
  return {
      {"M", Kind::integer, 2000, "radial mesh intervals"},
      {"grading", Kind::real, 1.0, "ball mesh grading exponent (>= 1)"},
      {"geometry", Kind::text, "ball", "ball | annulus"},
      {"r_in", Kind::real, 0.5, "annulus inner radius"},
      {"r_out", Kind::real, 1.0, "annulus outer radius"},
      {"schedule", Kind::real_list, nullptr, "comma-separated increasing exponents q"},
      {"schedule_count", Kind::integer, 7, "length of the default schedule q_k = q_crit - 2^{-k-1}"},
      {"tol", Kind::real, 1e-6, "Euler-Lagrange residual tolerance"},
      {"max_iterations", Kind::integer, 50000, "iteration cap per exponent"},
  };
}

inline std::vector<OptionSpec> command_options(const std::string& cmd) {
  std::vector<OptionSpec> s = common_options();
  auto add = [&](std::vector<OptionSpec> more) { s.insert(s.end(), more.begin(), more.end()); };
  if (cmd == "cap") {
    add({{"a", Kind::real, 1.0, "interior weight a >= 0"}, {"b", Kind::real, 1.0, "boundary weight b >= 0"}});
  } else if (cmd == "solve") {
    add({{"a", Kind::real, 1.0, "interior weight a >= 0"}, {"b", Kind::real, 1.0, "boundary weight b >= 0"}});
    add(solver_options());
  } else if (cmd == "sweep") {
    add({{"a_values", Kind::real_list, Json::array({0.5, 1.0, 2.0, 4.0}), "increasing a grid"},
         {"b_values", Kind::real_list, Json::array({0.5, 1.0, 2.0, 4.0}), "increasing b grid"},
         {"monotonicity_tol", Kind::real, 1e-3, "allowed relative increase of Y along an axis"}});
    add(solver_options());
  } else if (cmd == "verify") {
    add({{"identity", Kind::text, "all", "bubble | einstein | lin-scalar | lin-mean | second-var | st-boundary | all"},
         {"a", Kind::real, 1.0, "weight a of the bubble's cap"},
         {"b", Kind::real, 1.0, "weight b of the bubble's cap"},
         {"eps", Kind::real, 1.0, "bubble scale"},
         {"mode", Kind::text, "fd", "fd | analytic"},
         {"field", Kind::text, "standard", "standard | dilation | translation | random-cubic"},
         {"L", Kind::real, 0.5, "half-width of the verification box"},
         {"nodes", Kind::integer, 8, "coarse nodes per half axis"},
         {"levels", Kind::integer, 3, "grid levels h, h/2, ..."},
         {"points", Kind::integer, 100, "random points for the Einstein identity"}});
  } else if (cmd == "mass") {
    add({{"metric", Kind::text, "conformal", "flat | conformal | twist"},
         {"m", Kind::real, 0.1, "conformal metric parameter"},
         {"c", Kind::real, 0.1, "twist metric parameter"},
         {"radii", Kind::real_list, Json::array({20.0, 40.0, 80.0}), "increasing radii >= 2"},
         {"resolution", Kind::integer, 16, "Gauss points per polar angle"}});
  } else if (cmd == "flux") {
    add({{"rho", Kind::real_list, Json::array({0.5, 0.25, 0.125}), "radii in (0, 1]"},
         {"c", Kind::real, 0.0, "constant added to G = |y|^{2-n}"},
         {"tensor", Kind::text, "zero", "zero | tangential | fermi"},
         {"resolution", Kind::integer, 16, "Gauss points per polar angle"}});
  }
  return s;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"cap", "solve", "sweep", "verify", "mass", "flux"};
  return names;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
inline Json num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_text(std::string s) {
  for (char& c : s)
    if (c == '"' || c == '\n' || c == '\r') c = '\'';
  return "\"" + s + "\"";
}

inline void write_text(const std::filesystem::path& p, const std::string& body) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  f << body;
}

inline void emit(const Config& cfg, Io& io, const Json& doc, bool always_write) {
  const std::string body = doc.dump(2) + "\n";
  io.out << body;
  if (always_write || cfg.explicit_out_dir()) write_text(cfg.out_dir() / (cfg.command() + ".json"), body);
}

// ---------------------------------------------------------------------------
// cap
// ---------------------------------------------------------------------------

inline int cmd_cap(const Config& cfg, Io& io) {
  const Dim dim(cfg.integer("n"));
  const Weights w(cfg.real("a"), cfg.real("b"));
  Json doc;
  doc["command"] = "cap";
  doc["n"] = dim.n();
  doc["a"] = w.a();
  doc["b"] = w.b();
  if (w.a() == 0.0) {
    doc["branch"] = "boundary-limit";
    doc["r"] = doc["T_c"] = doc["A"] = doc["B"] = nullptr;
    doc["Y"] = num(yamabe_halfspace(w, dim));
    doc["identity_residuals"] = {{"cap_equation", nullptr}, {"balance", nullptr}, {"formula_gap", nullptr}};
  } else {
    const CapSolution s = cap_solution(w, dim);
    doc["branch"] = w.b() == 0.0 ? "hemisphere" : "cap";
    doc["r"] = num(s.r);
    doc["T_c"] = num(s.T_c);
    doc["A"] = num(s.A);
    doc["B"] = num(s.B);
    doc["Y"] = num(s.Y);
    doc["identity_residuals"] = {{"cap_equation", num(s.equation_residual)},
                                 {"balance", num(s.balance_residual)},
                                 {"formula_gap", num(s.formula_gap)}};
  }
  emit(cfg, io, doc, false);
  return kOk;
}

// ---------------------------------------------------------------------------
// solve / sweep
// ---------------------------------------------------------------------------

inline BackgroundGeometry make_geometry(const Config& cfg, const Dim& dim) {
  const std::string g = cfg.text("geometry");
  if (g == "ball") return BackgroundGeometry::ball(cfg.integer("M"), dim, cfg.real("grading"));
  if (g == "annulus") return BackgroundGeometry::annulus(cfg.integer("M"), dim, cfg.real("r_in"), cfg.real("r_out"));
  throw ConfigError("unknown geometry '" + g + "' (expected ball or annulus)");
}

inline std::vector<double> make_schedule(const Config& cfg, const Dim& dim) {
  if (cfg.is_set("schedule")) {
    const auto s = cfg.reals("schedule");
    if (s.empty()) throw ConfigError("empty q schedule");
    return s;
  }
  const int k = cfg.integer("schedule_count");
  if (k < 1) throw ConfigError("schedule_count must be >= 1");
  return default_schedule(dim, k);
}

inline MinimizeOptions make_options(const Config& cfg) {
  MinimizeOptions o;
  o.tol = cfg.real("tol");
  o.max_iterations = cfg.integer("max_iterations");
  if (!(o.tol > 0.0) || o.max_iterations < 1) throw ConfigError("tol must be positive and max_iterations >= 1");
  return o;
}

inline int cmd_solve(const Config& cfg, Io& io) {
  const Dim dim(cfg.integer("n"));
  const Weights w(cfg.real("a"), cfg.real("b"));
  const BackgroundGeometry geom = make_geometry(cfg, dim);
  const auto schedule = make_schedule(cfg, dim);
  const MinimizeOptions opts = make_options(cfg);
  const CriticalLimitResult cl = critical_limit(geom, w, schedule, opts, cfg.seed());

  std::string csv = "q,mu_q,el_residual,iterations\n";
  double worst_el = 0.0;
  for (const auto& r : cl.runs) {
    csv += fmt(r.q) + "," + fmt(r.mu) + "," + fmt(r.el_residual) + "," + std::to_string(r.iterations) + "\n";
    worst_el = std::max(worst_el, r.el_residual);
  }
  write_text(cfg.out_dir() / "solve.csv", csv);

  const bool ball = cfg.text("geometry") == "ball";
  const double Yhs = yamabe_halfspace(w, dim);
  const ConformalCurvatures c = conformal_curvatures(cl.runs.back(), w, geom, cl.Y_extrapolated);
  Json doc;
  doc["command"] = "solve";
  doc["n"] = dim.n();
  doc["a"] = w.a();
  doc["b"] = w.b();
  doc["geometry"] = cfg.text("geometry");
  doc["M"] = cfg.integer("M");
  doc["Y_extrapolated"] = num(cl.Y_extrapolated);
  doc["Y_halfspace"] = num(Yhs);
  doc["Y_closed_form_if_ball"] = ball ? num(Yhs) : Json(nullptr);
  doc["relative_gap"] = num(std::abs(cl.Y_extrapolated - Yhs) / Yhs);
  doc["below_halfspace"] = cl.Y_extrapolated <= Yhs * (1.0 + 1e-6);
  doc["R_g"] = num(c.R_g);
  doc["h_g"] = num(c.h_g);
  doc["h_normalized"] = num(c.h_normalized);
  doc["max_el_residual"] = num(worst_el);
  doc["all_converged"] = cl.all_converged;
  doc["flags"] = cl.flags;
  emit(cfg, io, doc, true);
  if (!cl.all_converged) throw NonConvergence("solver did not converge: " + cl.flags.front());
  return kOk;
}

inline int cmd_sweep(const Config& cfg, Io& io) {
  const Dim dim(cfg.integer("n"));
  const auto av = cfg.reals("a_values"), bv = cfg.reals("b_values");
  if (av.empty() || bv.empty()) throw ConfigError("sweep needs nonempty a_values and b_values");
  const BackgroundGeometry geom = make_geometry(cfg, dim);
  const auto schedule = make_schedule(cfg, dim);
  const MinimizeOptions opts = make_options(cfg);
  const int jobs = cfg.integer("jobs");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  const SweepResult res = sweep_ab(geom, av, bv, schedule, opts, jobs, cfg.seed(), cfg.real("monotonicity_tol"));

  std::string csv = "a,b,Y,Y_halfspace,relative_gap,R_g,h_g,h_normalized,ok,error\n";
  std::size_t ok = 0;
  for (const auto& r : res.rows) {
    const double Yhs = yamabe_halfspace(Weights(r.a, r.b), dim);
    csv += fmt(r.a) + "," + fmt(r.b) + "," + fmt(r.Y) + "," + fmt(Yhs) + "," + fmt(std::abs(r.Y - Yhs) / Yhs) + "," +
           fmt(r.R_g) + "," + fmt(r.h_g) + "," + (r.h_normalized ? fmt(*r.h_normalized) : "") + "," +
           (r.ok ? "1" : "0") + "," + (r.error.empty() ? "" : csv_text(r.error)) + "\n";
    ok += r.ok ? 1 : 0;
  }
  write_text(cfg.out_dir() / "sweep.csv", csv);

  // h_normalized along increasing b for each fixed a.
  const std::size_t na = av.size(), nb = bv.size();
  bool h_increasing = true;
  for (std::size_t j = 0; j < na; ++j)
    for (std::size_t i = 0; i + 1 < nb; ++i) {
      const auto& lo = res.rows[i * na + j];
      const auto& hi = res.rows[(i + 1) * na + j];
      if (lo.ok && hi.ok && lo.h_normalized && hi.h_normalized && !(*hi.h_normalized > *lo.h_normalized))
        h_increasing = false;
    }
  const double fraction = static_cast<double>(ok) / res.rows.size();
  Json doc;
  doc["command"] = "sweep";
  doc["n"] = dim.n();
  doc["geometry"] = cfg.text("geometry");
  doc["M"] = cfg.integer("M");
  doc["a_values"] = av;
  doc["b_values"] = bv;
  doc["cells"] = res.rows.size();
  doc["succeeded"] = ok;
  doc["success_fraction"] = fraction;
  doc["monotonicity"] = {{"rows_nonincreasing_in_a", res.monotonicity.rows_nonincreasing},
                         {"columns_nonincreasing_in_b", res.monotonicity.columns_nonincreasing},
                         {"worst_relative_increase", num(res.monotonicity.worst_violation)},
                         {"tolerance", cfg.real("monotonicity_tol")}};
  doc["h_normalized_increasing_in_b"] = h_increasing;
  emit(cfg, io, doc, true);
  if (fraction < 0.9) throw NonConvergence("fewer than 90% of sweep cells succeeded");
  return kOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& identity_names() {
  static const std::vector<std::string> names{"bubble", "einstein", "lin-scalar", "lin-mean", "second-var", "st-boundary"};
  return names;
}

inline Json study_json(const RefinementStudy& st) {
  Json orders = Json::array();
  for (const auto& o : st.orders) orders.push_back(o.order ? num(*o.order) : Json("exact"));
  Json res = Json::array(), abs = Json::array();
  for (double r : st.residuals) res.push_back(num(r));
  for (double r : st.absolute) abs.push_back(num(r));
  return {{"h", st.h}, {"residuals", res}, {"absolute", abs}, {"orders", orders}};
}

template <int N>
Json verify_dimension(const Config& cfg, const std::string& which, double eps, DerivativeMode mode) {
  using V = AdmissibleVectorField<N>;
  using H = PerturbationTensor<N>;
  const Dim dim(N);
  const Bubble bub = bubble_for(Weights(cfg.real("a"), cfg.real("b")), dim, eps);
  const std::uint64_t seed = cfg.seed().value_or(1);
  const int levels = cfg.integer("levels"), nodes = cfg.integer("nodes");
  if (levels < 2) throw ConfigError("levels must be >= 2");
  if (nodes < 2) throw ConfigError("nodes must be >= 2");
  const double L = cfg.real("L");
  if (!(L > 0.0)) throw ConfigError("L must be positive");
  const HalfGrid grid = HalfGrid::box(dim, L, nodes);
  const bool analytic = mode == DerivativeMode::analytic;

  std::vector<V> fields;
  const std::string f = cfg.text("field");
  if (f == "standard" || f == "dilation") fields.push_back(V::dilation());
  if (f == "standard" || f == "translation") fields.push_back(V::translation(0));
  if (f == "standard" || f == "random-cubic") fields.push_back(V::random_cubic(seed));
  if (fields.empty()) throw ConfigError("unknown field '" + f + "'");

  Json checks = Json::array();
  auto add = [&](const std::string& name, const std::string& field, bool passed, Json detail) {
    Json c;
    c["identity"] = name;
    c["field"] = field;
    c["passed"] = passed;
    c["detail"] = std::move(detail);
    checks.push_back(std::move(c));
  };
  auto want = [&](const std::string& n) { return which == "all" || which == n; };

  if (want("bubble")) {
    const PdeResidual r = verify_bubble_pde(bub, HalfGrid::box(dim, 3.0, nodes));
    const bool ok = std::min(r.interior, r.interior_relative) <= 1e-9 && std::min(r.boundary, r.boundary_relative) <= 1e-9;
    add("bubble", "", ok,
        {{"interior", num(r.interior)}, {"boundary", num(r.boundary)}, {"interior_relative", num(r.interior_relative)},
         {"boundary_relative", num(r.boundary_relative)}, {"threshold", 1e-9}});
  }
  if (want("einstein")) {
    const int points = cfg.integer("points");
    if (points < 1) throw ConfigError("points must be >= 1");
    const EinsteinReport r = verify_einstein_identity(bub, random_halfspace_points(dim, points, seed));
    add("einstein", "", r.max_relative <= 1e-9,
        {{"max_abs", num(r.max_abs)}, {"max_relative", num(r.max_relative)}, {"threshold", 1e-9}});
  }
  const int lv = analytic ? 2 : levels;
  if (want("lin-scalar"))
    for (const auto& v : fields) {
      const auto st = linearized_scalar_study(v, bub, grid, mode, lv);
      add("lin-scalar", v.name(), st.passes(), study_json(st));
    }
  if (want("lin-mean"))
    for (const auto& v : fields) {
      const auto st = linearized_mean_study(v, bub, grid, mode, lv);
      add("lin-mean", v.name(), st.passes(), study_json(st));
    }
  if (want("second-var")) {
    for (const auto& v : fields) {
      const auto st = second_variation_study(H::killing_of(v), v, bub, grid, mode, lv);
      add("second-var", v.name(), st.passes(), study_json(st));
    }
    const V crafted = V::crafted(bub, seed);
    const double xr = verify_xi_boundary(crafted, H::tangential(seed + 1), bub, grid);
    add("xi-boundary", crafted.name(), xr <= 1e-8, {{"relative_residual", num(xr)}, {"threshold", 1e-8}});
  }
  if (want("st-boundary")) {
    const V crafted = V::crafted(bub, seed);
    const STBoundaryReport r = verify_ST_boundary(crafted, H::tangential(seed + 1), bub, grid, mode, lv);
    const bool ok = r.S_an <= 1e-10 && r.T_an <= 1e-10 && r.normal_relation.passes() && r.tangential_relation.passes();
    add("st-boundary", crafted.name(), ok,
        {{"S_an", num(r.S_an)}, {"T_an", num(r.T_an)}, {"normal_relation", study_json(r.normal_relation)},
         {"tangential_relation", study_json(r.tangential_relation)}});
  }
  return checks;
}

inline int cmd_verify(const Config& cfg, Io& io) {
  const std::string which = cfg.text("identity");
  const auto& names = identity_names();
  if (which != "all" && std::find(names.begin(), names.end(), which) == names.end())
    throw ConfigError("unknown identity '" + which + "'");
  const std::string m = cfg.text("mode");
  if (m != "fd" && m != "analytic") throw ConfigError("mode must be fd or analytic");
  const DerivativeMode mode = m == "fd" ? DerivativeMode::finite_difference : DerivativeMode::analytic;
  const int n = cfg.integer("n");
  (void)Dim(n);
  const double eps = cfg.real("eps");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");

  const Json checks = with_dimension(n, [&](auto NC) { return verify_dimension<decltype(NC)::value>(cfg, which, eps, mode); });
  std::vector<std::string> failed;
  for (const auto& c : checks)
    if (!c["passed"].get<bool>()) {
      const std::string id = c["identity"].get<std::string>();
      if (std::find(failed.begin(), failed.end(), id) == failed.end()) failed.push_back(id);
    }
  Json doc;
  doc["command"] = "verify";
  doc["n"] = n;
  doc["identity"] = which;
  doc["mode"] = m;
  doc["eps"] = eps;
  doc["checks"] = checks;
  doc["all_passed"] = failed.empty();
  doc["failed"] = failed;
  emit(cfg, io, doc, false);
  if (!failed.empty()) {
    std::string list;
    for (const auto& s : failed) list += (list.empty() ? "" : ", ") + s;
    io.err << "verification failed: " << list << "\n";
    return kVerifyFailed;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// mass / flux
// ---------------------------------------------------------------------------

inline int cmd_mass(const Config& cfg, Io& io) {
  const Dim dim(cfg.integer("n"));
  const std::string metric = cfg.text("metric");
  Json params = Json::object();
  std::optional<AsymptoticMetric> g;
  if (metric == "flat") {
    g = AsymptoticMetric::flat(dim);
  } else if (metric == "conformal") {
    g = AsymptoticMetric::conformal(dim, cfg.real("m"));
    params["m"] = cfg.real("m");
  } else if (metric == "twist") {
    g = AsymptoticMetric::twist(dim, cfg.real("c"));
    params["c"] = cfg.real("c");
  } else {
    throw ConfigError("unknown metric '" + metric + "' (expected flat, conformal or twist)");
  }
  const int res = cfg.integer("resolution");
  if (res < 2) throw ConfigError("resolution must be >= 2");
  const FluxResult r = mass(*g, cfg.reals("radii"), res);
  Json fv = Json::array(), hp = Json::array(), ep = Json::array();
  for (std::size_t i = 0; i < r.radii.size(); ++i) {
    fv.push_back(num(r.flux_values[i]));
    hp.push_back(num(r.hemisphere_part[i]));
    ep.push_back(num(r.equator_part[i]));
  }
  Json doc;
  doc["command"] = "mass";
  doc["n"] = dim.n();
  doc["metric"] = metric;
  doc["parameters"] = params;
  doc["resolution"] = res;
  doc["radii"] = r.radii;
  doc["flux_values"] = fv;
  doc["hemisphere_part"] = hp;
  doc["equator_part"] = ep;
  doc["extrapolated_mass"] = num(r.extrapolated_mass);
  doc["kappa"] = num(r.kappa);
  doc["convergence_flag"] = r.converged;
  emit(cfg, io, doc, false);
  if (!r.converged) throw NonConvergence("flux sequence did not converge");
  return kOk;
}

inline int cmd_flux(const Config& cfg, Io& io) {
  const int n = cfg.integer("n");
  const Dim dim(n);
  const std::string t = cfg.text("tensor");
  const std::uint64_t seed = cfg.seed().value_or(1);
  const RadialProfile one{[](double) { return 1.0; }, [](double) { return 0.0; }};
  TensorEval h;
  if (t == "tangential" || t == "fermi") {
    h = with_dimension(n, [&](auto NC) {
      constexpr int N = decltype(NC)::value;
      return scaled_tensor(t == "fermi" ? PerturbationTensor<N>::fermi(seed) : PerturbationTensor<N>::tangential(seed), one);
    });
  } else if (t != "zero") {
    throw ConfigError("unknown tensor '" + t + "' (expected zero, tangential or fermi)");
  }
  const int res = cfg.integer("resolution");
  if (res < 2) throw ConfigError("resolution must be >= 2");
  const RadialProfile G = RadialProfile::fundamental(dim, cfg.real("c"));
  const auto rho = cfg.reals("rho");
  if (rho.empty()) throw ConfigError("rho list is empty");
  Json values = Json::array();
  for (double r : rho) values.push_back(num(flux_I(h, G, r, dim, res)));
  Json doc;
  doc["command"] = "flux";
  doc["n"] = n;
  doc["tensor"] = t;
  doc["c"] = cfg.real("c");
  doc["rho"] = rho;
  doc["values"] = values;
  emit(cfg, io, doc, false);
  return kOk;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline int dispatch(const Config& cfg, Io& io) {
  const std::string& c = cfg.command();
  if (c == "cap") return cmd_cap(cfg, io);
  if (c == "solve") return cmd_solve(cfg, io);
  if (c == "sweep") return cmd_sweep(cfg, io);
  if (c == "verify") return cmd_verify(cfg, io);
  if (c == "mass") return cmd_mass(cfg, io);
  if (c == "flux") return cmd_flux(cfg, io);
  throw ConfigError("unknown command '" + c + "'");
}

/// Parses argv, resolves the configuration and runs the subcommand. Every
/// failure maps to an exit code; nothing escapes.
inline std::string command_description(const std::string& name) {
  static const std::map<std::string, std::string> d{
      {"cap", "cap angle, T_c and the half-space invariant for weights (a, b)"},
      {"solve", "subcritical minimization on a ball or annulus, extrapolated to the critical exponent"},
      {"sweep", "solve over an (a, b) grid and report monotonicity"},
      {"verify", "bubble, linearized and second-variation identity checks"},
      {"mass", "flux-integral mass of an asymptotically flat half-space metric"},
      {"flux", "boundary flux integral I(rho) for a tensor times a radial profile"},
  };
  return d.at(name);
}

inline int run(int argc, const char* const* argv, Io io) {
  CLI::App app{"Boundary Yamabe invariants: closed forms, subcritical solver, identity checks, mass"};
  app.require_subcommand(1);
  struct Slot {
    CLI::App* app;
    std::vector<OptionSpec> specs;
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option*> opts;
    std::string config;
  };
  std::map<std::string, Slot> slots;
  for (const auto& name : command_names()) {
    Slot& s = slots[name];
    s.app = app.add_subcommand(name, command_description(name));
    s.specs = command_options(name);
    for (const auto& spec : s.specs) {
      std::string help = spec.help;
      if (!spec.fallback.is_null()) help += " [default " + spec.fallback.dump() + "]";
      s.opts[spec.key] = s.app->add_option(spec.flag(), s.raw[spec.key], help);
    }
    s.app->add_option("--config", s.config, "JSON file with option values (flags take precedence)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, io.out, io.err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, io.out, io.err);
    return kConfig;
  }
  for (auto& [name, s] : slots) {
    if (!s.app->parsed()) continue;
    try {
      Config cfg(name, s.specs);
      if (!s.config.empty()) cfg.apply_file(s.config);
      for (const auto& spec : s.specs)
        if (s.opts[spec.key]->count() > 0) cfg.apply_flag(spec.key, s.raw[spec.key]);
      return dispatch(cfg, io);
    } catch (const NonConvergence& e) {
      io.err << "error: " << e.what() << "\n";
      return kNonConvergence;
    } catch (const ConfigError& e) {
      io.err << "error: " << e.what() << "\n";
      return kConfig;
    } catch (const DomainError& e) {
      io.err << "error: " << e.what() << "\n";
      return kConfig;
    } catch (const nlohmann::json::exception& e) {
      io.err << "error: bad configuration value: " << e.what() << "\n";
      return kConfig;
    } catch (const std::exception& e) {
      io.err << "internal error: " << e.what() << "\n";
      return kInternal;
    }
  }
  return kConfig;
}

}  // namespace bdyamabe::cli
