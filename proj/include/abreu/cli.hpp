#pragma once

// Run configuration and the three command verbs: solve, invariants, verify.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "abreu/error.hpp"
#include "abreu/estimates.hpp"
#include "abreu/geodesic.hpp"
#include "abreu/invariants.hpp"
#include "abreu/operator.hpp"
#include "abreu/polytope.hpp"
#include "abreu/solver.hpp"

namespace abreu {

namespace fs = std::filesystem;

struct PotentialSpec {
  bool guillemin = true;
  std::optional<std::string> analytic;
  std::optional<std::string> psi;
};

struct EstimateSettings {
  double C41 = 1.0;
  double C42 = 0.5;
  std::optional<double> b;
  std::size_t edge = 0;
  std::vector<double> family{0.01, 0.02, 0.04};
  double max_drift = 0.10;
  double min_order = 1.8;
};

struct RunConfig {
  fs::path polytope;
  std::string D = "1";
  std::string A = "0";
  std::vector<double> h;
  SolveConfig solver;
  std::vector<std::string> harness;
  fs::path output = "out";
  std::uint64_t seed = 0;
  PotentialSpec potential;
  std::optional<PotentialSpec> reference;
  bool kappa_full = false;
  EstimateSettings estimates;

  ordered_json canonical() const;
  std::string hash() const;
};

inline const std::vector<std::string>& harness_items() {
  static const std::vector<std::string> items{"thm31", "lem41", "lem42", "lem43", "thm51", "lemma26"};
  return items;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, const std::vector<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

inline PotentialSpec parse_potential(const nlohmann::json& j, const std::string& where) {
  check_keys(j, where, {"guillemin", "analytic", "psi"});
  PotentialSpec p;
  if (j.contains("guillemin")) p.guillemin = get_as<bool>(j, "guillemin");
  if (j.contains("analytic")) p.analytic = get_as<std::string>(j, "analytic");
  if (j.contains("psi")) p.psi = get_as<std::string>(j, "psi");
  if (!p.guillemin && !p.analytic) throw ConfigError(where + " needs the Guillemin part or an analytic expression");
  return p;
}

inline ordered_json potential_json(const PotentialSpec& p) {
  ordered_json j;
  j["guillemin"] = p.guillemin;
  j["analytic"] = p.analytic ? ordered_json(*p.analytic) : ordered_json(nullptr);
  j["psi"] = p.psi ? ordered_json(*p.psi) : ordered_json(nullptr);
  return j;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Reads a JSON run configuration; the polytope path is relative to the config file.
inline RunConfig parse_run_config(const std::string& text, const fs::path& base_dir = ".") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
  }
  detail::check_keys(j, "run config",
                     {"polytope", "D", "A", "h", "solver", "harness", "output", "seed", "potential", "reference",
                      "kappa_full", "estimates"});
  RunConfig c;
  if (!j.contains("polytope")) throw ConfigError("run config needs a 'polytope' path");
  c.polytope = base_dir / detail::get_as<std::string>(j, "polytope");
  if (j.contains("D")) c.D = detail::get_as<std::string>(j, "D");
  if (j.contains("A")) c.A = detail::get_as<std::string>(j, "A");
  if (!j.contains("h")) throw ConfigError("run config needs an 'h' list");
  c.h = j.at("h").is_number() ? std::vector<double>{detail::get_as<double>(j, "h")}
                              : detail::get_as<std::vector<double>>(j, "h");
  if (c.h.empty()) throw ConfigError("'h' list is empty");
  for (std::size_t i = 0; i < c.h.size(); ++i) {
    if (!(c.h[i] > 0.0)) throw ConfigError("grid spacings must be positive");
    if (i > 0 && !(c.h[i] < c.h[i - 1])) throw ConfigError("'h' list must be strictly decreasing");
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::check_keys(s, "solver",
                       {"tolerance", "max_iterations", "min_damping", "stall_iterations", "continuation_steps"});
    if (s.contains("tolerance")) c.solver.tolerance = detail::get_as<double>(s, "tolerance");
    if (s.contains("max_iterations")) c.solver.max_iterations = detail::get_as<int>(s, "max_iterations");
    if (s.contains("min_damping")) c.solver.min_damping = detail::get_as<double>(s, "min_damping");
    if (s.contains("stall_iterations")) c.solver.stall_iterations = detail::get_as<int>(s, "stall_iterations");
    if (s.contains("continuation_steps")) c.solver.continuation_steps = detail::get_as<int>(s, "continuation_steps");
    if (!(c.solver.tolerance > 0.0) || c.solver.max_iterations < 1 || !(c.solver.min_damping > 0.0))
      throw ConfigError("solver settings out of range");
  }
  if (j.contains("harness")) c.harness = detail::get_as<std::vector<std::string>>(j, "harness");
  for (const auto& item : c.harness) {
    const auto& all = harness_items();
    if (std::find(all.begin(), all.end(), item) == all.end()) throw ConfigError("unknown harness item '" + item + "'");
  }
  if (j.contains("output")) c.output = base_dir / detail::get_as<std::string>(j, "output");
  if (j.contains("seed")) c.seed = detail::get_as<std::uint64_t>(j, "seed");
  if (j.contains("potential")) c.potential = detail::parse_potential(j.at("potential"), "potential");
  if (j.contains("reference")) c.reference = detail::parse_potential(j.at("reference"), "reference");
  if (j.contains("kappa_full")) c.kappa_full = detail::get_as<bool>(j, "kappa_full");
  if (j.contains("estimates")) {
    const auto& e = j.at("estimates");
    detail::check_keys(e, "estimates", {"C41", "C42", "b", "edge", "family", "max_drift", "min_order"});
    if (e.contains("C41")) c.estimates.C41 = detail::get_as<double>(e, "C41");
    if (e.contains("C42")) c.estimates.C42 = detail::get_as<double>(e, "C42");
    if (e.contains("b")) c.estimates.b = detail::get_as<double>(e, "b");
    if (e.contains("edge")) c.estimates.edge = detail::get_as<std::size_t>(e, "edge");
    if (e.contains("family")) c.estimates.family = detail::get_as<std::vector<double>>(e, "family");
    if (e.contains("max_drift")) c.estimates.max_drift = detail::get_as<double>(e, "max_drift");
    if (e.contains("min_order")) c.estimates.min_order = detail::get_as<double>(e, "min_order");
    if (c.estimates.family.size() < 2) throw ConfigError("the perturbation family needs at least two members");
  }
  // every expression must parse before any work starts
  Expr::parse(c.D);
  Expr::parse(c.A);
  for (const PotentialSpec* p : {&c.potential, c.reference ? &*c.reference : nullptr}) {
    if (!p) continue;
    if (p->analytic) Expr::parse(*p->analytic);
    if (p->psi) Expr::parse(*p->psi);
  }
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

inline ordered_json RunConfig::canonical() const {
  ordered_json j;
  j["polytope"] = polytope.filename().string();
  j["D"] = D;
  j["A"] = A;
  j["h"] = h;
  j["solver"] = {{"tolerance", solver.tolerance},
                 {"max_iterations", solver.max_iterations},
                 {"min_damping", solver.min_damping},
                 {"stall_iterations", solver.stall_iterations},
                 {"continuation_steps", solver.continuation_steps}};
  j["harness"] = harness;
  j["seed"] = seed;
  j["potential"] = detail::potential_json(potential);
  j["reference"] = reference ? detail::potential_json(*reference) : ordered_json(nullptr);
  j["kappa_full"] = kappa_full;
  j["estimates"] = {{"C41", estimates.C41},
                    {"C42", estimates.C42},
                    {"b", estimates.b ? ordered_json(*estimates.b) : ordered_json(nullptr)},
                    {"edge", estimates.edge},
                    {"family", estimates.family},
                    {"max_drift", estimates.max_drift},
                    {"min_order", estimates.min_order}};
  return j;
}

inline std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(canonical().dump())));
  return buf;
}

/// Command-line overrides of the config file.
struct CliOptions {
  fs::path config;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
};

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_numerical = 2 };

namespace detail {

inline Potential build_potential(const PotentialSpec& spec, const GridPtr& g) {
  Potential u = spec.analytic ? Potential::closed_form(g, Expr::parse(*spec.analytic)) : Potential::guillemin_only(g);
  u.guillemin = spec.guillemin;
  if (spec.psi) u = u.with_psi(sample(Expr::parse(*spec.psi), g));
  return u;
}

inline std::vector<std::string> file_header(const RunConfig& c, double h, int band) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "config_hash=%s h=%.17g band=%d", c.hash().c_str(), h, band);
  return {buf};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string spacing_tag(std::size_t i) { return "h" + std::to_string(i); }

inline void write_field(const fs::path& dir, const std::string& name, std::size_t i, const RunConfig& c,
                        const ScalarField& f) {
  std::ostringstream os;
  write_field_csv(os, f, file_header(c, f.grid->h(), f.min_band));
  write_text(dir / (name + "_" + spacing_tag(i) + ".csv"), os.str());
}

/// Relative mismatch between the assembled Jacobian and forward differences of
/// the residual along seeded random directions.
inline double jacobian_spot_check(const ScalarField& psi, const SolveProblem& pb, std::uint64_t seed, int samples) {
  const Grid& g = *pb.base.grid;
  const Linearization lin = linearize(psi, pb);
  const ScalarField r0 = residual(psi, pb);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const double t = 1e-6;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    ScalarField delta(pb.base.grid);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g.band(k) >= 3) delta[k] = dist(rng) * g.h() * g.h();
    ScalarField shifted = psi;
    for (std::size_t k = 0; k < g.size(); ++k) shifted[k] += t * delta[k];
    const ScalarField r1 = residual(shifted, pb);
    const ScalarField jd = apply_linearization(lin, delta);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (g.band(k) < 3) continue;
      num = std::max(num, std::abs((r1[k] - r0[k]) / t - jd[k]));
      den = std::max(den, std::abs(jd[k]));
    }
    worst = std::max(worst, den > 0.0 ? num / den : num);
  }
  return worst;
}

template <class Body>
int guarded(Body&& body) {
  try {
    return body();
  } catch (const ConvexityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_numerical;
  } catch (const BandError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_numerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config;
  }
}

inline RunConfig resolve(const CliOptions& o) {
  RunConfig c = load_run_config(o.config);
  if (o.out) c.output = *o.out;
  if (o.seed) c.seed = *o.seed;
  fs::create_directories(c.output);
  return c;
}

}  // namespace detail

/// Newton solve at every grid spacing. Writes psi_h<i>.csv, summary.json and
/// equivalence.csv; exit 0 when every solve converged.
inline int cmd_solve(const CliOptions& opts) {
  return detail::guarded([&] {
    const RunConfig c = detail::resolve(opts);
    const Polytope poly = load_polytope(c.polytope.string());
    const Expr D = Expr::parse(c.D), A = Expr::parse(c.A);
    ordered_json summary;
    summary["config_hash"] = c.hash();
    summary["seed"] = c.seed;
    ordered_json runs = ordered_json::array();
    EquivalenceReport eq;
    eq.delta = 0.5 * poly.inradius();
    std::vector<double> hs, disc;
    bool all_converged = true;
    for (std::size_t i = 0; i < c.h.size(); ++i) {
      const GridPtr g = build_grid(poly, c.h[i]);
      Potential base = detail::build_potential(c.potential, g);
      const ScalarField initial = base.psi;
      base.psi = ScalarField(g);
      const SolveProblem pb = SolveProblem::from_context({base, D, A, std::nullopt});
      const SolveResult res = newton_solve(pb, c.solver, initial);
      all_converged = all_converged && res.converged;
      detail::write_field(c.output, "psi", i, c, res.psi);
      ordered_json run;
      run["h"] = c.h[i];
      run["nodes"] = g->size();
      run["status"] = to_string(res.status);
      run["converged"] = res.converged;
      run["iterations"] = res.iterations;
      run["residual_history"] = res.residual_history;
      run["final_residual"] = res.residual_history.empty() ? 0.0 : res.residual_history.back();
      if (!res.message.empty()) run["message"] = res.message;
      if (g->max_band() >= 3)
        run["jacobian_check"] = detail::jacobian_spot_check(res.psi, pb, c.seed + i, 3);
      runs.push_back(run);
      if (g->max_band() >= 4) {
        eq.rows.push_back(equivalence_row(base.with_psi(res.psi), D, eq.delta));
        hs.push_back(c.h[i]);
        disc.push_back(eq.rows.back().max_pairwise);
      }
    }
    eq.exact = true;
    for (double d : disc) eq.exact = eq.exact && d < EquivalenceReport::noise_floor;
    if (!eq.exact && disc.size() >= 2) eq.fitted_order = fit_log_slope(hs, disc);
    summary["runs"] = runs;
    summary["converged"] = all_converged;
    summary["fitted_order"] = num_json(eq.fitted_order);
    detail::write_text(c.output / "summary.json", summary.dump(2) + "\n");
    std::ostringstream os;
    write_equivalence_csv(os, eq, detail::file_header(c, c.h.back(), 4));
    detail::write_text(c.output / "equivalence.csv", os.str());
    return all_converged ? exit_ok : exit_numerical;
  });
}

/// Φ, J, Θ, ‖Ric‖, S, 𝒦, d_u(·, ∂Δ) and Θ·d_u² at every grid spacing, plus
/// H and ℍ against the reference potential when one is configured.
inline int cmd_invariants(const CliOptions& opts) {
  return detail::guarded([&] {
    const RunConfig c = detail::resolve(opts);
    const Polytope poly = load_polytope(c.polytope.string());
    const Expr D = Expr::parse(c.D);
    sample_weight(D, *build_grid(poly, c.h.front()));
    ordered_json summary;
    summary["config_hash"] = c.hash();
    ordered_json runs = ordered_json::array();
    for (std::size_t i = 0; i < c.h.size(); ++i) {
      const GridPtr g = build_grid(poly, c.h[i]);
      const Potential u = detail::build_potential(c.potential, g);
      const InvariantField inv = ricci_and_kappa(u, {c.kappa_full});
      if (!inv.warning.empty()) std::cerr << "warning: h=" << c.h[i] << ": " << inv.warning << '\n';
      const ScalarField du = geodesic_distance_field(u, GeodesicTarget::boundary());
      ScalarField theta_du2(g, 3);
      for (std::size_t k = 0; k < g->size(); ++k)
        if (theta_du2.defined(k)) theta_du2[k] = inv.theta[k] * du[k] * du[k];
      detail::write_field(c.output, "phi", i, c, inv.phi);
      detail::write_field(c.output, "J", i, c, inv.j);
      detail::write_field(c.output, "theta", i, c, inv.theta);
      detail::write_field(c.output, "ric_norm", i, c, inv.ric_norm);
      detail::write_field(c.output, "scalar", i, c, inv.scalar);
      detail::write_field(c.output, "kappa", i, c, inv.kappa);
      detail::write_field(c.output, "d_u", i, c, du);
      detail::write_field(c.output, "theta_du2", i, c, theta_du2);
      if (c.reference) {
        const HFields hf = h_fields(u, detail::build_potential(*c.reference, g), D);
        detail::write_field(c.output, "H", i, c, hf.H);
        detail::write_field(c.output, "HH", i, c, hf.HH);
      }
      ordered_json run;
      run["h"] = c.h[i];
      run["kappa_full"] = inv.kappa_full;
      run["warning"] = inv.warning;
      run["max_theta"] = inv.theta.max_abs();
      run["max_ric_norm"] = inv.ric_norm.max_abs();
      run["max_theta_du2"] = theta_du2.max_abs();
      runs.push_back(run);
    }
    summary["runs"] = runs;
    detail::write_text(c.output / "invariants.json", summary.dump(2) + "\n");
    return exit_ok;
  });
}

namespace detail {

inline EstimateReport run_harness_item(const std::string& id, const RunConfig& c, const Polytope& poly,
                                       const Expr& D) {
  const auto& e = c.estimates;
  std::vector<EstimateSample> samples;
  ordered_json family;
  if (id == "lemma26") {
    const EquivalenceReport rep = equivalence_report(
        poly, [&](GridPtr g) { return build_potential(c.potential, g); }, D, c.h);
    EstimateReport r;
    r.id = id;
    for (const auto& row : rep.rows) {
      EstimateSample s;
      s.h = row.h;
      s.band = row.band;
      s.sup = row.max_pairwise;
      s.left = row.max_pairwise;
      s.extra["disc_xi_uf"] = row.disc_xi_uf;
      s.extra["disc_xi_logf"] = row.disc_xi_logf;
      s.extra["disc_xi_x"] = row.disc_xi_x;
      s.extra["nodes"] = row.nodes;
      r.samples.push_back(s);
    }
    r.max_drift = max_relative_drift([&] {
      std::vector<double> v;
      for (const auto& s : r.samples) v.push_back(s.sup);
      return v;
    }());
    r.stable = rep.passes(e.min_order);
    r.verdict = r.stable ? "stable" : "unstable";
    r.extra["fitted_order"] = num_json(rep.fitted_order);
    r.extra["min_order"] = e.min_order;
    r.extra["exact"] = rep.exact;
    r.extra["delta"] = rep.delta;
    r.notes.push_back("pass criterion: fitted convergence order of the largest pairwise discrepancy");
    return r;
  }
  for (std::size_t i = 0; i < c.h.size(); ++i) {
    const GridPtr g = build_grid(poly, c.h[i]);
    const Potential u = build_potential(c.potential, g);
    if (id == "thm31") {
      const Potential ref = c.reference ? build_potential(*c.reference, g) : Potential::guillemin_only(g);
      samples.push_back(verify_thm_3_1(u, ref, D));
      if (i + 1 == c.h.size()) family = to_json(thm31_family(ref, polytope_bump(poly), D, e.family));
    } else if (id == "lem41") {
      samples.push_back(verify_lem_4_1(u, D, e.C41));
    } else if (id == "lem42") {
      samples.push_back(verify_lem_4_2(u, e.C42, e.b));
    } else if (id == "lem43") {
      samples.push_back(verify_lem_4_3(u, e.b));
    } else if (id == "thm51") {
      Thm51Options o;
      o.ricci.full = c.kappa_full;
      samples.push_back(verify_thm_5_1(u, e.edge, D, o));
    }
  }
  EstimateReport r = make_report(id, std::move(samples), e.max_drift);
  if (id == "thm31") {
    r.extra["family"] = family;
    if (!family["pass"].get<bool>()) {
      r.stable = false;
      r.verdict = "violated";
      r.notes.push_back("perturbation family exceeds the slope limit or breaks the core inequality");
    }
  }
  if (id == "lem43") {
    r.notes.push_back("both orientations of d_E^4 reported; stable if either one is");
    if (r.stable)
      r.notes.push_back(r.max_drift <= c.estimates.max_drift ? "verdict carried by sup (d_E^-4)"
                                                             : "verdict carried by sup_alt (d_E^+4)");
  }
  return r;
}

}  // namespace detail

/// Runs the selected harness items over the h list; writes ledger.csv and
/// one <item>.json per item. Exit 0 iff every verdict is "stable".
inline int cmd_verify(const CliOptions& opts) {
  return detail::guarded([&] {
    const RunConfig c = detail::resolve(opts);
    if (c.harness.empty()) throw ConfigError("no harness items selected");
    const Polytope poly = load_polytope(c.polytope.string());
    const Expr D = Expr::parse(c.D);
    std::ostringstream ledger;
    ledger << "# config_hash=" << c.hash() << " seed=" << c.seed << '\n';
    write_ledger_header(ledger);
    bool all_stable = true;
    for (const auto& id : c.harness) {
      const EstimateReport r = detail::run_harness_item(id, c, poly, D);
      all_stable = all_stable && r.stable;
      write_ledger_rows(ledger, r);
      ordered_json j;
      j["config_hash"] = c.hash();
      const ordered_json body = to_json(r);
      for (const auto& [k, v] : body.items()) j[k] = v;
      detail::write_text(c.output / (id + ".json"), j.dump(2) + "\n");
      std::cerr << id << ": " << r.verdict << '\n';
    }
    detail::write_text(c.output / "ledger.csv", ledger.str());
    return all_stable ? exit_ok : exit_numerical;
  });
}

}  // namespace abreu
