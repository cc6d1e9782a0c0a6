#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "abreu/cli.hpp"

using namespace abreu;
namespace fs = std::filesystem;

namespace {

const Polytope kSquare = parse_polytope("1 0 0\n0 1 0\n-1 0 -1\n0 -1 -1\n");
const Polytope kSimplex = parse_polytope("1 0 0\n0 1 0\n-1 -1 -1\n");
const Polytope kWide = parse_polytope("1 0 -1\n0 1 -1\n-1 0 -1\n0 -1 -1\n");
const Expr kOne = Expr::parse("1");
const Expr kStar = Expr::parse("0.05*xi1*xi2*(1-xi1)*(1-xi2)");

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double deviation(const ScalarField& f, double target, int band) {
  double m = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f.grid->band(k) >= band) m = std::max(m, std::abs(f[k] - target));
  return m;
}

Outcome closed_form_curvature() {
  const auto t0 = std::chrono::steady_clock::now();
  const double sq = deviation(s_d_xi(Potential::guillemin_only(build_grid(kSquare, 1.0 / 128)), kOne), 4.0, 4);
  const double sx = deviation(s_d_xi(Potential::guillemin_only(build_grid(kSimplex, 1.0 / 128)), kOne), 6.0, 4);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {sq <= 1e-3 && sx <= 1e-3 && secs < 10.0,
          fmt("square |S-4|=%.2e simplex |S-6|=%.2e time=%.2fs", sq, sx, secs)};
}

Outcome operator_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  double worst = INFINITY;
  for (const Polytope* p : {&kSquare, &kSimplex})
    for (const char* d : {"1", "exp(xi1)", "1+xi1*xi2/4"}) {
      const EquivalenceReport rep = equivalence_report(
          *p, [](GridPtr g) { return Potential::guillemin_only(g); }, Expr::parse(d), {1.0 / 32, 1.0 / 64, 1.0 / 128});
      ok = ok && rep.passes(1.8);
      worst = std::min(worst, rep.exact ? INFINITY : rep.fitted_order);
    }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok && secs < 60.0, fmt("min fitted order=%.3f over 6 cases time=%.2fs", worst, secs)};
}

Outcome legendre_involution() {
  const double h = 1.0 / 64;
  const RoundtripResult a = legendre_roundtrip(
      Potential::closed_form(build_grid(kWide, h), Expr::parse("0.5*(xi1^2+xi2^2) + 0.2*exp(xi1-0.5*xi2)")));
  const RoundtripResult b =
      legendre_roundtrip(Potential::closed_form(build_grid(kSquare, h), Expr::parse("exp(xi1)+exp(xi2)+0.25*xi1*xi2")));
  const double worst = std::max(a.max_error, b.max_error);
  return {worst <= 20 * h * h, fmt("max error=%.3e bound=%.3e", worst, 20 * h * h)};
}

Outcome invariant_identities() {
  bool exact = true, nonneg = true;
  for (const Polytope* p : {&kSquare, &kSimplex}) {
    const GridPtr g = build_grid(*p, 1.0 / 64);
    const Potential u = Potential::guillemin_only(g).with_psi(
        sample([](Vec2 x) { return 0.05 * std::sin(2 * x.x + x.y) + 0.02 * x.x * x.x * x.y; }, g));
    const ScalarField phi = invariant_phi(u), j = invariant_j(u), th = invariant_theta(u);
    for (std::size_t k = 0; k < g->size(); ++k) {
      if (!th.defined(k)) continue;
      exact = exact && th[k] == j[k] + phi[k];
      nonneg = nonneg && phi[k] >= 0.0 && j[k] >= 0.0;
    }
  }
  const GridPtr q = build_grid(kSquare, 1.0 / 64);
  const double quad = invariant_theta(Potential::closed_form(q, Expr::parse("0.5*(xi1^2+xi2^2)"))).max_abs(3);
  const double eps = 1e-2;
  const GridPtr w = build_grid(kWide, 1.0 / 32);
  const ScalarField j = invariant_j(Potential::closed_form(w, Expr::parse("0.5*(xi1^2+xi2^2) + 0.01*xi1^3")));
  const double jv = j[w->nearest({0.0, 0.0})], rel = std::abs(jv / (4.5 * eps * eps) - 1.0);
  return {exact && nonneg && quad <= 1e-10 && rel <= 0.05,
          fmt("theta=J+phi exact=%d nonneg=%d quadratic theta=%.1e J/(4.5eps^2)-1=%.2e", exact, nonneg, quad, rel)};
}

Outcome jacobian_consistency() {
  const GridPtr g = build_grid(kSquare, 1.0 / 32);
  const SolveProblem pb = SolveProblem::from_context(
      {Potential::guillemin_only(g), Expr::parse("1+xi1*xi2/4"), Expr::parse("4"), std::nullopt});
  const ScalarField psi = sample([](Vec2 p) { return 0.03 * std::sin(3 * p.x) * p.y + 0.02 * p.x * p.x; }, g);
  const Linearization lin = linearize(psi, pb);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  double worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    ScalarField delta(g);
    for (std::size_t k = 0; k < g->size(); ++k)
      if (g->band(k) >= 3) delta[k] = dist(rng) * g->h() * g->h();
    const double t = 1e-4;
    ScalarField plus = psi, minus = psi;
    for (std::size_t k = 0; k < g->size(); ++k) {
      plus[k] += t * delta[k];
      minus[k] -= t * delta[k];
    }
    const ScalarField rp = residual(plus, pb), rm = residual(minus, pb), jd = apply_linearization(lin, delta);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < g->size(); ++k) {
      if (g->band(k) < 3) continue;
      num = std::max(num, std::abs((rp[k] - rm[k]) / (2 * t) - jd[k]));
      den = std::max(den, std::abs(jd[k]));
    }
    worst = std::max(worst, num / den);
  }
  return {worst <= 1e-4, fmt("worst relative error over 20 perturbations=%.2e", worst)};
}

Outcome manufactured_recovery() {
  bool ok = true;
  std::string detail;
  for (double h : {1.0 / 32, 1.0 / 64}) {
    const auto t0 = std::chrono::steady_clock::now();
    const GridPtr g = build_grid(kSquare, h);
    const ManufacturedProblem mp = manufactured_problem(kStar, Potential::guillemin_only(g), kOne);
    const SolveResult res = newton_solve(mp.problem);
    const double err = gauge_aligned_error(res.psi, mp.psi_star, default_anchor(*g));
    const double rn = res.residual_history.empty() ? INFINITY : res.residual_history.back();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && res.converged && rn <= 1e-8 && err <= 50 * h * h && secs < 300.0;
    detail += fmt("h=1/%d err=%.2e (bound %.2e) residual=%.1e time=%.2fs; ", static_cast<int>(std::lround(1 / h)), err,
                  50 * h * h, rn, secs);
  }
  return {ok, detail};
}

Outcome determinant_ratio_family() {
  const GridPtr g = build_grid(kSquare, 1.0 / 64);
  const FamilyFit fit = thm31_family(Potential::guillemin_only(g), polytope_bump(kSquare), kOne, {0.01, 0.02, 0.04});
  double min_slack = INFINITY;
  for (double s : fit.slack) min_slack = std::min(min_slack, s);
  return {fit.slope <= fit.limit && min_slack >= 0.0,
          fmt("slope=%.3f limit 2R+1.5=%.3f min slack=%.3e", fit.slope, fit.limit, min_slack)};
}

Outcome edge_decay() {
  auto drift = [](const std::function<Potential(GridPtr)>& make) {
    std::vector<EstimateSample> s;
    for (double h : {1.0 / 64, 1.0 / 128}) s.push_back(verify_thm_5_1(make(build_grid(kSquare, h)), 0, kOne));
    return make_report("edge", s).max_drift;
  };
  const double a = drift([](GridPtr g) { return Potential::guillemin_only(g); });
  const double b = drift([](GridPtr g) { return Potential::guillemin_only(g).with_psi(sample(kStar, g)); });
  return {a <= 0.1 && b <= 0.1, fmt("drift guillemin=%.3f manufactured=%.3f", a, b)};
}

Outcome ledger_determinism() {
  const fs::path root = fs::current_path() / "acceptance_ledgers";
  fs::remove_all(root);
  std::string first;
  bool ok = true;
  for (int i = 0; i < 2; ++i) {
    const fs::path out = root / ("run" + std::to_string(i));
    const std::string cmd = std::string("\"") + ABREU_CLI + "\" verify --config \"" + ABREU_DATA_DIR +
                            "/square_config.json\" --out \"" + out.string() + "\" >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) ok = false;
    std::ifstream in(out / "ledger.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    if (i == 0) first = ss.str();
    else ok = ok && !first.empty() && ss.str() == first;
  }
  return {ok, fmt("ledger bytes=%zu identical=%d", first.size(), ok)};
}

}  // namespace

int main() {
  const std::pair<const char*, Outcome (*)()> criteria[] = {
      {"closed-form scalar curvature", closed_form_curvature},
      {"operator form equivalence", operator_equivalence},
      {"Legendre involution", legendre_involution},
      {"invariant identities", invariant_identities},
      {"Jacobian consistency", jacobian_consistency},
      {"manufactured-solution recovery", manufactured_recovery},
      {"determinant ratio family", determinant_ratio_family},
      {"edge decay boundedness", edge_decay},
      {"ledger determinism", ledger_determinism},
  };
  int failures = 0, index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%d criteria passed\n", index - failures, index);
  return failures == 0 ? 0 : 1;
}
