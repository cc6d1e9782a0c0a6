#pragma once

// Numerical checks of the a-priori estimates: the constants R_g, 𝒟, ℛ, the
// upper bound of H, the determinant estimates near sublevel boundaries and
// ∂Δ, and the decay of (Θ + ‖Ric‖)·d_u² near an edge.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "abreu/error.hpp"
#include "abreu/expr.hpp"
#include "abreu/geodesic.hpp"
#include "abreu/grid.hpp"
#include "abreu/invariants.hpp"
#include "abreu/operator.hpp"
#include "abreu/potential.hpp"

namespace abreu {

using ordered_json = nlohmann::ordered_json;

struct ConstantsR {
  double R_g = 0.0;
  double D = 0.0;  // 𝒟 = max |∇_ξ log D|
  double diam = 0.0;
  double R = 0.0;  // ℛ = max{R_g, 𝒟², diam²}
  int band = 4;
};

/// R_g = max |g^{ij}(log F_g)_ij| + |∇_x log F_g|² over band ≥ 4, with the
/// x-derivatives of log F_g = log D − log det ∂²u_g taken through ∂_x = (∂²u)^{-1}∂_ξ.
inline ConstantsR constants_r(const Potential& g_side, const Expr& D) {
  const Grid& g = *g_side.grid;
  PotentialEval ev(g_side);
  ConstantsR c;
  c.diam = g.polytope().diameter();
  const WeightSamples w = sample_weight(D, g);
  for (std::size_t k = 0; k < g.size(); ++k) c.D = std::max(c.D, norm(w.grad_log[k]));
  std::vector<double> vals(g.size(), 0.0);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) < c.band) return;
    const NodeDerivs d = ev.at(k, 4);
    const auto inv = detail::to_t2(d.hess.inverse());
    const auto t = detail::third_tensor(d);
    const auto q = detail::fourth_tensor(d);
    const auto dL = detail::grad_logdet(inv, t);
    const Jet<2> jd = D.jet<2>(g.point(k));
    const double dv = jd.value();
    // G = log F: gradient and Hessian in ξ
    double G1[2], G2[2][2];
    for (int i = 0; i < 2; ++i) G1[i] = jd.d(i) / dv - dL[static_cast<std::size_t>(i)];
    detail::T3 dinv{};
    for (int i = 0; i < 2; ++i)
      for (int l = 0; l < 2; ++l)
        for (int m = 0; m < 2; ++m)
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) dinv[i][l][m] -= inv[l][a] * t[a][b][i] * inv[b][m];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double ddL = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) ddL += inv[a][b] * q[a][b][i][j] + dinv[i][a][b] * t[a][b][j];
        G2[i][j] = jd.d(i, j) / dv - jd.d(i) * jd.d(j) / (dv * dv) - ddL;
      }
    // g^{ij} ∂²_x G = div_ξ((∂²u)^{-1} ∇_ξ G) = u^{lj} G_lj + (∂_l u^{lj}) G_j
    double lap = 0.0;
    for (int l = 0; l < 2; ++l)
      for (int j = 0; j < 2; ++j) lap += inv[l][j] * G2[l][j] + dinv[l][l][j] * G1[j];
    double gx2 = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double gx = inv[i][0] * G1[0] + inv[i][1] * G1[1];
      gx2 += gx * gx;
    }
    vals[k] = std::abs(lap) + gx2;
  });
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= c.band) c.R_g = std::max(c.R_g, vals[k]);
  c.R = std::max({c.R_g, c.D * c.D, c.diam * c.diam});
  return c;
}

/// One evaluation of an estimate at one grid spacing.
struct EstimateSample {
  double h = 0.0;
  int band = 2;
  double sup = 0.0;                                      // tracked quantity
  double sup_alt = std::numeric_limits<double>::quiet_NaN();  // second orientation, if any
  Vec2 node{};
  double left = std::numeric_limits<double>::quiet_NaN();   // explicit inequality, if any
  double bound = std::numeric_limits<double>::quiet_NaN();
  bool inequality_ok = true;
  ordered_json extra = ordered_json::object();
};

struct EstimateReport {
  std::string id;
  std::vector<EstimateSample> samples;
  double max_drift = 0.0;
  double max_drift_alt = std::numeric_limits<double>::quiet_NaN();
  bool stable = false;
  std::string verdict;
  std::vector<std::string> notes;
  ordered_json extra = ordered_json::object();

  const EstimateSample& finest() const { return samples.back(); }
  double margin() const { return finest().bound / finest().left; }
};

inline double max_relative_drift(const std::vector<double>& v) {
  double d = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || !std::isfinite(v[i - 1])) return std::numeric_limits<double>::infinity();
    const double scale = std::max(std::abs(v[i - 1]), std::abs(v[i]));
    if (scale > 0.0) d = std::max(d, std::abs(v[i] - v[i - 1]) / scale);
  }
  for (double x : v)
    if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
  return d;
}

/// Verdict "stable" iff every explicit inequality holds and the tracked sup
/// (or, when present, its alternative orientation) drifts ≤ max_drift per halving.
inline EstimateReport make_report(std::string id, std::vector<EstimateSample> samples, double max_drift = 0.10) {
  EstimateReport r;
  r.id = std::move(id);
  r.samples = std::move(samples);
  if (r.samples.empty()) throw ConfigError("estimate report needs at least one grid spacing");
  std::vector<double> s, alt;
  bool ineq = true, has_alt = false;
  for (const auto& x : r.samples) {
    s.push_back(x.sup);
    alt.push_back(x.sup_alt);
    ineq = ineq && x.inequality_ok;
    has_alt = has_alt || !std::isnan(x.sup_alt);
  }
  r.max_drift = max_relative_drift(s);
  bool ok = r.max_drift <= max_drift;
  if (has_alt) {
    r.max_drift_alt = max_relative_drift(alt);
    ok = ok || r.max_drift_alt <= max_drift;
  }
  r.stable = ok && ineq;
  r.verdict = r.stable ? "stable" : (ineq ? "unstable" : "violated");
  return r;
}

inline ordered_json vec_json(Vec2 p) { return ordered_json::array({p.x, p.y}); }

inline ordered_json num_json(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

inline ordered_json to_json(const EstimateReport& r) {
  ordered_json j;
  j["id"] = r.id;
  j["verdict"] = r.verdict;
  j["stable"] = r.stable;
  j["max_drift"] = num_json(r.max_drift);
  if (!std::isnan(r.max_drift_alt)) j["max_drift_alt"] = num_json(r.max_drift_alt);
  j["margin"] = num_json(r.margin());
  ordered_json samples = ordered_json::array();
  for (const auto& s : r.samples) {
    ordered_json e;
    e["h"] = s.h;
    e["band"] = s.band;
    e["sup"] = num_json(s.sup);
    if (!std::isnan(s.sup_alt)) e["sup_alt"] = num_json(s.sup_alt);
    e["node"] = vec_json(s.node);
    e["left"] = num_json(s.left);
    e["bound"] = num_json(s.bound);
    e["inequality_ok"] = s.inequality_ok;
    for (const auto& [k, v] : s.extra.items()) e[k] = v;
    samples.push_back(e);
  }
  j["samples"] = samples;
  for (const auto& [k, v] : r.extra.items()) j[k] = v;
  j["notes"] = r.notes;
  return j;
}

inline void write_ledger_header(std::ostream& os) {
  os << "id,h,band,sup,sup_alt,node_x,node_y,left,bound,margin,max_drift,verdict\n";
}

inline void write_ledger_rows(std::ostream& os, const EstimateReport& r) {
  char buf[512];
  const auto& s = r.finest();
  std::snprintf(buf, sizeof buf, "%s,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n", r.id.c_str(),
                s.h, s.band, s.sup, s.sup_alt, s.node.x, s.node.y, s.left, s.bound, r.margin(), r.max_drift,
                r.verdict.c_str());
  os << buf;
}

namespace detail {

inline std::vector<double> node_values(const Potential& u, int min_band) {
  PotentialEval ev(u);
  std::vector<double> v(u.grid->size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < v.size(); ++k)
    if (u.grid->band(k) >= min_band) v[k] = ev.at(k, 0).value;
  return v;
}

inline std::size_t argmin_value(const Potential& u, int min_band) {
  const auto v = node_values(u, min_band);
  std::size_t best = u.grid->size();
  for (std::size_t k = 0; k < v.size(); ++k)
    if (u.grid->band(k) >= min_band && (best == v.size() || v[k] < v[best])) best = k;
  return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Upper bound of H

struct Thm31Options {
  int n = 2;
};

/// At grid spacing h: sup H, osc φ (φ = u_f − u_g over band ≥ 2), the ratio
/// sup H / exp{(2ℛ+1) osc φ}, and the core inequality
///   n(ℛ+1) H^{1/n} ≤ n(2ℛ+1) + |A| + 3ℛ
/// at the maximiser of exp{−(2ℛ+1)φ}ℍ, with A = S_D(f) there.
inline EstimateSample verify_thm_3_1(const Potential& f_side, const Potential& g_side, const Expr& D,
                                     Thm31Options opt = {}) {
  const Grid& g = *f_side.grid;
  const ConstantsR cr = constants_r(g_side, D);
  const HFields hf = h_fields(f_side, g_side, D);
  const auto uf = detail::node_values(f_side, 2), ug = detail::node_values(g_side, 2);
  const ScalarField S = s_d_xi(f_side, D);
  double phi_max = -1e300, phi_min = 1e300, supH = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < 2) continue;
    const double phi = uf[k] - ug[k];
    phi_max = std::max(phi_max, phi);
    phi_min = std::min(phi_min, phi);
    supH = std::max(supH, hf.H[k]);
  }
  const double osc = phi_max - phi_min;
  const double C = 2.0 * cr.R + 1.0;
  std::size_t star = g.size();
  double best = -1e300;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < 3) continue;
    const double val = -C * (uf[k] - ug[k]) + std::log(hf.HH[k]);
    if (val > best) {
      best = val;
      star = k;
    }
  }
  if (star == g.size()) throw BandError("no band-3 nodes for the H estimate");
  const double n = opt.n;
  EstimateSample s;
  s.h = g.h();
  s.band = 3;
  s.node = g.point(star);
  s.left = n * (cr.R + 1.0) * std::pow(hf.H[star], 1.0 / n);
  s.bound = n * (2.0 * cr.R + 1.0) + std::abs(S[star]) + 3.0 * cr.R;
  s.inequality_ok = s.bound - s.left >= 0.0;
  s.sup = supH / std::exp(C * osc);
  s.extra["sup_H"] = supH;
  s.extra["osc_phi"] = osc;
  s.extra["R_g"] = cr.R_g;
  s.extra["D_const"] = cr.D;
  s.extra["R"] = cr.R;
  s.extra["A_at_max"] = S[star];
  s.extra["H_at_max"] = hf.H[star];
  s.extra["slack"] = s.bound - s.left;
  return s;
}

struct FamilyFit {
  std::vector<double> t, osc, log_sup_h, slack;
  double slope = 0.0;
  double limit = 0.0;  // 2ℛ + 1 + 0.5
  bool pass = false;
};

/// f_t = g + t·bump for each t: fitted slope of log sup H against osc φ_t,
/// and the core inequality at every t.
inline FamilyFit thm31_family(const Potential& g_side, const std::function<double(Vec2)>& bump, const Expr& D,
                              const std::vector<double>& ts) {
  FamilyFit fit;
  const ScalarField b = sample(bump, g_side.grid);
  const ConstantsR cr = constants_r(g_side, D);
  fit.limit = 2.0 * cr.R + 1.0 + 0.5;
  bool ok = true;
  for (double t : ts) {
    ScalarField psi = g_side.psi;
    for (std::size_t k = 0; k < psi.size(); ++k) psi[k] += t * b[k];
    const Potential f = g_side.with_psi(psi);
    const EstimateSample s = verify_thm_3_1(f, g_side, D);
    fit.t.push_back(t);
    fit.osc.push_back(s.extra["osc_phi"].get<double>());
    fit.log_sup_h.push_back(std::log(s.extra["sup_H"].get<double>()));
    fit.slack.push_back(s.bound - s.left);
    ok = ok && s.inequality_ok;
  }
  // least-squares slope through the family
  const std::size_t m = fit.t.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += fit.osc[i];
    my += fit.log_sup_h[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxy += (fit.osc[i] - mx) * (fit.log_sup_h[i] - my);
    sxx += (fit.osc[i] - mx) * (fit.osc[i] - mx);
  }
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.pass = ok && fit.slope <= fit.limit;
  return fit;
}

/// Π l_i(ξ) / Π l_i(centroid): positive inside, zero on ∂Δ, one at the centroid.
inline std::function<double(Vec2)> polytope_bump(const Polytope& p) {
  const Vec2 c = p.centroid();
  double norm0 = 1.0;
  for (double l : edge_values(p, c)) norm0 *= l;
  return [p, norm0](Vec2 xi) {
    double v = 1.0;
    for (double l : edge_values(p, xi)) v *= l;
    return v / norm0;
  };
}

inline ordered_json to_json(const FamilyFit& f) {
  ordered_json j;
  j["t"] = f.t;
  j["osc_phi"] = f.osc;
  j["log_sup_H"] = f.log_sup_h;
  j["slack"] = f.slack;
  j["slope"] = f.slope;
  j["slope_limit"] = f.limit;
  j["pass"] = f.pass;
  return j;
}

// ---------------------------------------------------------------------------
// Determinant estimates

namespace detail {

struct AnchoredDual {
  std::size_t anchor;
  std::vector<double> gap;   // u − tangent plane at the anchor
  std::vector<double> f;     // ⟨ξ − p, ∇u − ∇u(p)⟩ − gap
  std::vector<Vec2> x;       // ∇u − ∇u(p)
};

inline AnchoredDual anchored_dual(const Potential& u) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  AnchoredDual a;
  a.anchor = argmin_value(u, 2);
  const NodeDerivs dp = ev.at(a.anchor, 1);
  const Vec2 p = g.point(a.anchor);
  a.gap.assign(g.size(), NAN);
  a.f.assign(g.size(), NAN);
  a.x.assign(g.size(), Vec2{NAN, NAN});
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < 2) continue;
    const NodeDerivs d = ev.at(k, 1);
    const Vec2 xi = g.point(k) - p;
    a.gap[k] = d.value - dp.value - dot(dp.grad, xi);
    a.x[k] = d.grad - dp.grad;
    a.f[k] = dot(xi, a.x[k]) - a.gap[k];
  }
  return a;
}

/// Default side-condition bound (2 / d_E(p, ∂Δ))²: |x|/f tends to at most
/// 1/d_E(p, ∂Δ) near ∂Δ, so d stays bounded under refinement.
inline double default_b(const Grid& g, std::size_t anchor) {
  const double dE = euclidean_boundary_distance(g.polytope(), g.point(anchor));
  return 4.0 / (dE * dE);
}

/// Smallest d ≥ 1 with |x|²/(d+f)² ≤ b on the given nodes.
inline double choose_d(const AnchoredDual& a, const std::vector<std::size_t>& nodes, double b) {
  double d = 1.0;
  for (auto k : nodes) d = std::max(d, norm(a.x[k]) / std::sqrt(b) - a.f[k]);
  return d;
}

}  // namespace detail

/// sup of exp{−4C/(C−f)} det ∂²f over {f < C}, where f is the Legendre dual
/// measured from the minimiser of u (so inf f = 0) and det ∂²f = 1/det ∂²u; band ≥ 2.
inline EstimateSample verify_lem_4_1(const Potential& u, const Expr& D, double C) {
  if (!(C > 0.0)) throw ConfigError("level C must be positive");
  const Grid& g = *u.grid;
  const HessBundle hb = hessian_bundle(u);
  const WeightSamples w = sample_weight(D, g);
  const auto a = detail::anchored_dual(u);
  const Vec2 p = g.point(a.anchor);
  EstimateSample s;
  s.h = g.h();
  s.band = 2;
  std::size_t count = 0;
  double N1 = 0.0;
  bool reaches = false;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < 2 || !(a.f[k] < C)) continue;
    ++count;
    if (g.band(k) == 2) reaches = true;
    N1 = std::max({N1, norm(g.point(k) - p), norm(w.grad_log[k])});
    const double q = std::exp(-4.0 * C / (C - a.f[k])) / hb[k].det;
    if (count == 1 || q > s.sup) {
      s.sup = q;
      s.node = g.point(k);
    }
  }
  if (count == 0) throw GeometryError("empty sublevel set for the determinant estimate");
  s.extra["C"] = C;
  s.extra["N1"] = N1;
  s.extra["nodes"] = count;
  s.extra["reaches_band2"] = reaches;
  s.extra["anchor"] = vec_json(p);
  return s;
}

/// sup of exp{−4C/(C−u)} det ∂²u / (d+f)⁴ over the section {u < C} at the
/// minimiser, u and f measured from the minimiser; band ≥ 2.
inline EstimateSample verify_lem_4_2(const Potential& u, double C, std::optional<double> b_opt = std::nullopt) {
  if (!(C > 0.0) || (b_opt && !(*b_opt > 0.0))) throw ConfigError("level C and bound b must be positive");
  const Grid& g = *u.grid;
  const HessBundle hb = hessian_bundle(u);
  const auto a = detail::anchored_dual(u);
  const double b = b_opt ? *b_opt : detail::default_b(g, a.anchor);
  std::vector<std::size_t> nodes;
  bool compact = true;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 2 && a.gap[k] < C) {
      nodes.push_back(k);
      if (g.band(k) == 2) compact = false;
    }
  if (nodes.empty()) throw GeometryError("empty section for the determinant estimate");
  const double d = detail::choose_d(a, nodes, b);
  EstimateSample s;
  s.h = g.h();
  s.band = 2;
  bool first = true;
  for (auto k : nodes) {
    const double q = std::exp(-4.0 * C / (C - a.gap[k])) * hb[k].det / std::pow(d + a.f[k], 4);
    if (first || q > s.sup) {
      s.sup = q;
      s.node = g.point(k);
      first = false;
    }
  }
  s.extra["C"] = C;
  s.extra["b"] = b;
  s.extra["d"] = d;
  s.extra["nodes"] = nodes.size();
  s.extra["compact"] = compact;
  s.extra["anchor"] = vec_json(g.point(a.anchor));
  return s;
}

/// Both orientations of the boundary determinant estimate over band ≥ 2:
///   sup = sup det ∂²u / ((d+f)⁴ d_E⁴),  sup_alt = sup det ∂²u · d_E⁴ / (d+f)⁴.
inline EstimateSample verify_lem_4_3(const Potential& u, std::optional<double> b_opt = std::nullopt) {
  if (b_opt && !(*b_opt > 0.0)) throw ConfigError("bound b must be positive");
  const Grid& g = *u.grid;
  const HessBundle hb = hessian_bundle(u);
  const auto a = detail::anchored_dual(u);
  if (g.band(a.anchor) <= 2) throw BandError("minimiser lies on the edge of the evaluable band");
  const double b = b_opt ? *b_opt : detail::default_b(g, a.anchor);
  std::vector<std::size_t> nodes;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 2) nodes.push_back(k);
  const double d = detail::choose_d(a, nodes, b);
  EstimateSample s;
  s.h = g.h();
  s.band = 2;
  s.sup = 0.0;
  s.sup_alt = 0.0;
  Vec2 node_alt{};
  for (auto k : nodes) {
    const double dE = euclidean_boundary_distance(g.polytope(), g.point(k));
    const double base = hb[k].det / std::pow(d + a.f[k], 4);
    const double plus = base / std::pow(dE, 4), minus = base * std::pow(dE, 4);
    if (plus > s.sup) {
      s.sup = plus;
      s.node = g.point(k);
    }
    if (minus > s.sup_alt) {
      s.sup_alt = minus;
      node_alt = g.point(k);
    }
  }
  s.extra["b"] = b;
  s.extra["d"] = d;
  s.extra["node_alt"] = vec_json(node_alt);
  s.extra["anchor"] = vec_json(g.point(a.anchor));
  return s;
}

// ---------------------------------------------------------------------------
// Decay near an edge

struct Thm51Options {
  RicciOptions ricci{};
};

/// sup of (Θ + 𝒦)·d_u(·, ℓ)² over B_{b/2}(p), p the midpoint of edge ℓ and b the
/// d_u-distance from p to the nodes next to the other edges. 𝒦 is the Ricci
/// norm unless the full aggregate is requested and resolvable.
inline EstimateSample verify_thm_5_1(const Potential& u, std::size_t edge, const Expr& D, Thm51Options opt = {}) {
  const Grid& g = *u.grid;
  const Polytope& poly = g.polytope();
  if (edge >= poly.edge_count()) throw GeometryError("edge index out of range");
  const auto [ia, ib] = poly.edge_endpoints(edge);
  const Vec2 A = poly.vertices()[ia], B = poly.vertices()[ib];
  const Vec2 mid = 0.5 * (A + B);

  auto segment_distance = [&](Vec2 p, std::size_t i) {
    const auto [a, b] = poly.edge_endpoints(i);
    const Vec2 P = poly.vertices()[a], d = poly.vertices()[b] - P;
    const double t = std::clamp(dot(p - P, d) / dot(d, d), 0.0, 1.0);
    return norm(p - (P + t * d));
  };
  // p is reached from the band-1 node nearest to the midpoint across the unresolved strip
  std::size_t pnode = g.size();
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) == 1 && segment_distance(g.point(k), edge) <= 1.5 * g.h() &&
        (pnode == g.size() || norm(g.point(k) - mid) < norm(g.point(pnode) - mid)))
      pnode = k;
  if (pnode == g.size()) throw GeometryError("no grid nodes next to the edge");

  const auto H = metric_hessians(u);
  const ScalarField dp = geodesic_distance_field(
      u, GeodesicTarget::at({pnode}, {detail::seed_distance(u, H[pnode], g.point(pnode), edge)}));
  const ScalarField dl = geodesic_distance_field(u, GeodesicTarget::on_edge(edge));
  double b = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) != 1) continue;
    for (std::size_t i = 0; i < poly.edge_count(); ++i)
      if (i != edge && segment_distance(g.point(k), i) <= 1.5 * g.h())
        b = std::min(b, dp[k] + detail::seed_distance(u, H[k], g.point(k), i));
  }

  const InvariantField inv = ricci_and_kappa(u, opt.ricci);
  const int band = inv.kappa.min_band;
  EstimateSample s;
  s.h = g.h();
  s.band = band;
  std::size_t count = 0;
  std::vector<std::size_t> region;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < band || !(dp[k] < 0.5 * b)) continue;
    region.push_back(k);
    const double q = (inv.theta[k] + inv.kappa[k]) * dl[k] * dl[k];
    if (count == 0 || q > s.sup) {
      s.sup = q;
      s.node = g.point(k);
    }
    ++count;
  }
  if (count == 0) throw BandError("no evaluable nodes in the half ball around the edge midpoint");

  // ‖S_D(u)‖_{C³} over the region, derivatives where the stencil fits
  const ScalarField S = s_d_xi(u, D);
  double c3 = 0.0;
  for (auto k : region) c3 = std::max(c3, std::abs(S[k]));
  for (int a = 0; a <= 3; ++a)
    for (int bb = 0; a + bb <= 3; ++bb) {
      if (a + bb == 0 || S.min_band + MultiIndex{a, bb}.band_cost() > g.max_band()) continue;
      const ScalarField dS = fd_derivative(S, {a, bb});
      for (auto k : region)
        if (dS.defined(k)) c3 = std::max(c3, std::abs(dS[k]));
    }

  // h = u restricted to ℓ: second tangential derivative at the feet of the edge-adjacent nodes
  const Vec2 tan = (1.0 / norm(B - A)) * (B - A);
  PotentialEval ev(u);
  double h22 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) != 1 || segment_distance(g.point(k), edge) > 1.5 * g.h()) continue;
    const Vec2 p = g.point(k);
    const double t = std::clamp(dot(p - A, B - A) / dot(B - A, B - A), 0.0, 1.0);
    const Vec2 foot = A + t * (B - A);
    double val = 0.0;
    bool finite = true;
    if (u.guillemin)
      for (std::size_t i = 0; i < poly.edge_count(); ++i) {
        if (i == edge) continue;
        const double l = poly.edge_value(i, foot);
        if (!(l > 0.0)) {
          finite = false;
          break;
        }
        const double c = dot(poly.edges()[i].normal_vec(), tan);
        val += c * c / l;
      }
    if (!finite) continue;
    if (u.analytic) {
      const Jet4 j = u.analytic->jet<4>(foot);
      val += Sym2{j.deriv(2, 0), j.deriv(1, 1), j.deriv(0, 2)}.quad(tan);
    }
    std::ptrdiff_t deep = Grid::none;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const auto nb = g.neighbor(k, di, dj);
        if (nb != Grid::none && g.band(static_cast<std::size_t>(nb)) >= 2 &&
            (deep == Grid::none || g.band(static_cast<std::size_t>(nb)) > g.band(static_cast<std::size_t>(deep))))
          deep = nb;
      }
    if (deep != Grid::none) val += ev.psi_hessian(static_cast<std::size_t>(deep)).quad(tan) / u.scale;
    h22 = std::min(h22, u.scale * val);
  }

  s.extra["edge"] = edge;
  s.extra["b"] = b;
  s.extra["region_nodes"] = count;
  s.extra["kappa_full"] = inv.kappa_full;
  s.extra["S_D_C3"] = c3;
  s.extra["min_h22"] = num_json(h22);
  if (!inv.warning.empty()) s.extra["warning"] = inv.warning;
  return s;
}

}  // namespace abreu
