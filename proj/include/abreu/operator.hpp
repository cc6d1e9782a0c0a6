#pragma once

// The generalized Abreu operator
//   S_D(u) = −(1/D) Σ ∂²(D u^{ij}) / ∂ξ_i ∂ξ_j
// in four equivalent forms, with the auxiliary fields F = D / det ∂²u,
// U^{ij} = det(∂²u) u^{ij}, and the determinant ratios H, ℍ.

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "abreu/error.hpp"
#include "abreu/expr.hpp"
#include "abreu/grid.hpp"
#include "abreu/parallel.hpp"
#include "abreu/potential.hpp"

namespace abreu {

struct OperatorContext {
  Potential u;
  Expr D = Expr::parse("1");
  Expr A = Expr::parse("0");
  std::optional<Potential> reference;
};

/// D and ∇ log D on every interior node; throws DomainError unless D > 0.
struct WeightSamples {
  std::vector<double> value;
  std::vector<Vec2> grad_log;
  double min_value = 0.0;
};

inline WeightSamples sample_weight(const Expr& D, const Grid& g) {
  WeightSamples w{std::vector<double>(g.size()), std::vector<Vec2>(g.size()), 0.0};
  w.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec2 p = g.point(k);
    Jet<1> j;
    try {
      j = D.jet<1>(p);
    } catch (const DomainError& e) {
      std::ostringstream os;
      os.precision(17);
      os << e.what() << " at node (" << p.x << ", " << p.y << ")";
      throw DomainError(os.str());
    }
    w.value[k] = j.value();
    w.min_value = std::min(w.min_value, j.value());
    if (!(j.value() > 0.0)) {
      std::ostringstream os;
      os.precision(17);
      os << "weight D = '" << D.text() << "' must be positive; value " << j.value() << " at node (" << p.x << ", "
         << p.y << ")";
      throw DomainError(os.str());
    }
    w.grad_log[k] = {j.d(0) / j.value(), j.d(1) / j.value()};
  }
  return w;
}

namespace detail {

struct SecondTaps {
  std::vector<fd::Tap> t20, t11, t02, t10, t01;
  explicit SecondTaps(double h)
      : t20(fd::taps({2, 0}, h)),
        t11(fd::taps({1, 1}, h)),
        t02(fd::taps({0, 2}, h)),
        t10(fd::taps({1, 0}, h)),
        t01(fd::taps({0, 1}, h)) {}
};

/// Σ_ij ∂²q^{ij} for a symmetric field stored as three component arrays.
inline double double_divergence(const Grid& g, const SecondTaps& t, const std::vector<double>& q11,
                                const std::vector<double>& q12, const std::vector<double>& q22, std::size_t k) {
  return fd::apply(g, t.t20, q11, k) + 2.0 * fd::apply(g, t.t11, q12, k) + fd::apply(g, t.t02, q22, k);
}

inline Sym2 fd_hessian(const Grid& g, const SecondTaps& t, const std::vector<double>& v, std::size_t k) {
  return {fd::apply(g, t.t20, v, k), fd::apply(g, t.t11, v, k), fd::apply(g, t.t02, v, k)};
}

inline Vec2 fd_gradient(const Grid& g, const SecondTaps& t, const std::vector<double>& v, std::size_t k) {
  return {fd::apply(g, t.t10, v, k), fd::apply(g, t.t01, v, k)};
}

/// Shared per-node data for the operator forms.
struct OperatorData {
  GridPtr grid;
  HessBundle hb;
  WeightSamples w;
  std::vector<double> F, logF;  // band ≥ 2
  SecondTaps taps;

  OperatorData(const Potential& u, const Expr& D)
      : grid(u.grid), hb(hessian_bundle(u)), w(sample_weight(D, *u.grid)), taps(u.grid->h()) {
    const Grid& g = *grid;
    F.assign(g.size(), std::numeric_limits<double>::quiet_NaN());
    logF = F;
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g.band(k) >= 2) {
        F[k] = w.value[k] / hb[k].det;
        logF[k] = std::log(w.value[k]) - hb[k].logdet;
      }
  }
};

}  // namespace detail

/// −(1/D) Σ ∂²(D u^{ij}) on band ≥ 3.
inline ScalarField s_d_xi(const detail::OperatorData& d) {
  const Grid& g = *d.grid;
  std::vector<double> q11(g.size(), NAN), q12(g.size(), NAN), q22(g.size(), NAN);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 2) {
      const Sym2& inv = d.hb[k].inv;
      q11[k] = d.w.value[k] * inv.a11;
      q12[k] = d.w.value[k] * inv.a12;
      q22[k] = d.w.value[k] * inv.a22;
    }
  ScalarField out(d.grid, 3);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) >= 3) out[k] = -detail::double_divergence(g, d.taps, q11, q12, q22, k) / d.w.value[k];
  });
  return out;
}

/// −(1/D) Σ U^{ij} ∂²F on band ≥ 3.
inline ScalarField s_d_uf(const detail::OperatorData& d) {
  const Grid& g = *d.grid;
  ScalarField out(d.grid, 3);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) < 3) return;
    const Sym2& H = d.hb[k].hess;
    const Sym2 U{H.a22, -H.a12, H.a11};
    const Sym2 F2 = detail::fd_hessian(g, d.taps, d.F, k);
    out[k] = -(U.a11 * F2.a11 + 2.0 * U.a12 * F2.a12 + U.a22 * F2.a22) / d.w.value[k];
  });
  return out;
}

/// −[u^{ij} ∂²log F + u^{ij} ∂_i log F ∂_j log F] on band ≥ 3.
inline ScalarField s_d_logf(const detail::OperatorData& d) {
  const Grid& g = *d.grid;
  ScalarField out(d.grid, 3);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) < 3) return;
    const Sym2& inv = d.hb[k].inv;
    const Sym2 G2 = detail::fd_hessian(g, d.taps, d.logF, k);
    const Vec2 G1 = detail::fd_gradient(g, d.taps, d.logF, k);
    out[k] = -(inv.a11 * G2.a11 + 2.0 * inv.a12 * G2.a12 + inv.a22 * G2.a22 + inv.quad(G1));
  });
  return out;
}

/// −f^{ij} ∂²_x log F − f^{ij} ∂_x log F ∂_x log D with x = ∇u, on band ≥ 4.
/// x-derivatives use ∂_x = (∂²u)^{-1} ∂_ξ; the contraction with f^{ij} = u_ij
/// of ∂_x(∂_x log F) reduces to the ξ-divergence of (∂²u)^{-1} ∇_ξ log F.
inline ScalarField s_d_x(const detail::OperatorData& d) {
  const Grid& g = *d.grid;
  std::vector<double> w1(g.size(), NAN), w2(g.size(), NAN);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 3) {
      const Vec2 w = d.hb[k].inv * detail::fd_gradient(g, d.taps, d.logF, k);
      w1[k] = w.x;
      w2[k] = w.y;
    }
  ScalarField out(d.grid, 4);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) < 4) return;
    const double trace = fd::apply(g, d.taps.t10, w1, k) + fd::apply(g, d.taps.t01, w2, k);
    const Vec2 dx_logF{w1[k], w2[k]};
    const Vec2 dx_logD = d.hb[k].inv * d.w.grad_log[k];
    out[k] = -trace - dot(dx_logF, d.hb[k].hess * dx_logD);
  });
  return out;
}

/// Abreu's operator −Σ ∂²u^{ij} (the case D ≡ 1), on band ≥ 3.
inline ScalarField abreu_operator(const Potential& u) {
  const Grid& g = *u.grid;
  const HessBundle hb = hessian_bundle(u);
  const detail::SecondTaps t(g.h());
  std::vector<double> q11(g.size(), NAN), q12(g.size(), NAN), q22(g.size(), NAN);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 2) {
      q11[k] = hb[k].inv.a11;
      q12[k] = hb[k].inv.a12;
      q22[k] = hb[k].inv.a22;
    }
  ScalarField out(u.grid, 3);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 3) out[k] = -detail::double_divergence(g, t, q11, q12, q22, k);
  return out;
}

inline ScalarField s_d_xi(const Potential& u, const Expr& D) { return s_d_xi(detail::OperatorData(u, D)); }
inline ScalarField s_d_xi(const OperatorContext& c) { return s_d_xi(c.u, c.D); }
inline ScalarField s_d_uf(const OperatorContext& c) { return s_d_uf(detail::OperatorData(c.u, c.D)); }
inline ScalarField s_d_logf(const OperatorContext& c) { return s_d_logf(detail::OperatorData(c.u, c.D)); }
inline ScalarField s_d_x(const OperatorContext& c) { return s_d_x(detail::OperatorData(c.u, c.D)); }

struct ResidualField {
  ScalarField xi, uf, logf, x;
};

inline ResidualField operator_forms(const Potential& u, const Expr& D) {
  const detail::OperatorData d(u, D);
  return {s_d_xi(d), s_d_uf(d), s_d_logf(d), s_d_x(d)};
}

inline ResidualField operator_forms(const OperatorContext& c) { return operator_forms(c.u, c.D); }

/// max_j |Σ_i ∂_i U^{ij}| on band ≥ 3.
inline ScalarField divergence_defect(const Potential& u) {
  const Grid& g = *u.grid;
  const HessBundle hb = hessian_bundle(u);
  const detail::SecondTaps t(g.h());
  std::vector<double> U11(g.size(), NAN), U12(g.size(), NAN), U22(g.size(), NAN);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 2) {
      U11[k] = hb[k].hess.a22;
      U12[k] = -hb[k].hess.a12;
      U22[k] = hb[k].hess.a11;
    }
  ScalarField out(u.grid, 3);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < 3) continue;
    const double r1 = fd::apply(g, t.t10, U11, k) + fd::apply(g, t.t01, U12, k);
    const double r2 = fd::apply(g, t.t10, U12, k) + fd::apply(g, t.t01, U22, k);
    out[k] = std::max(std::abs(r1), std::abs(r2));
  }
  return out;
}

struct HFields {
  ScalarField H;    // det ∂²u_f / det ∂²u_g
  ScalarField HH;   // ℍ = (D_g / D_f) H with both weights read at the same ξ
};

/// Determinant ratio between the comparison potential f-side and the reference
/// g-side, identified through the shared moment coordinate ξ; band ≥ 2.
inline HFields h_fields(const Potential& f_side, const Potential& g_side, const Expr& D) {
  const Grid& gf = *f_side.grid;
  const Grid& gg = *g_side.grid;
  if (gf.size() != gg.size() || gf.h() != gg.h() || (gf.size() > 0 && norm(gf.point(0) - gg.point(0)) > 0.0))
    throw GeometryError("H fields need both potentials on the same grid");
  const HessBundle hf = hessian_bundle(f_side), hg = hessian_bundle(g_side);
  const WeightSamples w = sample_weight(D, gf);
  HFields out{ScalarField(f_side.grid, 2), ScalarField(f_side.grid, 2)};
  for (std::size_t k = 0; k < gf.size(); ++k)
    if (gf.band(k) >= 2) {
      out.H[k] = hf[k].det / hg[k].det;
      out.HH[k] = (w.value[k] / w.value[k]) * out.H[k];
    }
  return out;
}

inline HFields h_fields(const OperatorContext& c) {
  if (!c.reference) throw ConfigError("H fields need a reference potential");
  return h_fields(c.u, *c.reference, c.D);
}

struct EquivalenceRow {
  double h = 0.0;
  int band = 4;
  double disc_xi_uf = 0.0;
  double disc_xi_logf = 0.0;
  double disc_xi_x = 0.0;
  double max_pairwise = 0.0;
  std::size_t nodes = 0;
};

struct EquivalenceReport {
  std::vector<EquivalenceRow> rows;
  double delta = 0.0;          // Euclidean distance to ∂Δ required of compared nodes
  double fitted_order = NAN;   // least-squares slope of log disc against log h
  bool exact = false;          // every discrepancy below the rounding floor
  static constexpr double noise_floor = 1e-9;

  bool passes(double min_order) const { return exact || fitted_order >= min_order; }
};

/// Discrepancies among the four forms on band ≥ 4 nodes at distance ≥ delta from ∂Δ.
inline EquivalenceRow equivalence_row(const Potential& u, const Expr& D, double delta) {
  const Grid& g = *u.grid;
  const ResidualField r = operator_forms(u, D);
  EquivalenceRow row;
  row.h = g.h();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < 4 || euclidean_boundary_distance(g.polytope(), g.point(k)) < delta) continue;
    ++row.nodes;
    const double v[4] = {r.xi[k], r.uf[k], r.logf[k], r.x[k]};
    row.disc_xi_uf = std::max(row.disc_xi_uf, std::abs(v[0] - v[1]));
    row.disc_xi_logf = std::max(row.disc_xi_logf, std::abs(v[0] - v[2]));
    row.disc_xi_x = std::max(row.disc_xi_x, std::abs(v[0] - v[3]));
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) row.max_pairwise = std::max(row.max_pairwise, std::abs(v[a] - v[b]));
  }
  if (row.nodes == 0) throw BandError("no band-4 nodes at the requested distance from the boundary");
  return row;
}

inline double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return NAN;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

/// Builds the potential on each grid of the refinement list and fits the
/// convergence order of the largest pairwise discrepancy.
inline EquivalenceReport equivalence_report(const Polytope& p, const std::function<Potential(GridPtr)>& make_u,
                                            const Expr& D, const std::vector<double>& hs, double delta = -1.0) {
  EquivalenceReport rep;
  rep.delta = delta >= 0.0 ? delta : 0.5 * p.inradius();
  std::vector<double> x, y;
  rep.exact = true;
  for (double h : hs) {
    const Potential u = make_u(build_grid(p, h));
    rep.rows.push_back(equivalence_row(u, D, rep.delta));
    x.push_back(h);
    y.push_back(rep.rows.back().max_pairwise);
    if (rep.rows.back().max_pairwise >= EquivalenceReport::noise_floor) rep.exact = false;
  }
  if (!rep.exact) {
    bool positive = true;
    for (double v : y) positive = positive && v > 0.0;
    rep.fitted_order = positive ? fit_log_slope(x, y) : NAN;
  }
  return rep;
}

inline void write_equivalence_csv(std::ostream& os, const EquivalenceReport& rep,
                                  const std::vector<std::string>& header = {}) {
  for (const auto& line : header) os << "# " << line << '\n';
  char buf[256];
  std::snprintf(buf, sizeof buf, "# delta=%.17g exact=%d\n", rep.delta, rep.exact ? 1 : 0);
  os << buf << "h,band,disc_xi_uf,disc_xi_logf,disc_xi_x,fitted_order\n";
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", r.h, r.band, r.disc_xi_uf, r.disc_xi_logf,
                  r.disc_xi_x, rep.fitted_order);
    os << buf;
  }
}

}  // namespace abreu
