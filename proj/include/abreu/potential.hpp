#pragma once

// Symplectic potentials u = s·(v + e + ψ) on a grid: v the Guillemin potential
// (closed form), e an optional closed-form expression, ψ grid samples
// differentiated by central differences. Hessian bundle and Legendre map.

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "abreu/error.hpp"
#include "abreu/expr.hpp"
#include "abreu/grid.hpp"
#include "abreu/parallel.hpp"
#include "abreu/polytope.hpp"

namespace abreu {

struct Potential {
  GridPtr grid;
  bool guillemin = true;
  std::optional<Expr> analytic;
  ScalarField psi;
  double scale = 1.0;

  static Potential guillemin_only(GridPtr g) {
    Potential u;
    u.psi = ScalarField(g);
    u.grid = std::move(g);
    return u;
  }
  /// Closed-form potential without the Guillemin part ("analytic mode").
  static Potential closed_form(GridPtr g, const Expr& e) {
    Potential u = guillemin_only(std::move(g));
    u.guillemin = false;
    u.analytic = e;
    return u;
  }
  Potential with_psi(ScalarField field) const {
    if (field.grid != grid && (field.grid->size() != grid->size() || field.grid->h() != grid->h()))
      throw GeometryError("smooth part lives on a different grid");
    Potential u = *this;
    u.psi = std::move(field);
    u.psi.grid = grid;
    u.psi.min_band = 1;
    return u;
  }
  Potential scaled(double s) const {
    Potential u = *this;
    u.scale *= s;
    return u;
  }

  bool psi_is_zero() const {
    for (double v : psi.values)
      if (v != 0.0) return false;
    return true;
  }
};

/// Derivatives of u at one node.
struct NodeDerivs {
  double value = 0.0;
  Vec2 grad{};
  Sym2 hess{};
  std::array<double, 4> third{};   // u_111, u_112, u_122, u_222
  std::array<double, 5> fourth{};  // u_1111, u_1112, u_1122, u_1222, u_2222

  double d3(int i, int j, int k) const { return third[static_cast<std::size_t>(i + j + k)]; }
  double d4(int i, int j, int k, int l) const { return fourth[static_cast<std::size_t>(i + j + k + l)]; }
};

/// Minimum band needed for derivatives of u up to `order`.
constexpr int band_for_order(int order) { return order == 0 ? 1 : (order <= 2 ? 2 : 3); }

/// Per-grid evaluator of node derivatives (caches the stencils).
class PotentialEval {
 public:
  explicit PotentialEval(const Potential& u) : u_(u), psi_zero_(u.psi_is_zero()) {
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; a + b <= 4; ++b) taps_[Jet4::index(a, b)] = fd::taps({a, b}, u.grid->h());
  }

  const Potential& potential() const { return u_; }

  NodeDerivs at(std::size_t k, int order) const {
    const Grid& g = *u_.grid;
    if (g.band(k) < band_for_order(order)) {
      std::ostringstream os;
      os << "derivatives of order " << order << " need band " << band_for_order(order) << ", node has band "
         << g.band(k);
      throw BandError(os.str());
    }
    const Vec2 xi = g.point(k);
    Jet4 j;
    if (u_.guillemin) j += guillemin_jet(g.polytope(), xi, order);
    if (u_.analytic) j += u_.analytic->jet<4>(xi);
    NodeDerivs d;
    auto get = [&](int a, int b) {
      double v = j.deriv(a, b);
      if (!psi_zero_) {
        if (a + b == 0)
          v += u_.psi[k];
        else
          v += fd::apply(g, taps_[Jet4::index(a, b)], u_.psi.values, k);
      }
      return u_.scale * v;
    };
    d.value = get(0, 0);
    if (order >= 1) d.grad = {get(1, 0), get(0, 1)};
    if (order >= 2) d.hess = {get(2, 0), get(1, 1), get(0, 2)};
    if (order >= 3)
      for (int b = 0; b <= 3; ++b) d.third[static_cast<std::size_t>(b)] = get(3 - b, b);
    if (order >= 4)
      for (int b = 0; b <= 4; ++b) d.fourth[static_cast<std::size_t>(b)] = get(4 - b, b);
    return d;
  }

  /// Hessian of the FD part alone (zero when ψ ≡ 0).
  Sym2 psi_hessian(std::size_t k) const {
    if (psi_zero_) return {};
    const auto& g = *u_.grid;
    const auto& v = u_.psi.values;
    return u_.scale * Sym2{fd::apply(g, taps_[Jet4::index(2, 0)], v, k), fd::apply(g, taps_[Jet4::index(1, 1)], v, k),
                           fd::apply(g, taps_[Jet4::index(0, 2)], v, k)};
  }
  /// Hessian of the closed-form parts alone (valid on every interior node).
  Sym2 analytic_hessian(std::size_t k) const {
    const Grid& g = *u_.grid;
    const Vec2 xi = g.point(k);
    Jet4 j;
    if (u_.guillemin) j += guillemin_jet(g.polytope(), xi, 2);
    if (u_.analytic) j += u_.analytic->jet<4>(xi);
    return u_.scale * Sym2{j.deriv(2, 0), j.deriv(1, 1), j.deriv(0, 2)};
  }

 private:
  const Potential& u_;
  bool psi_zero_;
  std::array<std::vector<fd::Tap>, Jet4::size> taps_;
};

struct HessEntry {
  Sym2 hess{};
  Sym2 inv{};
  double det = 0.0;
  double logdet = 0.0;
};

/// ∂²u, its inverse u^{ij}, det and log det on nodes with band ≥ 2.
struct HessBundle {
  GridPtr grid;
  int min_band = 2;
  std::vector<HessEntry> entries;

  bool defined(std::size_t k) const { return grid->band(k) >= min_band; }
  const HessEntry& operator[](std::size_t k) const { return entries[k]; }
};

namespace detail {
inline bool positive_definite(const Sym2& H) {
  const double lmax = std::abs(H.max_eigenvalue());
  return H.min_eigenvalue() > 1e-12 * std::max(lmax, 1e-300) && std::isfinite(H.det());
}

[[noreturn]] inline void throw_convexity(const Grid& g, std::size_t k, double eig) {
  std::ostringstream os;
  os.precision(10);
  const Vec2 p = g.point(k);
  os << "Hessian of u is not positive definite (degenerate Hessian) at node (" << p.x << ", " << p.y
     << "), smallest eigenvalue " << eig;
  throw ConvexityError(os.str());
}
}  // namespace detail

inline HessBundle hessian_bundle(const Potential& u) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  HessBundle hb{u.grid, 2, std::vector<HessEntry>(g.size())};
  std::vector<char> bad(g.size(), 0);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) < 2) return;
    HessEntry e;
    e.hess = ev.at(k, 2).hess;
    if (!detail::positive_definite(e.hess)) {
      bad[k] = 1;
      e.hess = {std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0};
    }
    e.inv = e.hess.inverse();
    e.det = e.hess.det();
    e.logdet = std::log(e.det);
    hb.entries[k] = e;
  });
  std::ptrdiff_t worst = -1;
  double worst_eig = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k)
    if (bad[k]) {
      const double eig = ev.at(k, 2).hess.min_eigenvalue();
      if (eig < worst_eig) {
        worst_eig = eig;
        worst = static_cast<std::ptrdiff_t>(k);
      }
    }
  if (worst >= 0) detail::throw_convexity(g, static_cast<std::size_t>(worst), worst_eig);
  return hb;
}

struct LegendrePoint {
  Vec2 x;        // ∇u(ξ)
  double f = 0;  // f(x) = ⟨ξ, x⟩ − u(ξ)
};

inline LegendrePoint legendre_map(const PotentialEval& ev, std::size_t k) {
  const NodeDerivs d = ev.at(k, 1);
  const Vec2 xi = ev.potential().grid->point(k);
  return {d.grad, dot(xi, d.grad) - d.value};
}

inline LegendrePoint legendre_map(const Potential& u, std::size_t k) { return legendre_map(PotentialEval(u), k); }

/// ∇_x f at the image points x = ∇u(ξ), by the chain rule ∇_x = (∂²u)^{-1} ∇_ξ
/// applied to the field ξ ↦ f(∇u(ξ)). Defined on band ≥ 3.
inline std::vector<Vec2> dual_gradient(const Potential& u) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  ScalarField fvals(u.grid, 2);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 2) fvals[k] = legendre_map(ev, k).f;
  const auto t1 = fd::taps({1, 0}, g.h()), t2 = fd::taps({0, 1}, g.h());
  std::vector<Vec2> out(g.size(), Vec2{NAN, NAN});
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < 3) continue;
    const Vec2 grad{fd::apply(g, t1, fvals.values, k), fd::apply(g, t2, fvals.values, k)};
    out[k] = ev.at(k, 2).hess.inverse() * grad;
  }
  return out;
}

struct RoundtripResult {
  double max_error = 0.0;  // max of |ξ' − ξ|∞ and |u' − u(ξ)| over band ≥ min_band
  std::size_t worst_node = 0;
  int band = 3;
};

/// Applies the gradient-map transform twice. The second pass reads ξ' = ∇_x f
/// from dual_gradient and u' = ⟨x, ξ'⟩ − f, so the error is that of the
/// discrete dual derivatives.
inline RoundtripResult legendre_roundtrip(const Potential& u, int min_band = 3) {
  const Grid& g = *u.grid;
  if (min_band < 3) throw BandError("the double transform needs band >= 3");
  PotentialEval ev(u);
  const std::vector<Vec2> back = dual_gradient(u);
  RoundtripResult r;
  r.band = min_band;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) < min_band) continue;
    const LegendrePoint lp = legendre_map(ev, k);
    const Vec2 d = back[k] - g.point(k);
    const double value = dot(lp.x, back[k]) - lp.f;
    const double e = std::max({std::abs(d.x), std::abs(d.y), std::abs(value - ev.at(k, 0).value)});
    if (e > r.max_error) {
      r.max_error = e;
      r.worst_node = k;
    }
  }
  return r;
}

}  // namespace abreu
