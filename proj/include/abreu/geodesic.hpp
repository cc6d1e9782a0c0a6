#pragma once

// Graph distances in the Calabi metric G_u = u_ij dξ_i dξ_j and sections
// S_u(p, σ) = {q : u(q) − u(p) − ∇u(p)·(q − p) ≤ σ}.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include "abreu/error.hpp"
#include "abreu/grid.hpp"
#include "abreu/potential.hpp"

namespace abreu {

/// ∂²u on every interior node. Band-1 nodes take the smooth-part Hessian of
/// their deepest neighbour; the closed-form part is exact everywhere.
inline std::vector<Sym2> metric_hessians(const Potential& u) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  std::vector<Sym2> out(g.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 2) out[k] = ev.at(k, 2).hess;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.band(k) >= 2) continue;
    std::ptrdiff_t best = Grid::none;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const auto n = g.neighbor(k, di, dj);
        if (n != Grid::none && g.band(static_cast<std::size_t>(n)) >= 2 &&
            (best == Grid::none || g.band(static_cast<std::size_t>(n)) > g.band(static_cast<std::size_t>(best))))
          best = n;
      }
    Sym2 smooth{};
    if (best != Grid::none) smooth = ev.psi_hessian(static_cast<std::size_t>(best));
    out[k] = ev.analytic_hessian(k) + smooth;
  }
  for (std::size_t k = 0; k < g.size(); ++k)
    if (!detail::positive_definite(out[k])) detail::throw_convexity(g, k, out[k].min_eigenvalue());
  return out;
}

struct GeodesicTarget {
  enum class Kind { boundary, edge, points };
  Kind kind = Kind::boundary;
  std::size_t edge = 0;
  std::vector<std::size_t> nodes;
  std::vector<double> offsets;  // initial distances of `nodes` (zero when empty)

  static GeodesicTarget boundary() { return {}; }
  static GeodesicTarget on_edge(std::size_t i) { return {Kind::edge, i, {}, {}}; }
  static GeodesicTarget at(std::vector<std::size_t> n, std::vector<double> off = {}) {
    return {Kind::points, 0, std::move(n), std::move(off)};
  }
};

namespace detail {

/// Distance from a band-1 node to edge i across the unresolved strip: s·√(ν̂ᵀHν̂),
/// doubled when the Guillemin part makes H ≈ c/l along ν̂ (∫₀^s √(c/t) dt = 2s√(c/s)).
inline double seed_distance(const Potential& u, const Sym2& H, Vec2 p, std::size_t i) {
  const Polytope& poly = u.grid->polytope();
  const auto [a, b] = poly.edge_endpoints(i);
  const Vec2 A = poly.vertices()[a], B = poly.vertices()[b];
  const Vec2 d = B - A;
  const double t = std::clamp(dot(p - A, d) / dot(d, d), 0.0, 1.0);
  const Vec2 foot = A + t * d;
  const double s = norm(p - foot);
  if (s == 0.0) return 0.0;
  const Vec2 dir = (1.0 / s) * (foot - p);
  const double metric = s * std::sqrt(H.quad(dir));
  return u.guillemin ? 2.0 * metric : metric;
}

}  // namespace detail

/// Multi-source Dijkstra on the 8-neighbour graph; edge weight √(Δξᵀ G Δξ) with G
/// the average of the endpoint Hessians. Ties are broken by node index.
inline ScalarField geodesic_distance_field(const Potential& u, const GeodesicTarget& target) {
  const Grid& g = *u.grid;
  const auto H = metric_hessians(u);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.size(), inf);
  const Polytope& poly = g.polytope();

  switch (target.kind) {
    case GeodesicTarget::Kind::points:
      if (!target.offsets.empty() && target.offsets.size() != target.nodes.size())
        throw GeometryError("geodesic seed offsets do not match the seed nodes");
      for (std::size_t i = 0; i < target.nodes.size(); ++i)
        dist.at(target.nodes[i]) = target.offsets.empty() ? 0.0 : target.offsets[i];
      break;
    case GeodesicTarget::Kind::boundary:
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (g.band(k) != 1) continue;
        for (std::size_t i = 0; i < poly.edge_count(); ++i)
          dist[k] = std::min(dist[k], detail::seed_distance(u, H[k], g.point(k), i));
      }
      break;
    case GeodesicTarget::Kind::edge: {
      if (target.edge >= poly.edge_count()) throw GeometryError("target is not an edge of the polytope");
      const auto [a, b] = poly.edge_endpoints(target.edge);
      const Vec2 A = poly.vertices()[a], B = poly.vertices()[b];
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (g.band(k) != 1) continue;
        const Vec2 p = g.point(k), d = B - A;
        const double t = std::clamp(dot(p - A, d) / dot(d, d), 0.0, 1.0);
        if (norm(p - (A + t * d)) <= 1.5 * g.h()) dist[k] = detail::seed_distance(u, H[k], p, target.edge);
      }
      break;
    }
  }

  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (dist[k] < inf) queue.push({dist[k], k});
  if (queue.empty()) throw GeometryError("geodesic target has no grid nodes");
  std::vector<char> done(g.size(), 0);
  const double h = g.h();
  while (!queue.empty()) {
    const auto [d, k] = queue.top();
    queue.pop();
    if (done[k]) continue;
    done[k] = 1;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        const auto nb = g.neighbor(k, di, dj);
        if (nb == Grid::none) continue;
        const auto n = static_cast<std::size_t>(nb);
        if (done[n]) continue;
        const Vec2 step{di * h, dj * h};
        const double w = std::sqrt((0.5 * (H[k] + H[n])).quad(step));
        if (d + w < dist[n]) {
          dist[n] = d + w;
          queue.push({dist[n], n});
        }
      }
  }
  ScalarField out(u.grid);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(dist[k] < inf)) throw GeometryError("interior grid graph is disconnected");
    out[k] = dist[k];
  }
  return out;
}

struct Section {
  std::vector<std::size_t> nodes;
  double diameter = 0.0;
  bool compact = true;  // false when the section reaches band-1 nodes
};

namespace detail {

inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t m = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (m >= 2 && cross(hull[m - 1] - hull[m - 2], pts[i] - hull[m - 2]) <= 0) --m;
    hull[m++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lower = m + 1; i-- > 0;) {
    while (m >= lower && cross(hull[m - 1] - hull[m - 2], pts[i] - hull[m - 2]) <= 0) --m;
    hull[m++] = pts[i];
  }
  hull.resize(m - 1);
  return hull;
}

inline double diameter(const std::vector<Vec2>& pts) {
  const auto hull = convex_hull(pts);
  double d = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    for (std::size_t j = i + 1; j < hull.size(); ++j) d = std::max(d, norm(hull[i] - hull[j]));
  return d;
}

}  // namespace detail

/// Height of u above its tangent plane at p, on all interior nodes.
inline ScalarField tangent_gap(const Potential& u, std::size_t p) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  const NodeDerivs dp = ev.at(p, 1);
  const Vec2 xp = g.point(p);
  ScalarField out(u.grid);
  for (std::size_t k = 0; k < g.size(); ++k) out[k] = ev.at(k, 0).value - dp.value - dot(dp.grad, g.point(k) - xp);
  return out;
}

inline Section section(const Potential& u, std::size_t p, double sigma) {
  const Grid& g = *u.grid;
  const ScalarField gap = tangent_gap(u, p);
  Section s;
  std::vector<Vec2> pts;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (gap[k] <= sigma || k == p) {
      s.nodes.push_back(k);
      pts.push_back(g.point(k));
      if (g.band(k) == 1) s.compact = false;
    }
  s.diameter = detail::diameter(pts);
  return s;
}

}  // namespace abreu
