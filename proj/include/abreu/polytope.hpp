#pragma once

// Delzant polygons: edge data, vertices, the Guillemin potential and its
// closed-form derivatives, boundary distances, and affine normalization of
// convex bodies.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "abreu/error.hpp"
#include "abreu/jet.hpp"
#include "abreu/linalg.hpp"

namespace abreu {

/// Half-plane l(ξ) = ⟨ξ, normal⟩ − offset ≥ 0 with an integer inward normal.
struct Edge {
  std::array<long, 2> normal{};
  double offset = 0.0;

  Vec2 normal_vec() const { return {static_cast<double>(normal[0]), static_cast<double>(normal[1])}; }
  double value(Vec2 xi) const { return dot(xi, normal_vec()) - offset; }
};

class Polytope {
 public:
  /// Validates the edge list and computes the vertices (counter-clockwise).
  explicit Polytope(std::vector<Edge> edges) : edges_(std::move(edges)) {
    if (edges_.size() < 3) throw GeometryError("polytope needs at least 3 edges");
    for (std::size_t i = 0; i < edges_.size(); ++i)
      if (edges_[i].normal[0] == 0 && edges_[i].normal[1] == 0)
        throw GeometryError("edge " + std::to_string(i) + " has a zero normal");
    if (!bounded()) throw GeometryError("polytope is unbounded");
    compute_vertices();
  }

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  std::size_t edge_count() const { return edges_.size(); }

  /// Indices into vertices() of the two endpoints of edge i, ordered along the
  /// counter-clockwise boundary.
  std::array<std::size_t, 2> edge_endpoints(std::size_t i) const { return edge_endpoints_.at(i); }

  double edge_value(std::size_t i, Vec2 xi) const { return edges_[i].value(xi); }

  bool contains(Vec2 xi) const {
    return std::all_of(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.value(xi) > 0.0; });
  }

  double area() const {
    double a = 0.0;
    for (std::size_t k = 0; k < vertices_.size(); ++k)
      a += cross(vertices_[k], vertices_[(k + 1) % vertices_.size()]);
    return 0.5 * a;
  }

  Vec2 centroid() const {
    double a = 0.0;
    Vec2 c{};
    for (std::size_t k = 0; k < vertices_.size(); ++k) {
      const Vec2 p = vertices_[k];
      const Vec2 q = vertices_[(k + 1) % vertices_.size()];
      const double w = cross(p, q);
      a += w;
      c = c + w * (p + q);
    }
    return (1.0 / (3.0 * a)) * c;
  }

  double diameter() const {
    double d = 0.0;
    for (const auto& p : vertices_)
      for (const auto& q : vertices_) d = std::max(d, norm(p - q));
    return d;
  }

  /// Radius of the largest inscribed disk (Chebyshev center problem).
  double inradius() const {
    double best = 0.0;
    const std::size_t m = edges_.size();
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b)
        for (std::size_t c = b + 1; c < m; ++c) {
          Eigen::Matrix3d M;
          Eigen::Vector3d rhs;
          const std::size_t idx[3] = {a, b, c};
          for (int r = 0; r < 3; ++r) {
            const Vec2 n = edges_[idx[r]].normal_vec();
            const double len = norm(n);
            M(r, 0) = n.x / len;
            M(r, 1) = n.y / len;
            M(r, 2) = -1.0;
            rhs(r) = edges_[idx[r]].offset / len;
          }
          if (std::abs(M.determinant()) < 1e-14) continue;
          const Eigen::Vector3d s = M.partialPivLu().solve(rhs);
          const Vec2 p{s(0), s(1)};
          double r = std::numeric_limits<double>::infinity();
          for (const auto& e : edges_) r = std::min(r, e.value(p) / norm(e.normal_vec()));
          best = std::max(best, r);
        }
    return best;
  }

 private:
  static double vertex_tol(double scale) { return 1e-12 * std::max(1.0, scale); }

  bool bounded() const {
    // The recession cone {d : ⟨ν_i, d⟩ ≥ 0 ∀i} is nontrivial iff one of its
    // extreme rays lies on some line ⟨ν_i, d⟩ = 0.
    for (const auto& e : edges_) {
      const Vec2 n = e.normal_vec();
      for (double s : {1.0, -1.0}) {
        const Vec2 d{-s * n.y, s * n.x};
        bool in_cone = true;
        for (const auto& f : edges_)
          if (dot(f.normal_vec(), d) < 0.0) in_cone = false;
        if (in_cone) return false;
      }
    }
    return true;
  }

  void compute_vertices() {
    const std::size_t m = edges_.size();
    double scale = 0.0;
    for (const auto& e : edges_) scale = std::max(scale, std::abs(e.offset));
    std::vector<Vec2> pts;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) {
        const Vec2 ni = edges_[i].normal_vec();
        const Vec2 nj = edges_[j].normal_vec();
        const double det = cross(ni, nj);
        if (det == 0.0) continue;
        const Vec2 p{(edges_[i].offset * nj.y - edges_[j].offset * ni.y) / det,
                     (ni.x * edges_[j].offset - nj.x * edges_[i].offset) / det};
        bool feasible = true;
        for (const auto& e : edges_)
          if (e.value(p) < -vertex_tol(scale) * norm(e.normal_vec())) feasible = false;
        if (!feasible) continue;
        bool dup = false;
        for (const auto& q : pts)
          if (norm(p - q) <= vertex_tol(scale)) dup = true;
        if (!dup) pts.push_back(p);
      }
    if (pts.size() < 3) throw GeometryError("polytope has empty interior");
    Vec2 mean{};
    for (const auto& p : pts) mean = mean + p;
    mean = (1.0 / static_cast<double>(pts.size())) * mean;
    std::sort(pts.begin(), pts.end(), [&](Vec2 a, Vec2 b) {
      return std::atan2(a.y - mean.y, a.x - mean.x) < std::atan2(b.y - mean.y, b.x - mean.x);
    });
    vertices_ = std::move(pts);
    if (!(area() > vertex_tol(scale))) throw GeometryError("polytope has empty interior");

    edge_endpoints_.assign(m, {0, 0});
    const std::size_t nv = vertices_.size();
    for (std::size_t i = 0; i < m; ++i) {
      bool found = false;
      for (std::size_t k = 0; k < nv; ++k) {
        const std::size_t k1 = (k + 1) % nv;
        if (std::abs(edges_[i].value(vertices_[k])) <= vertex_tol(scale) * norm(edges_[i].normal_vec()) &&
            std::abs(edges_[i].value(vertices_[k1])) <= vertex_tol(scale) * norm(edges_[i].normal_vec())) {
          edge_endpoints_[i] = {k, k1};
          found = true;
        }
      }
      if (!found) throw GeometryError("edge " + std::to_string(i) + " does not support a side of the polytope");
    }
  }

  std::vector<Edge> edges_;
  std::vector<Vec2> vertices_;
  std::vector<std::array<std::size_t, 2>> edge_endpoints_;
};

/// Parses one edge per line: "n1 n2 lambda" (integer normal, real offset).
/// Blank lines and text after '#' are ignored.
inline Polytope parse_polytope(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<Edge> edges;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string t1, t2, t3, extra;
    if (!(ls >> t1)) continue;
    if (!(ls >> t2 >> t3) || (ls >> extra))
      throw ParseError("line " + std::to_string(lineno) + ": expected 'n1 n2 lambda'");
    auto to_long = [&](const std::string& t) {
      std::size_t used = 0;
      long v = 0;
      try {
        v = std::stol(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != t.size())
        throw ParseError("line " + std::to_string(lineno) + ": normal entry '" + t + "' is not an integer");
      return v;
    };
    Edge e;
    e.normal = {to_long(t1), to_long(t2)};
    std::size_t used = 0;
    try {
      e.offset = std::stod(t3, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t3.size() || !std::isfinite(e.offset))
      throw ParseError("line " + std::to_string(lineno) + ": offset '" + t3 + "' is not a number");
    edges.push_back(e);
  }
  return Polytope(std::move(edges));
}

inline Polytope load_polytope(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open polytope file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_polytope(ss.str());
}

struct DelzantVertex {
  Vec2 vertex;
  std::size_t incoming_edge;  // edge ending at the vertex (counter-clockwise)
  std::size_t outgoing_edge;
  long determinant;  // det[ν_incoming, ν_outgoing]
};

struct DelzantReport {
  std::vector<DelzantVertex> vertices;
  std::vector<std::size_t> non_primitive_edges;
  bool pass = false;
};

inline DelzantReport check_delzant(const Polytope& p) {
  DelzantReport rep;
  const auto& edges = p.edges();
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (std::gcd(std::abs(edges[i].normal[0]), std::abs(edges[i].normal[1])) != 1)
      rep.non_primitive_edges.push_back(i);
  const std::size_t nv = p.vertices().size();
  std::vector<std::size_t> ending(nv), starting(nv);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto ends = p.edge_endpoints(i);
    starting[ends[0]] = i;
    ending[ends[1]] = i;
  }
  bool unimodular = true;
  for (std::size_t k = 0; k < nv; ++k) {
    const auto& a = edges[ending[k]].normal;
    const auto& b = edges[starting[k]].normal;
    const long det = a[0] * b[1] - a[1] * b[0];
    rep.vertices.push_back({p.vertices()[k], ending[k], starting[k], det});
    if (det != 1 && det != -1) unimodular = false;
  }
  rep.pass = unimodular && rep.non_primitive_edges.empty();
  return rep;
}

inline std::vector<double> edge_values(const Polytope& p, Vec2 xi) {
  std::vector<double> out;
  out.reserve(p.edge_count());
  for (const auto& e : p.edges()) out.push_back(e.value(xi));
  return out;
}

/// Derivatives of the Guillemin potential v = Σ l_i log l_i.
using GuilleminJet = Jet4;

/// Closed-form jet of v at an interior point, truncated at `order` (0..4).
///   ∂^α v = Σ_i ν_i^α (1 + log l_i)                  for |α| = 1
///   ∂^α v = Σ_i ν_i^α (−1)^k (k−2)! / l_i^{k−1}       for |α| = k ≥ 2
inline GuilleminJet guillemin_jet(const Polytope& p, Vec2 xi, int order = 4) {
  GuilleminJet j;
  static constexpr double fact[5] = {1.0, 1.0, 2.0, 6.0, 24.0};
  for (const auto& e : p.edges()) {
    const double l = e.value(xi);
    if (!(l > 0.0)) throw DomainError("Guillemin potential evaluated on or outside the boundary");
    const double n1 = static_cast<double>(e.normal[0]);
    const double n2 = static_cast<double>(e.normal[1]);
    j.coeff(0, 0) += l * std::log(l);
    for (int k = 1; k <= std::min(order, 4); ++k) {
      const double dk = k == 1 ? 1.0 + std::log(l) : ((k % 2) ? -1.0 : 1.0) * fact[k - 2] / std::pow(l, k - 1);
      for (int a = 0; a <= k; ++a) {
        const int b = k - a;
        // Taylor coefficient: ∂^{(a,b)} / (a! b!)
        j.coeff(a, b) += dk * std::pow(n1, a) * std::pow(n2, b) / (fact[a] * fact[b]);
      }
    }
  }
  return j;
}

/// Exact Euclidean distance from a point of the closed polygon to its boundary.
inline double euclidean_boundary_distance(const Polytope& p, Vec2 xi) {
  double best = std::numeric_limits<double>::infinity();
  const auto& v = p.vertices();
  for (std::size_t i = 0; i < p.edge_count(); ++i) {
    const auto ends = p.edge_endpoints(i);
    const Vec2 a = v[ends[0]];
    const Vec2 b = v[ends[1]];
    const Vec2 ab = b - a;
    const double t = std::clamp(dot(xi - a, ab) / dot(ab, ab), 0.0, 1.0);
    best = std::min(best, norm(xi - (a + t * ab)));
  }
  return best;
}

/// Convex polygon given by counter-clockwise vertices.
class ConvexPolygon {
 public:
  explicit ConvexPolygon(std::vector<Vec2> vertices) : v_(std::move(vertices)) {
    if (v_.size() < 3) throw GeometryError("polygon needs at least 3 vertices");
    if (signed_area() < 0.0) std::reverse(v_.begin(), v_.end());
    if (!(signed_area() > 0.0)) throw GeometryError("degenerate (zero-area) body");
    for (std::size_t k = 0; k < v_.size(); ++k) {
      const Vec2 a = v_[k], b = v_[(k + 1) % v_.size()], c = v_[(k + 2) % v_.size()];
      if (cross(b - a, c - b) < -1e-12 * dot(b - a, b - a)) throw GeometryError("polygon is not convex");
    }
  }

  static ConvexPolygon from_polytope(const Polytope& p) { return ConvexPolygon(p.vertices()); }
  static ConvexPolygon regular(Vec2 center, double radius, int sides) {
    std::vector<Vec2> v;
    for (int k = 0; k < sides; ++k) {
      const double t = 2.0 * M_PI * k / sides;
      v.push_back({center.x + radius * std::cos(t), center.y + radius * std::sin(t)});
    }
    return ConvexPolygon(std::move(v));
  }

  const std::vector<Vec2>& vertices() const { return v_; }

  double signed_area() const {
    double a = 0.0;
    for (std::size_t k = 0; k < v_.size(); ++k) a += cross(v_[k], v_[(k + 1) % v_.size()]);
    return 0.5 * a;
  }

  Vec2 centroid() const {
    double a = 0.0;
    Vec2 c{};
    for (std::size_t k = 0; k < v_.size(); ++k) {
      const Vec2 p = v_[k], q = v_[(k + 1) % v_.size()];
      const double w = cross(p, q);
      a += w;
      c = c + w * (p + q);
    }
    return (1.0 / (3.0 * a)) * c;
  }

  /// Second moments about the centroid, normalized by area (covariance of the
  /// uniform distribution on the polygon).
  Sym2 covariance() const {
    const Vec2 g = centroid();
    double a = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < v_.size(); ++k) {
      const Vec2 p = v_[k] - g, q = v_[(k + 1) % v_.size()] - g;
      const double w = cross(p, q);
      a += 0.5 * w;
      sxx += w * (p.x * p.x + p.x * q.x + q.x * q.x) / 12.0;
      syy += w * (p.y * p.y + p.y * q.y + q.y * q.y) / 12.0;
      sxy += w * (p.x * q.y + 2.0 * p.x * p.y + 2.0 * q.x * q.y + q.x * p.y) / 24.0;
    }
    return {sxx / a, sxy / a, syy / a};
  }

  /// Support function h(n) = max_v ⟨v, n⟩.
  double support(Vec2 n) const {
    double h = -std::numeric_limits<double>::infinity();
    for (const auto& p : v_) h = std::max(h, dot(p, n));
    return h;
  }

  ConvexPolygon transformed(const AffineMap2& T) const {
    std::vector<Vec2> w;
    w.reserve(v_.size());
    for (const auto& p : v_) w.push_back(T(p));
    return ConvexPolygon(std::move(w));
  }

 private:
  std::vector<Vec2> v_;
};

struct NormalizationCheck {
  Vec2 centroid;
  double inner_radius = 0.0;  // largest r with D_r(0) ⊆ body (support-function test)
  double outer_radius = 0.0;  // smallest R with body ⊆ D_R(0)
  bool pass = false;
};

/// Tests "center of mass 0 and 2^{-3/2} D₁(0) ⊆ body ⊆ D₁(0)".
inline NormalizationCheck check_normalized(const ConvexPolygon& body, double tol = 1e-9) {
  NormalizationCheck c;
  c.centroid = body.centroid();
  const auto& v = body.vertices();
  c.inner_radius = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Vec2 d = v[(k + 1) % v.size()] - v[k];
    const Vec2 outward = (1.0 / norm(d)) * Vec2{d.y, -d.x};
    c.inner_radius = std::min(c.inner_radius, body.support(outward));
  }
  for (const auto& p : v) c.outer_radius = std::max(c.outer_radius, norm(p));
  c.pass = norm(c.centroid) <= tol && c.inner_radius >= std::pow(2.0, -1.5) - tol && c.outer_radius <= 1.0 + tol;
  return c;
}

struct NormalizedDomain {
  AffineMap2 map;
  ConvexPolygon polygon;
};

namespace detail {

/// Khachiyan's iteration for the minimum-volume enclosing ellipse
/// {x : (x − c)ᵀ P (x − c) ≤ 1} of a point set.
inline std::pair<Vec2, Sym2> min_volume_ellipse(const std::vector<Vec2>& pts, double tol = 1e-9) {
  const int m = static_cast<int>(pts.size());
  Eigen::MatrixXd Q(3, m);
  for (int j = 0; j < m; ++j) Q.col(j) << pts[j].x, pts[j].y, 1.0;
  Eigen::VectorXd u = Eigen::VectorXd::Constant(m, 1.0 / m);
  for (int iter = 0; iter < 100000; ++iter) {
    const Eigen::Matrix3d X = Q * u.asDiagonal() * Q.transpose();
    const Eigen::Matrix3d Xi = X.inverse();
    Eigen::Index j = 0;
    double Mj = -1.0;
    for (int k = 0; k < m; ++k) {
      const double Mk = Q.col(k).dot(Xi * Q.col(k));
      if (Mk > Mj) {
        Mj = Mk;
        j = k;
      }
    }
    const double step = (Mj - 3.0) / (3.0 * (Mj - 1.0));
    Eigen::VectorXd next = (1.0 - step) * u;
    next(j) += step;
    const double change = (next - u).norm();
    u = next;
    if (change < tol) break;
  }
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  for (int j = 0; j < m; ++j) {
    const Eigen::Vector2d p(pts[j].x, pts[j].y);
    c += u(j) * p;
    S += u(j) * p * p.transpose();
  }
  const Eigen::Matrix2d P = 0.5 * (S - c * c.transpose()).inverse();
  return {{c(0), c(1)}, {P(0, 0), 0.5 * (P(0, 1) + P(1, 0)), P(1, 1)}};
}

inline Mat2 sym_power(const Sym2& s, double power) {
  Eigen::Matrix2d m;
  m << s.a11, s.a12, s.a12, s.a22;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const Eigen::Matrix2d r =
      es.eigenvectors() * es.eigenvalues().array().pow(power).matrix().asDiagonal() * es.eigenvectors().transpose();
  return {{r(0, 0), r(0, 1), r(1, 0), r(1, 1)}};
}

/// Rounds `body` with the linear map `round`, centers it at its centroid and
/// scales it into the unit disk.
inline NormalizedDomain center_and_scale(const ConvexPolygon& body, const AffineMap2& round) {
  const ConvexPolygon rounded = body.transformed(round);
  const Vec2 g = rounded.centroid();
  double R = 0.0;
  for (const auto& p : rounded.vertices()) R = std::max(R, norm(p - g));
  AffineMap2 scale{{{1.0 / R, 0.0, 0.0, 1.0 / R}}, -(1.0 / R) * g};
  const AffineMap2 T = scale.compose(round);
  return {T, body.transformed(T)};
}

}  // namespace detail

/// Affine map T with T(body) normalized (see check_normalized).
///
/// Rounds the body with its minimum-volume enclosing ellipse, then moves the
/// centroid to the origin and scales into the unit disk. If the inner-disk
/// condition fails after that, the inertia ellipse is used instead; it
/// guarantees an inner/outer ratio of at least 1/2 in the plane.
inline NormalizedDomain normalize_domain(const ConvexPolygon& body) {
  const auto [center, P] = detail::min_volume_ellipse(body.vertices());
  const Mat2 root = detail::sym_power(P, 0.5);
  NormalizedDomain out = detail::center_and_scale(body, AffineMap2{root, -1.0 * (root * center)});
  if (check_normalized(out.polygon).pass) return out;
  const Mat2 whiten = detail::sym_power(body.covariance(), -0.5);
  return detail::center_and_scale(body, AffineMap2{whiten, {}});
}

}  // namespace abreu
