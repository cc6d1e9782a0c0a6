#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "abreu/polytope.hpp"

using namespace abreu;

namespace {

const char* kSquare = "1 0 0\n-1 0 -1\n0 1 0\n0 -1 -1\n";
const char* kSimplex = "1 0 0\n0 1 0\n-1 -1 -1\n";

bool has_vertex(const Polytope& p, Vec2 v) {
  for (const auto& q : p.vertices())
    if (norm(q - v) < 1e-12) return true;
  return false;
}

}  // namespace

TEST(PolytopeParse, SquareVertices) {
  const Polytope p = parse_polytope(kSquare);
  ASSERT_EQ(p.vertices().size(), 4u);
  for (Vec2 v : {Vec2{0, 0}, Vec2{1, 0}, Vec2{1, 1}, Vec2{0, 1}}) EXPECT_TRUE(has_vertex(p, v));
  EXPECT_NEAR(p.area(), 1.0, 1e-15);
}

TEST(PolytopeParse, SimplexVertices) {
  const Polytope p = parse_polytope(kSimplex);
  ASSERT_EQ(p.vertices().size(), 3u);
  for (Vec2 v : {Vec2{0, 0}, Vec2{1, 0}, Vec2{0, 1}}) EXPECT_TRUE(has_vertex(p, v));
  EXPECT_NEAR(p.area(), 0.5, 1e-15);
}

TEST(PolytopeParse, Rejections) {
  EXPECT_THROW(parse_polytope("1 0 0\n-1 0 -1\n"), GeometryError);
  EXPECT_THROW(parse_polytope("1 0 0\n-1 0 -1\n1 0 0.5\n"), GeometryError);
  EXPECT_THROW(parse_polytope("1 0 0\n0 1 0\n-1 -1 1\n"), GeometryError);
  EXPECT_THROW(parse_polytope("1 0\n0 1 0\n-1 -1 -1\n"), ParseError);
  EXPECT_THROW(parse_polytope("1.5 0 0\n0 1 0\n-1 -1 -1\n"), ParseError);
  EXPECT_THROW(parse_polytope("1 0 x\n0 1 0\n-1 -1 -1\n"), ParseError);
}

TEST(PolytopeParse, CommentsAndBlankLines) {
  const Polytope p = parse_polytope("# square\n\n1 0 0  # left\n-1 0 -1\n0 1 0\n0 -1 -1\n");
  EXPECT_EQ(p.edge_count(), 4u);
}

TEST(Delzant, SquareAndSimplexPass) {
  for (const char* s : {kSquare, kSimplex}) {
    const auto rep = check_delzant(parse_polytope(s));
    EXPECT_TRUE(rep.pass);
    for (const auto& v : rep.vertices) EXPECT_EQ(std::abs(v.determinant), 1);
  }
}

TEST(Delzant, NonPrimitiveNormalFails) {
  const auto rep = check_delzant(parse_polytope("2 0 0\n-1 0 -1\n0 1 0\n0 -1 -1\n"));
  EXPECT_FALSE(rep.pass);
  ASSERT_EQ(rep.non_primitive_edges.size(), 1u);
  EXPECT_EQ(rep.non_primitive_edges[0], 0u);
}

TEST(Delzant, NonUnimodularVertexFails) {
  const auto rep = check_delzant(parse_polytope("1 0 0\n0 1 0\n-1 -2 -2\n"));
  EXPECT_FALSE(rep.pass);
}

TEST(Delzant, InvariantUnderEdgeRelabeling) {
  const auto a = check_delzant(parse_polytope(kSimplex));
  const auto b = check_delzant(parse_polytope("-1 -1 -1\n1 0 0\n0 1 0\n"));
  EXPECT_EQ(a.pass, b.pass);
  std::vector<long> da, db;
  for (const auto& v : a.vertices) da.push_back(std::abs(v.determinant));
  for (const auto& v : b.vertices) db.push_back(std::abs(v.determinant));
  std::sort(da.begin(), da.end());
  std::sort(db.begin(), db.end());
  EXPECT_EQ(da, db);
}

TEST(EdgeValues, HandEvaluations) {
  const Polytope sq = parse_polytope(kSquare), sx = parse_polytope(kSimplex);
  for (double l : edge_values(sq, {0.5, 0.5})) EXPECT_DOUBLE_EQ(l, 0.5);
  const auto s = edge_values(sx, {0.25, 0.25});
  EXPECT_DOUBLE_EQ(s[0], 0.25);
  EXPECT_DOUBLE_EQ(s[1], 0.25);
  EXPECT_DOUBLE_EQ(s[2], 0.5);
  EXPECT_DOUBLE_EQ(edge_values(sq, {0.0, 0.5})[0], 0.0);
  EXPECT_FALSE(sq.contains({0.0, 0.5}));
  EXPECT_TRUE(sq.contains({0.5, 0.5}));
}

TEST(EdgeValues, AffineProperty) {
  const Polytope p = parse_polytope(kSimplex);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec2 a{u(rng), u(rng)}, b{u(rng), u(rng)};
    const double t = 0.5 * (u(rng) + 2.0) / 2.0;
    const auto la = edge_values(p, a), lb = edge_values(p, b), lt = edge_values(p, t * a + (1 - t) * b);
    for (std::size_t i = 0; i < la.size(); ++i) EXPECT_NEAR(lt[i], t * la[i] + (1 - t) * lb[i], 1e-14);
  }
}

TEST(Guillemin, SquareCenter) {
  const Jet4 j = guillemin_jet(parse_polytope(kSquare), {0.5, 0.5});
  EXPECT_NEAR(j.value(), -1.3862943611198906, 1e-14);
  EXPECT_NEAR(j.d(0, 0), 4.0, 1e-13);
  EXPECT_NEAR(j.d(1, 1), 4.0, 1e-13);
  EXPECT_NEAR(j.d(0, 1), 0.0, 1e-13);
  EXPECT_NEAR(j.d(0, 0, 0), 0.0, 1e-12);
  EXPECT_NEAR(j.d(0), 0.0, 1e-14);
}

TEST(Guillemin, SimplexCentroidHessian) {
  const Jet4 j = guillemin_jet(parse_polytope(kSimplex), {1.0 / 3, 1.0 / 3});
  EXPECT_NEAR(j.d(0, 0), 6.0, 1e-12);
  EXPECT_NEAR(j.d(0, 1), 3.0, 1e-12);
  EXPECT_NEAR(j.d(1, 1), 6.0, 1e-12);
}

TEST(Guillemin, OutsideThrows) {
  EXPECT_THROW(guillemin_jet(parse_polytope(kSquare), {0.0, 0.5}), DomainError);
  EXPECT_THROW(guillemin_jet(parse_polytope(kSquare), {1.5, 0.5}), DomainError);
}

TEST(GuilleminProperty, HessianPositiveDefinite) {
  const Polytope p = parse_polytope(kSimplex);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int tested = 0;
  while (tested < 200) {
    const Vec2 xi{u(rng), u(rng)};
    if (!p.contains(xi)) continue;
    ++tested;
    const Jet4 j = guillemin_jet(p, xi, 2);
    const Sym2 H{j.d(0, 0), j.d(0, 1), j.d(1, 1)};
    EXPECT_GT(H.min_eigenvalue(), 0.0);
  }
}

TEST(GuilleminProperty, DerivativesMatchCentralDifferences) {
  // central difference of ∂^α v has error (h²/6)·∂³_e ∂^α v + O(h⁴) along direction e
  const Polytope p = parse_polytope(kSimplex);
  const std::pair<int, int> orders[] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}};
  for (Vec2 xi : {Vec2{0.3, 0.3}, Vec2{0.2, 0.5}, Vec2{0.45, 0.15}}) {
    const Jet4 j = guillemin_jet(p, xi);
    for (auto [a, b] : orders)
      for (int dir = 0; dir < 2; ++dir) {
        auto err = [&](double h) {
          const Vec2 e{dir == 0 ? h : 0.0, dir == 1 ? h : 0.0};
          const double fd = (guillemin_jet(p, xi + e).deriv(a, b) - guillemin_jet(p, xi - e).deriv(a, b)) / (2 * h);
          return fd - j.deriv(a + (dir == 0), b + (dir == 1));
        };
        const double e1 = err(1e-3), e2 = err(5e-4);
        EXPECT_NEAR(e1 / e2, 4.0, 0.05) << a << "," << b << " dir " << dir;
        if (a + b == 0) {
          const double lead = 1e-6 / 6.0 * j.deriv(a + 3 * (dir == 0), b + 3 * (dir == 1));
          EXPECT_NEAR(e1, lead, 1e-3 * std::abs(lead));
        }
      }
  }
}

TEST(BoundaryDistance, Examples) {
  const Polytope sq = parse_polytope(kSquare), sx = parse_polytope(kSimplex);
  EXPECT_DOUBLE_EQ(euclidean_boundary_distance(sq, {0.5, 0.5}), 0.5);
  EXPECT_DOUBLE_EQ(euclidean_boundary_distance(sq, {0.1, 0.3}), 0.1);
  EXPECT_NEAR(euclidean_boundary_distance(sx, {0.4, 0.4}), 0.2 / std::sqrt(2.0), 1e-15);
}

TEST(PolytopeGeometry, DiameterInradiusCentroid) {
  const Polytope sq = parse_polytope(kSquare), sx = parse_polytope(kSimplex);
  EXPECT_NEAR(sq.diameter(), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(sq.inradius(), 0.5, 1e-14);
  EXPECT_NEAR(sx.inradius(), 1.0 / (2.0 + std::sqrt(2.0)), 1e-14);
  EXPECT_NEAR(sx.centroid().x, 1.0 / 3, 1e-15);
  EXPECT_NEAR(sx.centroid().y, 1.0 / 3, 1e-15);
}

TEST(Normalize, OffsetDiskBecomesUnitDisk) {
  const ConvexPolygon disk = ConvexPolygon::regular({5.0, 5.0}, 3.0, 64);
  const NormalizedDomain n = normalize_domain(disk);
  const auto c = check_normalized(n.polygon);
  EXPECT_TRUE(c.pass);
  EXPECT_NEAR(c.outer_radius, 1.0, 1e-6);
  EXPECT_NEAR(std::abs(n.map.linear.det()), 1.0 / 9.0, 1e-6);
}

TEST(Normalize, SquareSatisfiesSandwich) {
  const auto n = normalize_domain(ConvexPolygon::from_polytope(parse_polytope(kSquare)));
  const auto c = check_normalized(n.polygon);
  EXPECT_TRUE(c.pass);
  EXPECT_GE(c.inner_radius, std::pow(2.0, -1.5));
  EXPECT_LE(c.outer_radius, 1.0 + 1e-9);
}

TEST(Normalize, Idempotent) {
  const auto once = normalize_domain(ConvexPolygon::from_polytope(parse_polytope(kSimplex)));
  ASSERT_TRUE(check_normalized(once.polygon).pass);
  const auto twice = normalize_domain(once.polygon);
  EXPECT_TRUE(check_normalized(twice.polygon).pass);
  const auto& a = once.polygon.vertices();
  const auto& b = twice.polygon.vertices();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    double best = 1e300;
    for (const auto& q : b) best = std::min(best, norm(a[k] - q));
    EXPECT_LT(best, 1e-6);
  }
}

TEST(NormalizeProperty, RandomPolygons) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> angles;
    for (int k = 0; k < 7; ++k) angles.push_back(2 * M_PI * u(rng));
    std::sort(angles.begin(), angles.end());
    std::vector<Vec2> pts;
    const double sx = 0.2 + 3 * u(rng), sy = 0.2 + 3 * u(rng), ox = 10 * u(rng), oy = -5 * u(rng);
    for (double a : angles) pts.push_back({ox + sx * std::cos(a), oy + sy * std::sin(a)});
    ConvexPolygon body(pts);
    const auto n = normalize_domain(body);
    EXPECT_TRUE(check_normalized(n.polygon).pass) << "trial " << trial;
    EXPECT_NE(n.map.linear.det(), 0.0);
  }
}

TEST(Normalize, DegenerateBodyRejected) {
  EXPECT_THROW(ConvexPolygon({{0, 0}, {1, 1}, {2, 2}}), GeometryError);
}
