#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "abreu/geodesic.hpp"

using namespace abreu;

namespace {

Polytope square() { return parse_polytope("1 0 0\n0 1 0\n-1 0 -1\n0 -1 -1\n"); }
Polytope simplex() { return parse_polytope("1 0 0\n0 1 0\n-1 -1 -1\n"); }

Potential quadratic(const GridPtr& g, double c = 0.5) {
  return Potential::closed_form(g, Expr::parse(std::to_string(c) + "*(xi1^2+xi2^2)"));
}

double guillemin_gap(Vec2 p) {
  auto G = [](double t) { return t * std::log(t) + (1 - t) * std::log(1 - t) + std::log(2.0); };
  return G(p.x) + G(p.y);
}

}  // namespace

TEST(Geodesic, QuadraticMatchesEuclidean) {
  for (const Polytope& poly : {square(), simplex()}) {
    const double h = 1.0 / 32;
    const GridPtr g = build_grid(poly, h);
    const ScalarField d = geodesic_distance_field(quadratic(g), GeodesicTarget::boundary());
    for (std::size_t k = 0; k < g->size(); ++k)
      EXPECT_NEAR(d[k], euclidean_boundary_distance(poly, g->point(k)), 2 * h);
  }
}

TEST(Geodesic, HomothetyScalesBySqrtTwo) {
  const GridPtr g = build_grid(square(), 1.0 / 32);
  const ScalarField a = geodesic_distance_field(quadratic(g, 0.5), GeodesicTarget::boundary());
  const ScalarField b = geodesic_distance_field(quadratic(g, 1.0), GeodesicTarget::boundary());
  for (std::size_t k = 0; k < g->size(); ++k) EXPECT_NEAR(b[k], std::sqrt(2.0) * a[k], 1e-12 * (1 + a[k]));
}

TEST(Geodesic, GuilleminCentreToBoundaryQuadrature) {
  // ∫₀^{1/2} dt / √(t(1−t)) = π/2
  const GridPtr g = build_grid(square(), 1.0 / 64);
  const ScalarField d = geodesic_distance_field(Potential::guillemin_only(g), GeodesicTarget::boundary());
  EXPECT_NEAR(d[g->nearest({0.5, 0.5})], std::numbers::pi / 2, 0.05 * std::numbers::pi / 2);
}

TEST(Geodesic, EdgeTargetDominatesBoundary) {
  const GridPtr g = build_grid(square(), 1.0 / 32);
  const Potential v = Potential::guillemin_only(g);
  const ScalarField all = geodesic_distance_field(v, GeodesicTarget::boundary());
  for (std::size_t e = 0; e < 4; ++e) {
    const ScalarField one = geodesic_distance_field(v, GeodesicTarget::on_edge(e));
    for (std::size_t k = 0; k < g->size(); ++k) EXPECT_GE(one[k], all[k] - 1e-12);
  }
  EXPECT_THROW(geodesic_distance_field(v, GeodesicTarget::on_edge(7)), GeometryError);
}

TEST(GeodesicProperty, TriangleInequality) {
  const GridPtr g = build_grid(simplex(), 1.0 / 32);
  const Potential v = Potential::guillemin_only(g);
  const std::size_t a = g->nearest({0.2, 0.2}), b = g->nearest({0.5, 0.25}), c = g->nearest({0.15, 0.6});
  const ScalarField da = geodesic_distance_field(v, GeodesicTarget::at({a}));
  const ScalarField db = geodesic_distance_field(v, GeodesicTarget::at({b}));
  EXPECT_LE(da[c], da[b] + db[c] + 1e-12);
  EXPECT_NEAR(da[b], db[a], 1e-12);
  EXPECT_EQ(da[a], 0.0);
}

TEST(GeodesicProperty, MonotoneInThePotential) {
  const GridPtr g = build_grid(square(), 1.0 / 32);
  const Potential v = Potential::guillemin_only(g);
  Potential w = v;
  w.analytic = Expr::parse("0.7*(xi1^2+xi2^2) + 0.2*xi1*xi2");
  const ScalarField dv = geodesic_distance_field(v, GeodesicTarget::boundary());
  const ScalarField dw = geodesic_distance_field(w, GeodesicTarget::boundary());
  for (std::size_t k = 0; k < g->size(); ++k) EXPECT_GE(dw[k], dv[k] - 1e-12);
}

TEST(Geodesic, SeedOffsetsMismatch) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  EXPECT_THROW(geodesic_distance_field(Potential::guillemin_only(g), GeodesicTarget::at({0, 1}, {0.0})),
               GeometryError);
  EXPECT_THROW(geodesic_distance_field(Potential::guillemin_only(g), GeodesicTarget::at({})), GeometryError);
}

TEST(Section, QuadraticIsDisk) {
  const double h = 1.0 / 64, r = 0.25;
  const GridPtr g = build_grid(square(), h);
  const Section s = section(quadratic(g), g->nearest({0.5, 0.5}), r * r / 2);
  EXPECT_NEAR(s.diameter, 2 * r, 2 * h);
  EXPECT_TRUE(s.compact);
}

TEST(Section, ZeroHeightIsPoint) {
  const GridPtr g = build_grid(square(), 1.0 / 32);
  const std::size_t p = g->nearest({0.25, 0.5});
  const Section s = section(Potential::guillemin_only(g), p, 0.0);
  ASSERT_EQ(s.nodes.size(), 1u);
  EXPECT_EQ(s.nodes[0], p);
  EXPECT_EQ(s.diameter, 0.0);
}

TEST(Section, GuilleminLevelSetByBisection) {
  const double h = 1.0 / 64, sigma = 0.05;
  const GridPtr g = build_grid(square(), h);
  const Section s = section(Potential::guillemin_only(g), g->nearest({0.5, 0.5}), sigma);
  std::vector<Vec2> rim;
  for (int a = 0; a < 720; ++a) {
    const double th = 2 * std::numbers::pi * a / 720;
    const Vec2 dir{std::cos(th), std::sin(th)};
    double lo = 0.0, hi = 0.49;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (guillemin_gap(Vec2{0.5, 0.5} + mid * dir) <= sigma ? lo : hi) = mid;
    }
    rim.push_back(Vec2{0.5, 0.5} + lo * dir);
  }
  EXPECT_NEAR(s.diameter, detail::diameter(rim), 2 * h);
}

TEST(Section, ReachingTheBoundaryIsNotCompact) {
  const GridPtr g = build_grid(square(), 1.0 / 32);
  const Section s = section(Potential::guillemin_only(g), g->nearest({0.5, 0.5}), 10.0);
  EXPECT_FALSE(s.compact);
}
