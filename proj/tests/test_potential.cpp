#include <gtest/gtest.h>

#include <cmath>

#include "abreu/potential.hpp"

using namespace abreu;

namespace {

Polytope square() { return parse_polytope("1 0 0\n0 1 0\n-1 0 -1\n0 -1 -1\n"); }
Polytope big_square() { return parse_polytope("1 0 -1\n0 1 -1\n-1 0 -1\n0 -1 -1\n"); }

}  // namespace

TEST(HessianBundle, GuilleminSquareCentre) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  const HessBundle hb = hessian_bundle(Potential::guillemin_only(g));
  const std::size_t c = g->nearest({0.5, 0.5});
  EXPECT_NEAR(hb[c].hess.a11, 4.0, 1e-12);
  EXPECT_NEAR(hb[c].hess.a12, 0.0, 1e-12);
  EXPECT_NEAR(hb[c].hess.a22, 4.0, 1e-12);
  EXPECT_NEAR(hb[c].det, 16.0, 1e-11);
  EXPECT_NEAR(hb[c].inv.a11, 0.25, 1e-13);
  EXPECT_NEAR(hb[c].inv.a22, 0.25, 1e-13);
}

TEST(HessianBundle, QuadraticIsIdentity) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  const HessBundle hb = hessian_bundle(Potential::closed_form(g, Expr::parse("0.5*(xi1^2+xi2^2)")));
  for (std::size_t k = 0; k < g->size(); ++k) {
    if (g->band(k) < 2) continue;
    EXPECT_DOUBLE_EQ(hb[k].det, 1.0);
    EXPECT_DOUBLE_EQ(hb[k].hess.a12, 0.0);
  }
}

TEST(HessianBundle, InverseConsistency) {
  const GridPtr g = build_grid(square(), 1.0 / 32);
  const Potential u = Potential::guillemin_only(g).with_psi(
      sample([](Vec2 p) { return 0.1 * std::exp(p.x - p.y) * p.x * (1 - p.x); }, g));
  const HessBundle hb = hessian_bundle(u);
  for (std::size_t k = 0; k < g->size(); ++k) {
    if (g->band(k) < 2) continue;
    const Sym2& H = hb[k].hess;
    const Sym2& I = hb[k].inv;
    const double e11 = H.a11 * I.a11 + H.a12 * I.a12, e12 = H.a11 * I.a12 + H.a12 * I.a22;
    const double e22 = H.a12 * I.a12 + H.a22 * I.a22;
    EXPECT_NEAR(e11, 1.0, 1e-10);
    EXPECT_NEAR(e12, 0.0, 1e-10);
    EXPECT_NEAR(e22, 1.0, 1e-10);
    EXPECT_GT(hb[k].det, 0.0);
  }
}

TEST(HessianBundle, DegenerateHessianReported) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  const Potential v = Potential::guillemin_only(g);
  PotentialEval ev(v);
  ScalarField minus_v(g);
  for (std::size_t k = 0; k < g->size(); ++k) minus_v[k] = -ev.at(k, 0).value;
  try {
    hessian_bundle(v.with_psi(minus_v));
    FAIL() << "expected a convexity error";
  } catch (const ConvexityError& e) {
    EXPECT_NE(std::string(e.what()).find("node"), std::string::npos);
  }
}

TEST(PotentialEval, BandGuards) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  const Potential v = Potential::guillemin_only(g);
  PotentialEval ev(v);
  const std::size_t edge_node = g->nearest({1.0 / 16, 0.5});
  ASSERT_EQ(g->band(edge_node), 1);
  EXPECT_NO_THROW(ev.at(edge_node, 0));
  EXPECT_THROW(ev.at(edge_node, 1), BandError);
  const std::size_t b2 = g->nearest({2.0 / 16, 0.5});
  EXPECT_NO_THROW(ev.at(b2, 2));
  EXPECT_THROW(ev.at(b2, 3), BandError);
}

TEST(PotentialEval, ClosedFormMatchesAnalytic) {
  const GridPtr g = build_grid(big_square(), 1.0 / 16);
  const Potential u = Potential::closed_form(g, Expr::parse("exp(xi1+2*xi2)"));
  PotentialEval ev(u);
  const std::size_t k = g->nearest({0.25, -0.5});
  const NodeDerivs d = ev.at(k, 4);
  const double e = std::exp(0.25 - 1.0);
  EXPECT_NEAR(d.value, e, 1e-15);
  EXPECT_NEAR(d.grad.y, 2 * e, 1e-14);
  EXPECT_NEAR(d.hess.a12, 2 * e, 1e-14);
  EXPECT_NEAR(d.d3(0, 1, 1), 4 * e, 1e-14);
  EXPECT_NEAR(d.d4(1, 1, 1, 1), 16 * e, 1e-13);
}

TEST(PotentialEval, SmoothPartUsesSecondOrderDifferences) {
  auto err = [](double h) {
    const GridPtr g = build_grid(parse_polytope("1 0 0\n0 1 0\n-1 0 -1\n0 -1 -1\n"), h);
    const Potential u = Potential::guillemin_only(g).with_psi(sample([](Vec2 p) { return std::exp(p.x * p.y); }, g));
    PotentialEval ev(u);
    const std::size_t k = g->nearest({0.5, 0.5});
    return std::abs(ev.at(k, 2).hess.a12 - ev.analytic_hessian(k).a12 - std::exp(0.25) * (1 + 0.25));
  };
  EXPECT_NEAR(err(1.0 / 16) / err(1.0 / 32), 4.0, 0.1);
}

TEST(Legendre, QuadraticIsSelfDual) {
  const GridPtr g = build_grid(big_square(), 1.0 / 8);
  const Potential u = Potential::closed_form(g, Expr::parse("0.5*(xi1^2+xi2^2)"));
  for (std::size_t k = 0; k < g->size(); ++k) {
    if (g->band(k) < 2) continue;
    const Vec2 p = g->point(k);
    const LegendrePoint lp = legendre_map(u, k);
    EXPECT_DOUBLE_EQ(lp.x.x, p.x);
    EXPECT_DOUBLE_EQ(lp.x.y, p.y);
    EXPECT_NEAR(lp.f, 0.5 * dot(p, p), 1e-15);
  }
}

TEST(Legendre, GuilleminSquareCentre) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  const LegendrePoint lp = legendre_map(Potential::guillemin_only(g), g->nearest({0.5, 0.5}));
  EXPECT_NEAR(lp.x.x, 0.0, 1e-14);
  EXPECT_NEAR(lp.x.y, 0.0, 1e-14);
  EXPECT_NEAR(lp.f, 2 * std::log(2.0), 1e-14);
}

TEST(LegendreProperty, RoundtripIsSecondOrder) {
  const Expr e = Expr::parse("0.5*(xi1^2+xi2^2) + 0.2*exp(xi1-0.5*xi2)");
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const GridPtr g = build_grid(big_square(), h);
    const RoundtripResult r = legendre_roundtrip(Potential::closed_form(g, e));
    EXPECT_LE(r.max_error, 10 * h * h) << "h=" << h;
    EXPECT_GT(r.max_error, 0.0);
  }
}

TEST(LegendreProperty, RoundtripConvergesAtSecondOrder) {
  const Expr e = Expr::parse("exp(xi1)+exp(xi2)+0.25*xi1*xi2");
  auto err = [&](double h) {
    return legendre_roundtrip(Potential::closed_form(build_grid(square(), h), e)).max_error;
  };
  EXPECT_NEAR(err(1.0 / 64) / err(1.0 / 128), 4.0, 0.5);
}

TEST(Legendre, QuadraticRoundtripIsExact) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  EXPECT_LE(legendre_roundtrip(Potential::closed_form(g, Expr::parse("0.5*(xi1^2+xi2^2)"))).max_error, 1e-12);
  EXPECT_THROW(legendre_roundtrip(Potential::closed_form(g, Expr::parse("0.5*(xi1^2+xi2^2)")), 2), BandError);
}

TEST(LegendreProperty, DualGradientInvertsGradientMap) {
  const GridPtr g = build_grid(big_square(), 1.0 / 32);
  const Potential u = Potential::closed_form(g, Expr::parse("0.5*(xi1^2+xi2^2) + 0.2*exp(xi1-0.5*xi2)"));
  const auto dg = dual_gradient(u);
  for (std::size_t k = 0; k < g->size(); ++k) {
    if (g->band(k) < 3) continue;
    EXPECT_NEAR(dg[k].x, g->point(k).x, 5e-3);
    EXPECT_NEAR(dg[k].y, g->point(k).y, 5e-3);
  }
}

TEST(PotentialOps, ScaledAndWithPsi) {
  const GridPtr g = build_grid(square(), 1.0 / 16);
  const Potential v = Potential::guillemin_only(g);
  EXPECT_TRUE(v.psi_is_zero());
  const Potential w = v.scaled(2.0);
  const std::size_t c = g->nearest({0.5, 0.5});
  EXPECT_NEAR(PotentialEval(w).at(c, 2).hess.a11, 8.0, 1e-12);
  const GridPtr other = build_grid(square(), 1.0 / 8);
  EXPECT_THROW(v.with_psi(ScalarField(other)), GeometryError);
}
