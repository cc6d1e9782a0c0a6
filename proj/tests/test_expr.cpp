#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "abreu/expr.hpp"

using namespace abreu;

TEST(ExprParse, ConstantFolds) {
  const Expr e = Expr::parse("1");
  ASSERT_TRUE(e.constant().has_value());
  EXPECT_EQ(*e.constant(), 1.0);
  EXPECT_EQ(e.value({0.3, 0.7}), 1.0);
}

TEST(ExprParse, ProductTree) {
  const Expr e = Expr::parse("xi1*(1-xi1)");
  EXPECT_FALSE(e.constant().has_value());
  EXPECT_DOUBLE_EQ(e.value({0.25, 9.0}), 0.1875);
}

TEST(ExprParse, UnclosedParenReportsOffset) {
  try {
    Expr::parse("log(xi1");
    FAIL() << "expected a parse error";
  } catch (const ParseError& err) {
    EXPECT_EQ(err.position(), 8u);
  }
}

TEST(ExprParse, RejectsUnknownIdentifierAndFractionalPower) {
  EXPECT_THROW(Expr::parse("sin(xi1)"), ParseError);
  EXPECT_THROW(Expr::parse("xi3"), ParseError);
  EXPECT_THROW(Expr::parse("xi1^0.5"), ParseError);
  EXPECT_THROW(Expr::parse(""), ParseError);
  EXPECT_THROW(Expr::parse("1 +"), ParseError);
}

TEST(ExprParse, PrecedenceAndUnaryMinus) {
  EXPECT_DOUBLE_EQ(Expr::parse("2+3*4").value({}), 14.0);
  EXPECT_DOUBLE_EQ(Expr::parse("-2^2").value({}), -4.0);
  EXPECT_DOUBLE_EQ(Expr::parse("(1+xi2)^3").value({0.0, 1.0}), 8.0);
  EXPECT_DOUBLE_EQ(Expr::parse("8/2/2").value({}), 2.0);
  EXPECT_DOUBLE_EQ(Expr::parse("1e-2*100").value({}), 1.0);
}

TEST(ExprJet, Polynomial) {
  const Jet3 j = eval_jet(Expr::parse("xi1^2"), {3.0, 0.0});
  EXPECT_DOUBLE_EQ(j.value(), 9.0);
  EXPECT_DOUBLE_EQ(j.d(0), 6.0);
  EXPECT_DOUBLE_EQ(j.d(1), 0.0);
  EXPECT_DOUBLE_EQ(j.d(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(j.d(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(j.d(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(j.d(0, 0, 0), 0.0);
}

TEST(ExprJet, ExponentialHasUnitDerivatives) {
  const Jet3 j = eval_jet(Expr::parse("exp(xi1+xi2)"), {0.0, 0.0});
  for (int a = 0; a <= 3; ++a)
    for (int b = 0; a + b <= 3; ++b) EXPECT_NEAR(j.deriv(a, b), 1.0, 1e-15) << a << "," << b;
}

TEST(ExprJet, LogarithmHandDerivatives) {
  const Jet3 j = eval_jet(Expr::parse("log(xi1)"), {2.0, 1.0});
  EXPECT_NEAR(j.value(), 0.693147180559945, 1e-14);
  EXPECT_DOUBLE_EQ(j.d(0), 0.5);
  EXPECT_DOUBLE_EQ(j.d(0, 0), -0.25);
  EXPECT_DOUBLE_EQ(j.d(0, 0, 0), 0.25);
  EXPECT_DOUBLE_EQ(j.d(1), 0.0);
}

TEST(ExprJet, OrderTruncation) {
  const Jet3 j = eval_jet(Expr::parse("xi1^3"), {1.0, 0.0}, 1);
  EXPECT_DOUBLE_EQ(j.d(0), 3.0);
  EXPECT_DOUBLE_EQ(j.d(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(j.d(0, 0, 0), 0.0);
}

TEST(ExprDomain, LogAndDivisionFailures) {
  EXPECT_THROW(Expr::parse("log(xi1-2)").value({1.0, 1.0}), DomainError);
  EXPECT_THROW(Expr::parse("1/(xi1-xi2)").value({0.5, 0.5}), DomainError);
  EXPECT_THROW(Expr::parse("xi1^-1").value({0.0, 0.5}), DomainError);
  try {
    Expr::parse("1 + log(xi1 - 2)").value({1.0, 0.0});
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("log(xi1 - 2)"), std::string::npos);
  }
}

namespace {

std::string random_polynomial(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  std::string s = "0";
  for (int a = 0; a <= 4; ++a)
    for (int b = 0; a + b <= 4; ++b) {
      char buf[96];
      std::snprintf(buf, sizeof buf, " + (%.6f)*xi1^%d*xi2^%d", c(rng), a, b);
      s += buf;
    }
  return s;
}

}  // namespace

TEST(ExprProperty, PolynomialDerivativesMatchCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pt(-1.0, 1.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const Expr e = Expr::parse(random_polynomial(rng));
    const Vec2 p{pt(rng), pt(rng)};
    const Jet3 j = eval_jet(e, p);
    const Vec2 dx{h, 0.0}, dy{0.0, h};
    const double fd1 = (e.value(p + dx) - e.value(p - dx)) / (2 * h);
    const double fd2 = (e.value(p + dy) - e.value(p - dy)) / (2 * h);
    const double fd12 = (eval_jet(e, p + dy).d(0) - eval_jet(e, p - dy).d(0)) / (2 * h);
    const double fd11 = (eval_jet(e, p + dx).d(0) - eval_jet(e, p - dx).d(0)) / (2 * h);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    EXPECT_LT(rel(fd1, j.d(0)), 1e-6);
    EXPECT_LT(rel(fd2, j.d(1)), 1e-6);
    EXPECT_LT(rel(fd11, j.d(0, 0)), 1e-6);
    EXPECT_LT(rel(fd12, j.d(0, 1)), 1e-6);
  }
}

TEST(ExprProperty, JetIsLinear) {
  std::mt19937_64 rng(5);
  const std::string e1 = random_polynomial(rng), e2 = "exp(xi1)*log(2+xi2)";
  const double a = 1.75;
  const Expr sum = Expr::parse("1.75*(" + e1 + ") + " + e2);
  const Vec2 p{0.3, -0.4};
  const Jet3 js = eval_jet(sum, p), j1 = eval_jet(Expr::parse(e1), p), j2 = eval_jet(Expr::parse(e2), p);
  for (int x = 0; x <= 3; ++x)
    for (int y = 0; x + y <= 3; ++y)
      EXPECT_NEAR(js.deriv(x, y), a * j1.deriv(x, y) + j2.deriv(x, y), 1e-12 * (1 + std::abs(js.deriv(x, y))));
}

TEST(ExprProperty, TensorAccessIsSymmetric) {
  const Jet3 j = eval_jet(Expr::parse("exp(xi1*xi2)*(xi1-3*xi2)^2"), {0.4, 0.9});
  EXPECT_EQ(j.d(0, 1), j.d(1, 0));
  EXPECT_EQ(j.d(0, 0, 1), j.d(0, 1, 0));
  EXPECT_EQ(j.d(0, 0, 1), j.d(1, 0, 0));
  EXPECT_EQ(j.d(1, 1, 0), j.d(0, 1, 1));
}
