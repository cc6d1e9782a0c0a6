#pragma once

#include <array>
#include <cmath>

namespace abreu {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : y; }
  constexpr double& operator[](int i) { return i == 0 ? x : y; }

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Symmetric 2x2 matrix [[a11, a12], [a12, a22]].
struct Sym2 {
  double a11 = 0.0;
  double a12 = 0.0;
  double a22 = 0.0;

  constexpr double operator()(int i, int j) const {
    if (i == 0 && j == 0) return a11;
    if (i == 1 && j == 1) return a22;
    return a12;
  }
  constexpr double det() const { return a11 * a22 - a12 * a12; }
  constexpr double trace() const { return a11 + a22; }
  constexpr Sym2 inverse() const {
    const double d = det();
    return {a22 / d, -a12 / d, a11 / d};
  }
  double min_eigenvalue() const {
    const double m = 0.5 * (a11 + a22);
    const double r = std::hypot(0.5 * (a11 - a22), a12);
    return m - r;
  }
  double max_eigenvalue() const {
    const double m = 0.5 * (a11 + a22);
    const double r = std::hypot(0.5 * (a11 - a22), a12);
    return m + r;
  }
  constexpr Vec2 operator*(Vec2 v) const { return {a11 * v.x + a12 * v.y, a12 * v.x + a22 * v.y}; }
  constexpr double quad(Vec2 v) const { return v.x * (a11 * v.x + a12 * v.y) + v.y * (a12 * v.x + a22 * v.y); }

  friend constexpr Sym2 operator+(Sym2 a, Sym2 b) { return {a.a11 + b.a11, a.a12 + b.a12, a.a22 + b.a22}; }
  friend constexpr Sym2 operator-(Sym2 a, Sym2 b) { return {a.a11 - b.a11, a.a12 - b.a12, a.a22 - b.a22}; }
  friend constexpr Sym2 operator*(double s, Sym2 a) { return {s * a.a11, s * a.a12, s * a.a22}; }
};

/// General 2x2 matrix, row-major.
struct Mat2 {
  std::array<double, 4> m{};

  constexpr double operator()(int i, int j) const { return m[2 * i + j]; }
  constexpr double& operator()(int i, int j) { return m[2 * i + j]; }
  constexpr double det() const { return m[0] * m[3] - m[1] * m[2]; }
  constexpr Mat2 inverse() const {
    const double d = det();
    return {{m[3] / d, -m[1] / d, -m[2] / d, m[0] / d}};
  }
  constexpr Vec2 operator*(Vec2 v) const { return {m[0] * v.x + m[1] * v.y, m[2] * v.x + m[3] * v.y}; }
  friend constexpr Mat2 operator*(const Mat2& a, const Mat2& b) {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j);
    return r;
  }
  static constexpr Mat2 identity() { return {{1.0, 0.0, 0.0, 1.0}}; }
};

/// Affine map y = linear * x + offset.
struct AffineMap2 {
  Mat2 linear = Mat2::identity();
  Vec2 offset{};

  constexpr Vec2 operator()(Vec2 p) const { return linear * p + offset; }
  constexpr AffineMap2 inverse() const {
    const Mat2 li = linear.inverse();
    return {li, -1.0 * (li * offset)};
  }
  /// (this ∘ other)(p) = this(other(p))
  constexpr AffineMap2 compose(const AffineMap2& other) const {
    return {linear * other.linear, linear * other.offset + offset};
  }
};

}  // namespace abreu
