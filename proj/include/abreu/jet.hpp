#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace abreu {

/// Truncated bivariate Taylor polynomial of order N around a point.
///
/// Stores c(a, b) = (1 / a! b!) ∂^{a+b} f / ∂ξ₁^a ∂ξ₂^b for a + b ≤ N, so
/// arithmetic is polynomial arithmetic modulo degree N+1. Every derivative
/// tensor is read from the single coefficient of its multi-index, which makes
/// the tensors symmetric by construction.
template <int N>
class Jet {
  static_assert(N >= 0 && N <= 6);

 public:
  static constexpr int order = N;
  static constexpr std::size_t size = static_cast<std::size_t>((N + 1) * (N + 2) / 2);

  constexpr Jet() = default;
  constexpr explicit Jet(double value) { c_[0] = value; }

  static constexpr Jet constant(double value) { return Jet(value); }
  /// The coordinate function ξ_{var+1} expanded around `value`.
  static constexpr Jet variable(double value, int var) {
    Jet j(value);
    if constexpr (N >= 1) j.coeff(var == 0 ? 1 : 0, var == 0 ? 0 : 1) = 1.0;
    return j;
  }

  static constexpr std::size_t index(int a, int b) {
    const int k = a + b;
    return static_cast<std::size_t>(k * (k + 1) / 2 + b);
  }

  constexpr double coeff(int a, int b) const { return c_[index(a, b)]; }
  constexpr double& coeff(int a, int b) { return c_[index(a, b)]; }

  constexpr double value() const { return c_[0]; }

  /// ∂^{a+b} f / ∂ξ₁^a ∂ξ₂^b
  constexpr double deriv(int a, int b) const {
    return coeff(a, b) * factorial(a) * factorial(b);
  }
  // Tensor access with indices in {0, 1}.
  constexpr double d(int i) const { return deriv(i == 0, i == 1); }
  constexpr double d(int i, int j) const { return from_indices({i, j}, 2); }
  constexpr double d(int i, int j, int k) const { return from_indices({i, j, k}, 3); }
  constexpr double d(int i, int j, int k, int l) const { return from_indices({i, j, k, l}, 4); }

  constexpr const std::array<double, size>& coefficients() const { return c_; }

  constexpr Jet& operator+=(const Jet& o) {
    for (std::size_t i = 0; i < size; ++i) c_[i] += o.c_[i];
    return *this;
  }
  constexpr Jet& operator-=(const Jet& o) {
    for (std::size_t i = 0; i < size; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  constexpr Jet& operator*=(double s) {
    for (auto& v : c_) v *= s;
    return *this;
  }

  friend constexpr Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend constexpr Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend constexpr Jet operator-(Jet a) { return a *= -1.0; }
  friend constexpr Jet operator*(Jet a, double s) { return a *= s; }
  friend constexpr Jet operator*(double s, Jet a) { return a *= s; }
  friend constexpr Jet operator*(const Jet& f, const Jet& g) {
    Jet r;
    for (int a = 0; a <= N; ++a)
      for (int b = 0; a + b <= N; ++b) {
        double s = 0.0;
        for (int i = 0; i <= a; ++i)
          for (int j = 0; j <= b; ++j) s += f.coeff(i, j) * g.coeff(a - i, b - j);
        r.coeff(a, b) = s;
      }
    return r;
  }

  /// g ∘ f given the derivatives g^{(k)}(f.value()) for k = 0..N.
  constexpr Jet compose(const std::array<double, N + 1>& g_derivs) const {
    Jet delta = *this;
    delta.c_[0] = 0.0;
    Jet result(g_derivs[0]);
    Jet power(1.0);
    double inv_fact = 1.0;
    for (int k = 1; k <= N; ++k) {
      power = power * delta;
      inv_fact /= k;
      Jet term = power;
      term *= g_derivs[k] * inv_fact;
      result += term;
    }
    return result;
  }

 private:
  static constexpr double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
  }
  constexpr double from_indices(std::array<int, 4> idx, int count) const {
    int a = 0;
    for (int t = 0; t < count; ++t) a += idx[t] == 0;
    return deriv(a, count - a);
  }

  std::array<double, size> c_{};
};

template <int N>
Jet<N> reciprocal(const Jet<N>& f) {
  std::array<double, N + 1> g{};
  const double x = f.value();
  double p = 1.0 / x;
  for (int k = 0; k <= N; ++k) {
    // d^k/dx^k (1/x) = (-1)^k k! / x^{k+1}
    double fact = 1.0;
    for (int i = 2; i <= k; ++i) fact *= i;
    g[k] = ((k % 2) ? -1.0 : 1.0) * fact * p;
    p /= x;
  }
  return f.compose(g);
}

template <int N>
Jet<N> operator/(const Jet<N>& f, const Jet<N>& g) {
  return f * reciprocal(g);
}

template <int N>
Jet<N> exp(const Jet<N>& f) {
  std::array<double, N + 1> g{};
  g.fill(std::exp(f.value()));
  return f.compose(g);
}

template <int N>
Jet<N> log(const Jet<N>& f) {
  std::array<double, N + 1> g{};
  const double x = f.value();
  g[0] = std::log(x);
  double fact = 1.0;  // (k-1)!
  double p = 1.0 / x;
  for (int k = 1; k <= N; ++k) {
    g[k] = ((k % 2) ? 1.0 : -1.0) * fact * p;
    fact *= k;
    p /= x;
  }
  return f.compose(g);
}

/// Integer power by repeated squaring; negative exponents go through the reciprocal.
template <int N>
Jet<N> pow(const Jet<N>& f, int n) {
  if (n < 0) return pow(reciprocal(f), -n);
  Jet<N> result(1.0);
  Jet<N> base = f;
  while (n > 0) {
    if (n & 1) result = result * base;
    base = base * base;
    n >>= 1;
  }
  return result;
}

using Jet3 = Jet<3>;
using Jet4 = Jet<4>;

}  // namespace abreu
