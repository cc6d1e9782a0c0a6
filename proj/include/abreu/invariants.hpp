#pragma once

// Affine invariants Φ, J, Θ of a symplectic potential and the Ricci curvature
// of the associated Calabi metric.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "abreu/grid.hpp"
#include "abreu/parallel.hpp"
#include "abreu/potential.hpp"

namespace abreu {

namespace detail {

using T2 = std::array<std::array<double, 2>, 2>;
using T3 = std::array<T2, 2>;
using T4 = std::array<T3, 2>;

inline T2 to_t2(const Sym2& s) { return {{{s.a11, s.a12}, {s.a12, s.a22}}}; }

inline T3 third_tensor(const NodeDerivs& d) {
  T3 t{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) t[i][j][k] = d.d3(i, j, k);
  return t;
}

inline T4 fourth_tensor(const NodeDerivs& d) {
  T4 t{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) t[i][j][k][l] = d.d4(i, j, k, l);
  return t;
}

/// ∂_k log det ∂²u = u^{ij} u_{ijk}.
inline std::array<double, 2> grad_logdet(const T2& inv, const T3& t) {
  std::array<double, 2> g{};
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) g[k] += inv[i][j] * t[i][j][k];
  return g;
}

/// M_il = ∂_ξi (u^{lk} ∂_k log det ∂²u), from derivatives of u up to order four.
inline T2 ricci_core(const T2& inv, const T3& t, const T4& q) {
  const auto dL = grad_logdet(inv, t);
  T3 dinv{};  // ∂_i u^{lk}
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < 2; ++l)
      for (int k = 0; k < 2; ++k)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) dinv[i][l][k] -= inv[l][a] * t[a][b][i] * inv[b][k];
  T2 ddL{};  // ∂_i ∂_k log det
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) ddL[i][k] += inv[a][b] * q[a][b][k][i] + dinv[i][a][b] * t[a][b][k];
  T2 m{};
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < 2; ++l)
      for (int k = 0; k < 2; ++k) m[i][l] += dinv[i][l][k] * dL[k] + inv[l][k] * ddL[i][k];
  return m;
}

}  // namespace detail

/// Φ = (1/16) u^{ij} ∂_i log det ∂²u ∂_j log det ∂²u, on band ≥ 3.
inline ScalarField invariant_phi(const Potential& u) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  ScalarField out(u.grid, 3);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) < 3) return;
    const NodeDerivs d = ev.at(k, 3);
    const auto inv = detail::to_t2(d.hess.inverse());
    const auto dL = detail::grad_logdet(inv, detail::third_tensor(d));
    double s = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) s += inv[i][j] * dL[i] * dL[j];
    out[k] = s / 16.0;
  });
  return out;
}

/// J = (1/8) u^{il} u^{jm} u^{kn} u_{ijk} u_{lmn}, on band ≥ 3.
inline ScalarField invariant_j(const Potential& u) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  ScalarField out(u.grid, 3);
  parallel_for(g.size(), [&](std::size_t k) {
    if (g.band(k) < 3) return;
    const NodeDerivs d = ev.at(k, 3);
    const auto inv = detail::to_t2(d.hess.inverse());
    const auto t = detail::third_tensor(d);
    // raise all three indices, then contract with t
    detail::T3 up{};
    for (int l = 0; l < 2; ++l)
      for (int m = 0; m < 2; ++m)
        for (int n = 0; n < 2; ++n)
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              for (int c = 0; c < 2; ++c) up[l][m][n] += inv[l][i] * inv[m][j] * inv[n][c] * t[i][j][c];
    double s = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int c = 0; c < 2; ++c) s += up[i][j][c] * t[i][j][c];
    out[k] = s / 8.0;
  });
  return out;
}

inline ScalarField invariant_theta(const ScalarField& phi, const ScalarField& j) {
  ScalarField out(phi.grid, std::max(phi.min_band, j.min_band));
  for (std::size_t k = 0; k < out.size(); ++k)
    if (out.defined(k)) out[k] = j[k] + phi[k];
  return out;
}

inline ScalarField invariant_theta(const Potential& u) { return invariant_theta(invariant_phi(u), invariant_j(u)); }

struct InvariantField {
  ScalarField phi, j, theta;
  ScalarField ric_norm;        // ‖Ric‖ in the Calabi metric, band ≥ 3
  ScalarField scalar;          // scalar curvature, band ≥ 3
  ScalarField nabla_ric;       // ‖∇Ric‖, band ≥ 4 (full mode only)
  ScalarField nabla2_ric;      // ‖∇²Ric‖, band ≥ 5 (full mode only)
  ScalarField kappa;           // 𝒦 (partial: ‖Ric‖ only)
  bool kappa_full = false;
  std::string warning;
};

struct RicciOptions {
  bool full = false;
  double max_h_full = 1.0 / 128.0;
};

namespace detail {

/// Norm of a covariant tensor with `rank` indices (flattened, index bits
/// most-significant first) using the inverse metric `inv`.
inline double tensor_norm(const std::vector<double>& t, int rank, const T2& inv) {
  const int n = 1 << rank;
  double s = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double w = 1.0;
      for (int r = 0; r < rank; ++r) w *= inv[(a >> r) & 1][(b >> r) & 1];
      s += w * t[static_cast<std::size_t>(a)] * t[static_cast<std::size_t>(b)];
    }
  return std::sqrt(std::max(s, 0.0));
}

/// Covariant derivative of a rank-r tensor field given its componentwise
/// ξ-derivatives: result index layout (c, original indices).
inline std::vector<double> covariant(const std::vector<double>& tensor, const std::vector<double>& partial, int rank,
                                     const T3& gamma) {
  const int n = 1 << rank;
  std::vector<double> out(static_cast<std::size_t>(2 * n));
  for (int c = 0; c < 2; ++c)
    for (int a = 0; a < n; ++a) {
      double v = partial[static_cast<std::size_t>(c * n + a)];
      for (int r = 0; r < rank; ++r) {
        const int shift = rank - 1 - r;
        const int idx = (a >> shift) & 1;
        for (int m = 0; m < 2; ++m) {
          const int swapped = (a & ~(1 << shift)) | (m << shift);
          v -= gamma[m][c][idx] * tensor[static_cast<std::size_t>(swapped)];
        }
      }
      out[static_cast<std::size_t>(c * n + a)] = v;
    }
  return out;
}

}  // namespace detail

/// Φ, J, Θ, ‖Ric‖, scalar curvature and 𝒦. With options.full, ∇Ric and ∇²Ric
/// are added on band ≥ 5 when h ≤ options.max_h_full; otherwise 𝒦 is partial.
inline InvariantField ricci_and_kappa(const Potential& u, RicciOptions options = {}) {
  const Grid& g = *u.grid;
  PotentialEval ev(u);
  InvariantField out;
  out.phi = invariant_phi(u);
  out.j = invariant_j(u);
  out.theta = invariant_theta(out.phi, out.j);
  out.ric_norm = ScalarField(u.grid, 3);
  out.scalar = ScalarField(u.grid, 3);

  const std::size_t n = g.size();
  std::vector<detail::T2> inv(n);
  std::vector<detail::T3> gamma(n);
  std::vector<std::vector<double>> ric(n);  // Ricci in ξ-coordinates, 4 components
  parallel_for(n, [&](std::size_t k) {
    if (g.band(k) < 3) return;
    const NodeDerivs d = ev.at(k, 4);
    inv[k] = detail::to_t2(d.hess.inverse());
    const auto t = detail::third_tensor(d);
    const auto m = detail::ricci_core(inv[k], t, detail::fourth_tensor(d));
    double tr = 0.0, tr2 = 0.0;
    for (int i = 0; i < 2; ++i) {
      tr += m[i][i];
      for (int l = 0; l < 2; ++l) tr2 += m[i][l] * m[l][i];
    }
    out.scalar[k] = tr;
    out.ric_norm[k] = std::sqrt(std::max(tr2, 0.0));
    const auto hu = detail::to_t2(d.hess);
    detail::T2 r{};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int l = 0; l < 2; ++l) r[a][b] += m[a][l] * hu[l][b];
    const double off = 0.5 * (r[0][1] + r[1][0]);
    ric[k] = {r[0][0], off, off, r[1][1]};
    for (int m2 = 0; m2 < 2; ++m2)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          double s = 0.0;
          for (int l = 0; l < 2; ++l) s += inv[k][m2][l] * t[i][j][l];
          gamma[k][m2][i][j] = 0.5 * s;
        }
  });

  out.kappa = out.ric_norm;
  if (!options.full) return out;
  if (g.max_band() < 5 || g.h() > options.max_h_full * (1.0 + 1e-12)) {
    out.warning = "full curvature aggregate needs band 5 and h <= " + std::to_string(options.max_h_full) +
                  "; reporting the Ricci-norm part only";
    return out;
  }

  const auto t1 = fd::taps({1, 0}, g.h()), t2 = fd::taps({0, 1}, g.h());
  auto differentiate = [&](const std::vector<std::vector<double>>& field, std::size_t k, std::size_t comps) {
    std::vector<double> partial(2 * comps);
    for (std::size_t c = 0; c < comps; ++c) {
      double s1 = 0.0, s2 = 0.0;
      for (const auto& tap : t1) s1 += tap.w * field[static_cast<std::size_t>(g.neighbor(k, tap.di, tap.dj))][c];
      for (const auto& tap : t2) s2 += tap.w * field[static_cast<std::size_t>(g.neighbor(k, tap.di, tap.dj))][c];
      partial[c] = s1;
      partial[comps + c] = s2;
    }
    return partial;
  };

  out.nabla_ric = ScalarField(u.grid, 4);
  out.nabla2_ric = ScalarField(u.grid, 5);
  std::vector<std::vector<double>> dric(n);
  parallel_for(n, [&](std::size_t k) {
    if (g.band(k) < 4) return;
    dric[k] = detail::covariant(ric[k], differentiate(ric, k, 4), 2, gamma[k]);
    out.nabla_ric[k] = detail::tensor_norm(dric[k], 3, inv[k]);
  });
  out.kappa = ScalarField(u.grid, 5);
  parallel_for(n, [&](std::size_t k) {
    if (g.band(k) < 5) return;
    const auto d2 = detail::covariant(dric[k], differentiate(dric, k, 8), 3, gamma[k]);
    out.nabla2_ric[k] = detail::tensor_norm(d2, 4, inv[k]);
    out.kappa[k] = out.ric_norm[k] + std::cbrt(out.nabla_ric[k] * out.nabla_ric[k]) + std::sqrt(out.nabla2_ric[k]);
  });
  out.kappa_full = true;
  return out;
}

}  // namespace abreu
