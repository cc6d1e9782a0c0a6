#pragma once

// Uniform masked lattice over a polytope, scalar fields on it, and central
// finite-difference stencils up to fourth order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "abreu/error.hpp"
#include "abreu/expr.hpp"
#include "abreu/linalg.hpp"
#include "abreu/polytope.hpp"

namespace abreu {

enum class NodeKind { outside, boundary_adjacent, interior };

class Grid {
 public:
  static constexpr std::ptrdiff_t none = -1;

  /// Lattice points (i·h, j·h) strictly inside the polytope. Band index is the
  /// Chebyshev distance (in cells) to the nearest non-interior lattice point.
  Grid(Polytope polytope, double h) : polytope_(std::move(polytope)), h_(h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw GeometryError("grid spacing must be positive");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& v : polytope_.vertices()) {
      xmin = std::min(xmin, v.x);
      xmax = std::max(xmax, v.x);
      ymin = std::min(ymin, v.y);
      ymax = std::max(ymax, v.y);
    }
    i0_ = static_cast<long>(std::floor(xmin / h)) - 1;
    j0_ = static_cast<long>(std::floor(ymin / h)) - 1;
    nx_ = static_cast<long>(std::ceil(xmax / h)) + 1 - i0_ + 1;
    ny_ = static_cast<long>(std::ceil(ymax / h)) + 1 - j0_ + 1;
    if (static_cast<double>(nx_) * static_cast<double>(ny_) > 5e7) throw GeometryError("grid too fine");

    lattice_index_.assign(static_cast<std::size_t>(nx_ * ny_), none);
    for (long j = 0; j < ny_; ++j)
      for (long i = 0; i < nx_; ++i) {
        const Vec2 p = lattice_point(i, j);
        if (polytope_.contains(p)) {
          lattice_index_[lat(i, j)] = static_cast<std::ptrdiff_t>(nodes_.size());
          nodes_.push_back({i, j});
        }
      }
    if (nodes_.size() < 9)
      throw GeometryError("grid spacing too coarse: " + std::to_string(nodes_.size()) +
                          " interior nodes (need at least 9)");

    // Multi-source 8-neighbour BFS from non-interior lattice points.
    std::vector<int> dist(lattice_index_.size(), -1);
    std::deque<long> queue;
    for (long k = 0; k < nx_ * ny_; ++k)
      if (lattice_index_[static_cast<std::size_t>(k)] == none) {
        dist[static_cast<std::size_t>(k)] = 0;
        queue.push_back(k);
      }
    while (!queue.empty()) {
      const long k = queue.front();
      queue.pop_front();
      const long i = k % nx_, j = k / nx_;
      for (long dj = -1; dj <= 1; ++dj)
        for (long di = -1; di <= 1; ++di) {
          const long a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= nx_ || b >= ny_) continue;
          auto& d = dist[lat(a, b)];
          if (d < 0) {
            d = dist[static_cast<std::size_t>(k)] + 1;
            queue.push_back(b * nx_ + a);
          }
        }
    }
    band_.resize(nodes_.size());
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      band_[n] = dist[lat(nodes_[n].i, nodes_[n].j)];
      max_band_ = std::max(max_band_, band_[n]);
    }
  }

  const Polytope& polytope() const { return polytope_; }
  double h() const { return h_; }
  std::size_t size() const { return nodes_.size(); }
  int band(std::size_t k) const { return band_[k]; }
  int max_band() const { return max_band_; }

  NodeKind kind(std::size_t k) const {
    return band_[k] == 1 ? NodeKind::boundary_adjacent : NodeKind::interior;
  }

  /// Global lattice coordinates of node k (point = (i·h, j·h)).
  std::pair<long, long> lattice(std::size_t k) const { return {nodes_[k].i + i0_, nodes_[k].j + j0_}; }

  Vec2 point(std::size_t k) const { return lattice_point(nodes_[k].i, nodes_[k].j); }

  /// Interior index of the node offset by (di, dj) cells, or `none`.
  std::ptrdiff_t neighbor(std::size_t k, int di, int dj) const {
    const long a = nodes_[k].i + di, b = nodes_[k].j + dj;
    if (a < 0 || b < 0 || a >= nx_ || b >= ny_) return none;
    return lattice_index_[lat(a, b)];
  }

  /// Interior index of the node at global lattice coordinates, or `none`.
  std::ptrdiff_t find(long gi, long gj) const {
    const long a = gi - i0_, b = gj - j0_;
    if (a < 0 || b < 0 || a >= nx_ || b >= ny_) return none;
    return lattice_index_[lat(a, b)];
  }

  /// Interior node closest to p (ties broken by lowest index).
  std::size_t nearest(Vec2 p) const {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const double d = norm(point(k) - p);
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    return best;
  }

  std::size_t count_band(int min_band) const {
    return static_cast<std::size_t>(std::count_if(band_.begin(), band_.end(), [&](int b) { return b >= min_band; }));
  }

 private:
  struct LatticeNode {
    long i, j;
  };
  std::size_t lat(long i, long j) const { return static_cast<std::size_t>(j * nx_ + i); }
  Vec2 lattice_point(long i, long j) const {
    return {static_cast<double>(i + i0_) * h_, static_cast<double>(j + j0_) * h_};
  }

  Polytope polytope_;
  double h_;
  long i0_ = 0, j0_ = 0, nx_ = 0, ny_ = 0;
  std::vector<std::ptrdiff_t> lattice_index_;
  std::vector<LatticeNode> nodes_;  // row-major: ξ₂ rows, ξ₁ columns
  std::vector<int> band_;
  int max_band_ = 0;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr build_grid(const Polytope& p, double h) { return std::make_shared<const Grid>(p, h); }

/// Real values on the interior nodes of a grid; meaningful on nodes with
/// band ≥ min_band (other entries are NaN).
struct ScalarField {
  GridPtr grid;
  int min_band = 1;
  std::vector<double> values;

  ScalarField() = default;
  ScalarField(GridPtr g, int band = 1, double fill = 0.0)
      : grid(std::move(g)), min_band(band), values(grid->size(), fill) {
    for (std::size_t k = 0; k < values.size(); ++k)
      if (grid->band(k) < min_band) values[k] = std::numeric_limits<double>::quiet_NaN();
  }

  std::size_t size() const { return values.size(); }
  bool defined(std::size_t k) const { return grid->band(k) >= min_band; }
  double operator[](std::size_t k) const { return values[k]; }
  double& operator[](std::size_t k) { return values[k]; }

  /// Max |value| over nodes with band ≥ max(min_band, band).
  double max_abs(int band = 0) const {
    double m = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k)
      if (grid->band(k) >= std::max(min_band, band)) m = std::max(m, std::abs(values[k]));
    return m;
  }
};

/// Pointwise evaluation of a closed-form function on every interior node.
inline ScalarField sample(const std::function<double(Vec2)>& f, const GridPtr& g) {
  ScalarField out(g);
  for (std::size_t k = 0; k < g->size(); ++k) out[k] = f(g->point(k));
  return out;
}

inline ScalarField sample(const Expr& e, const GridPtr& g) {
  ScalarField out(g);
  for (std::size_t k = 0; k < g->size(); ++k) {
    const Vec2 p = g->point(k);
    try {
      out[k] = e.value(p);
    } catch (const DomainError& err) {
      std::ostringstream os;
      os.precision(17);
      os << err.what() << " at node (" << p.x << ", " << p.y << ")";
      throw DomainError(os.str());
    }
    if (!std::isfinite(out[k])) {
      std::ostringstream os;
      os.precision(17);
      os << "non-finite value of '" << e.text() << "' at node (" << p.x << ", " << p.y << ")";
      throw DomainError(os.str());
    }
  }
  return out;
}

/// Multi-index (a, b) for ∂^{a+b} / ∂ξ₁^a ∂ξ₂^b.
struct MultiIndex {
  int a = 0;
  int b = 0;
  constexpr int order() const { return a + b; }
  /// Band consumed by the stencil: ⌈|α|/2⌉.
  constexpr int band_cost() const { return (order() + 1) / 2; }
};

namespace fd {

struct Stencil1D {
  int reach;
  double w[5];  // weights at offsets −2..2
};

/// Second-order central stencils for derivatives of order 0..4 (unit spacing).
inline const Stencil1D& stencil(int order) {
  static const Stencil1D s[5] = {
      {0, {0.0, 0.0, 1.0, 0.0, 0.0}},
      {1, {0.0, -0.5, 0.0, 0.5, 0.0}},
      {1, {0.0, 1.0, -2.0, 1.0, 0.0}},
      {2, {-0.5, 1.0, 0.0, -1.0, 0.5}},
      {2, {1.0, -4.0, 6.0, -4.0, 1.0}},
  };
  return s[order];
}

/// Tensor-product stencil entry: offset (di, dj) and weight scaled by h^{-|α|}.
struct Tap {
  int di, dj;
  double w;
};

inline std::vector<Tap> taps(MultiIndex alpha, double h) {
  if (alpha.a < 0 || alpha.b < 0 || alpha.a > 4 || alpha.b > 4 || alpha.order() > 4)
    throw BandError("unsupported derivative order");
  const auto& sa = stencil(alpha.a);
  const auto& sb = stencil(alpha.b);
  const double scale = std::pow(h, -alpha.order());
  std::vector<Tap> out;
  for (int dj = -2; dj <= 2; ++dj)
    for (int di = -2; di <= 2; ++di) {
      const double w = sa.w[di + 2] * sb.w[dj + 2];
      if (w != 0.0) out.push_back({di, dj, w * scale});
    }
  return out;
}

/// Applies a precomputed stencil at node k; every tap must be an interior node.
inline double apply(const Grid& g, const std::vector<Tap>& t, const std::vector<double>& v, std::size_t k) {
  double s = 0.0;
  for (const auto& tap : t) {
    const auto n = g.neighbor(k, tap.di, tap.dj);
    s += tap.w * v[static_cast<std::size_t>(n)];
  }
  return s;
}

}  // namespace fd

/// Central difference ∂^α f on nodes with band ≥ f.min_band + ⌈|α|/2⌉.
inline ScalarField fd_derivative(const ScalarField& f, MultiIndex alpha) {
  const Grid& g = *f.grid;
  const int band = f.min_band + alpha.band_cost();
  if (band > g.max_band())
    throw BandError("band too thin for derivative of order " + std::to_string(alpha.order()) + " (needs band " +
                    std::to_string(band) + ", grid has " + std::to_string(g.max_band()) + ")");
  const auto t = fd::taps(alpha, g.h());
  ScalarField out(f.grid, band);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= band) out[k] = fd::apply(g, t, f.values, k);
  return out;
}

/// CSV rows "xi1,xi2,value" for defined nodes, row-major, preceded by `header`
/// comment lines (each prefixed with '#').
inline void write_field_csv(std::ostream& os, const ScalarField& f, const std::vector<std::string>& header = {}) {
  for (const auto& line : header) os << "# " << line << '\n';
  os << "xi1,xi2,value\n";
  char buf[96];
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (!f.defined(k)) continue;
    const Vec2 p = f.grid->point(k);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.x, p.y, f[k]);
    os << buf;
  }
}

}  // namespace abreu
