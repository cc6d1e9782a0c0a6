#pragma once

// Damped Newton iteration for S_D(v + ψ) = A over the smooth part ψ.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "abreu/error.hpp"
#include "abreu/expr.hpp"
#include "abreu/grid.hpp"
#include "abreu/operator.hpp"
#include "abreu/potential.hpp"

namespace abreu {

/// Base potential (closed-form parts), weight D and target values A on band ≥ 3.
struct SolveProblem {
  Potential base;
  Expr D = Expr::parse("1");
  ScalarField A;

  static SolveProblem from_context(const OperatorContext& c) {
    SolveProblem p{c.u, c.D, sample(c.A, c.u.grid)};
    p.A.min_band = 3;
    return p;
  }
};

enum class SolveStatus { converged, max_iterations, stalled, convexity_lost, linear_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::stalled: return "stalled";
    case SolveStatus::convexity_lost: return "convexity_lost";
    case SolveStatus::linear_failure: return "linear_failure";
  }
  return "unknown";
}

struct SolveConfig {
  double tolerance = 1e-8;
  int max_iterations = 30;
  double min_damping = 1.0 / 1024.0;
  int stall_iterations = 5;
  int continuation_steps = 0;
  std::optional<std::size_t> anchor;
};

struct SolveResult {
  ScalarField psi;
  std::vector<double> residual_history;
  int iterations = 0;
  bool converged = false;
  SolveStatus status = SolveStatus::max_iterations;
  std::string message;
  std::optional<EquivalenceRow> final_row;
};

/// Deepest node, ties broken by distance to the centroid then by index.
inline std::size_t default_anchor(const Grid& g) {
  const Vec2 c = g.polytope().centroid();
  std::size_t best = 0;
  for (std::size_t k = 1; k < g.size(); ++k) {
    if (g.band(k) > g.band(best) ||
        (g.band(k) == g.band(best) && norm(g.point(k) - c) < norm(g.point(best) - c)))
      best = k;
  }
  return best;
}

/// Subtracts the least-squares affine fit a + b·(ξ − ξ_anchor) over all interior nodes.
inline ScalarField gauge_project(const ScalarField& psi, std::size_t anchor) {
  const Grid& g = *psi.grid;
  const Vec2 o = g.point(anchor);
  Eigen::Matrix3d N = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec2 d = g.point(k) - o;
    const Eigen::Vector3d phi(1.0, d.x, d.y);
    N += phi * phi.transpose();
    rhs += phi * psi[k];
  }
  const Eigen::Vector3d c = N.ldlt().solve(rhs);
  ScalarField out = psi;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec2 d = g.point(k) - o;
    out[k] = psi[k] - (c[0] + c[1] * d.x + c[2] * d.y);
  }
  return out;
}

/// S_D(base + ψ) − A on band ≥ 3.
inline ScalarField residual(const ScalarField& psi, const SolveProblem& pb) {
  ScalarField r = s_d_xi(pb.base.with_psi(psi), pb.D);
  for (std::size_t k = 0; k < r.size(); ++k)
    if (r.defined(k)) r[k] -= pb.A[k];
  return r;
}

inline double residual_norm(const ScalarField& r) { return r.max_abs(3); }

struct Linearization {
  Eigen::SparseMatrix<double> J;
  std::vector<std::size_t> unknowns;     // node of each unknown (band ≥ 3)
  std::vector<std::ptrdiff_t> index;     // unknown index of each node, or −1
};

inline void index_unknowns(const Grid& g, std::vector<std::size_t>& unknowns, std::vector<std::ptrdiff_t>& index) {
  unknowns.clear();
  index.assign(g.size(), -1);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.band(k) >= 3) {
      index[k] = static_cast<std::ptrdiff_t>(unknowns.size());
      unknowns.push_back(k);
    }
}

/// Exact derivative of the discrete residual with respect to ψ at band ≥ 3 nodes:
/// δS(p) = −(1/D_p) Σ c_q D_q (−u^{-1} δ(∂²u)_q u^{-1}).
inline Linearization linearize(const ScalarField& psi, const SolveProblem& pb) {
  const Potential u = pb.base.with_psi(psi);
  const Grid& g = *u.grid;
  const HessBundle hb = hessian_bundle(u);
  const WeightSamples w = sample_weight(pb.D, g);
  const detail::SecondTaps t(g.h());
  Linearization lin;
  index_unknowns(g, lin.unknowns, lin.index);

  // dinv[q][o][c]: derivative of the outer component o of u^{-1} at q with
  // respect to the Hessian component c (11, 12, 22).
  std::vector<std::array<std::array<double, 3>, 3>> dinv(g.size());
  for (std::size_t q = 0; q < g.size(); ++q) {
    if (g.band(q) < 2) continue;
    const Sym2& m = hb[q].inv;
    const double a[2][2] = {{m.a11, m.a12}, {m.a12, m.a22}};
    static constexpr int oi[3][2] = {{0, 0}, {0, 1}, {1, 1}};
    for (int o = 0; o < 3; ++o) {
      const int i = oi[o][0], j = oi[o][1];
      dinv[q][o][0] = -a[i][0] * a[0][j];
      dinv[q][o][1] = -(a[i][0] * a[1][j] + a[i][1] * a[0][j]);
      dinv[q][o][2] = -a[i][1] * a[1][j];
    }
  }

  const std::vector<fd::Tap>* outer[3] = {&t.t20, &t.t11, &t.t02};
  const double outer_factor[3] = {1.0, 2.0, 1.0};
  const std::vector<fd::Tap>* inner[3] = {&t.t20, &t.t11, &t.t02};
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(lin.unknowns.size() * 64);
  for (std::size_t row = 0; row < lin.unknowns.size(); ++row) {
    const std::size_t p = lin.unknowns[row];
    const double scale_p = -1.0 / w.value[p];
    for (int o = 0; o < 3; ++o)
      for (const auto& to : *outer[o]) {
        const auto q = static_cast<std::size_t>(g.neighbor(p, to.di, to.dj));
        const double cq = scale_p * outer_factor[o] * to.w * w.value[q];
        for (int c = 0; c < 3; ++c)
          for (const auto& ti : *inner[c]) {
            const auto r = static_cast<std::size_t>(g.neighbor(q, ti.di, ti.dj));
            if (lin.index[r] < 0) continue;
            trip.emplace_back(static_cast<int>(row), static_cast<int>(lin.index[r]),
                              cq * dinv[q][o][c] * ti.w * u.scale);
          }
      }
  }
  const auto n = static_cast<Eigen::Index>(lin.unknowns.size());
  lin.J.resize(n, n);
  lin.J.setFromTriplets(trip.begin(), trip.end());
  return lin;
}

/// Applies the linearization to a node field (only unknown entries are read).
inline ScalarField apply_linearization(const Linearization& lin, const ScalarField& delta) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(lin.unknowns.size()));
  for (std::size_t i = 0; i < lin.unknowns.size(); ++i) x[static_cast<Eigen::Index>(i)] = delta[lin.unknowns[i]];
  const Eigen::VectorXd y = lin.J * x;
  ScalarField out(delta.grid, 3);
  for (std::size_t i = 0; i < lin.unknowns.size(); ++i) out[lin.unknowns[i]] = y[static_cast<Eigen::Index>(i)];
  return out;
}

namespace detail {

/// One Newton solve at fixed target; updates psi and the history in place.
inline SolveStatus newton_stage(ScalarField& psi, const SolveProblem& pb, const SolveConfig& cfg, std::size_t anchor,
                                SolveResult& res, std::string& message) {
  ScalarField r = residual(psi, pb);
  double rn = residual_norm(r);
  res.residual_history.push_back(rn);
  double best = rn;
  int since_best = 0;
  for (;;) {
    if (rn <= cfg.tolerance) return SolveStatus::converged;
    if (res.iterations >= cfg.max_iterations) return SolveStatus::max_iterations;
    const Linearization lin = linearize(psi, pb);
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(lin.J);
    if (lu.info() != Eigen::Success) {
      message = "sparse LU factorization failed: " + lu.lastErrorMessage();
      return SolveStatus::linear_failure;
    }
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(lin.unknowns.size()));
    for (std::size_t i = 0; i < lin.unknowns.size(); ++i) rhs[static_cast<Eigen::Index>(i)] = -r[lin.unknowns[i]];
    const Eigen::VectorXd step = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !step.allFinite()) {
      message = "sparse LU solve failed";
      return SolveStatus::linear_failure;
    }
    ++res.iterations;

    bool accepted = false;
    bool convex_seen = false;
    for (double lambda = 1.0; lambda >= cfg.min_damping; lambda *= 0.5) {
      ScalarField trial = psi;
      for (std::size_t i = 0; i < lin.unknowns.size(); ++i)
        trial[lin.unknowns[i]] += lambda * step[static_cast<Eigen::Index>(i)];
      ScalarField rt;
      try {
        rt = residual(trial, pb);
      } catch (const ConvexityError&) {
        continue;
      }
      convex_seen = true;
      const double rtn = residual_norm(rt);
      if (rtn <= (1.0 - lambda / 4.0) * rn) {
        psi = gauge_project(trial, anchor);
        r = std::move(rt);
        rn = rtn;
        accepted = true;
        break;
      }
    }
    res.residual_history.push_back(rn);
    if (!accepted) {
      if (!convex_seen) {
        message = "every damped step leaves the convex cone";
        return SolveStatus::convexity_lost;
      }
      message = "line search failed to reduce the residual";
      return SolveStatus::stalled;
    }
    if (rn < best * (1.0 - 1e-3)) {
      best = rn;
      since_best = 0;
    } else if (++since_best >= cfg.stall_iterations) {
      message = "residual not reduced over " + std::to_string(cfg.stall_iterations) + " iterations";
      return SolveStatus::stalled;
    }
  }
}

}  // namespace detail

/// Damped Newton from `initial` (default ψ ≡ 0). ψ on band 1–2 keeps its initial
/// values; an affine gauge is removed after every accepted step. Throws
/// DomainError when D is not positive on the grid and ConvexityError when the
/// initial potential is not convex; numerical failures are reported in the result.
inline SolveResult newton_solve(const SolveProblem& pb, const SolveConfig& cfg = {},
                                std::optional<ScalarField> initial = std::nullopt) {
  const Grid& g = *pb.base.grid;
  if (!(cfg.tolerance > 0.0)) throw ConfigError("solver tolerance must be positive");
  sample_weight(pb.D, g);
  const std::size_t anchor = cfg.anchor ? *cfg.anchor : default_anchor(g);
  if (anchor >= g.size()) throw ConfigError("gauge anchor is not an interior node");

  ScalarField psi = initial ? *initial : ScalarField(pb.base.grid);
  psi.min_band = 1;
  hessian_bundle(pb.base.with_psi(psi));
  psi = gauge_project(psi, anchor);

  SolveResult res;
  std::string message;
  SolveStatus status = SolveStatus::converged;
  const int stages = std::max(cfg.continuation_steps, 0);
  if (stages > 0) {
    const ScalarField A0 = s_d_xi(pb.base.with_psi(psi), pb.D);
    for (int s = 1; s <= stages && status == SolveStatus::converged; ++s) {
      const double t = static_cast<double>(s) / stages;
      SolveProblem stage = pb;
      for (std::size_t k = 0; k < g.size(); ++k)
        if (g.band(k) >= 3) stage.A[k] = (1.0 - t) * A0[k] + t * pb.A[k];
      status = detail::newton_stage(psi, stage, cfg, anchor, res, message);
    }
  } else {
    status = detail::newton_stage(psi, pb, cfg, anchor, res, message);
  }
  res.psi = psi;
  res.status = status;
  res.converged = status == SolveStatus::converged;
  res.message = res.converged ? "" : message;
  if (g.max_band() >= 4) {
    try {
      res.final_row = equivalence_row(pb.base.with_psi(psi), pb.D, 0.0);
    } catch (const Error&) {
    }
  }
  return res;
}

struct ManufacturedProblem {
  SolveProblem problem;
  ScalarField psi_star;
};

/// A* = S_D(base + ψ*) sampled on band ≥ 3.
inline ManufacturedProblem manufactured_problem(const Expr& psi_star, const Potential& base, const Expr& D) {
  ScalarField ps = sample(psi_star, base.grid);
  SolveProblem pb{base, D, s_d_xi(base.with_psi(ps), D)};
  return {pb, ps};
}

/// ψ* on band 1–2 and zero elsewhere: the collar data matching a manufactured solution.
inline ScalarField collar_of(const ScalarField& psi_star) {
  ScalarField out(psi_star.grid);
  for (std::size_t k = 0; k < out.size(); ++k)
    if (out.grid->band(k) <= 2) out[k] = psi_star[k];
  return out;
}

/// max |ψ − ψ* − (best affine fit of ψ − ψ*)| over all interior nodes.
inline double gauge_aligned_error(const ScalarField& psi, const ScalarField& psi_star, std::size_t anchor) {
  ScalarField diff = psi;
  for (std::size_t k = 0; k < diff.size(); ++k) diff[k] -= psi_star[k];
  return gauge_project(diff, anchor).max_abs();
}

}  // namespace abreu
