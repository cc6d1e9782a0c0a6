// Recovers a known smooth part psi* from its own scalar curvature.
#include <cstdio>

#include "abreu/solver.hpp"

int main() {
  using namespace abreu;
  const Polytope square = parse_polytope("1 0 0\n0 1 0\n-1 0 -1\n0 -1 -1\n");
  const Expr D = Expr::parse("1");
  const Expr psi_star = Expr::parse("0.05*xi1*xi2*(1-xi1)*(1-xi2)");
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const GridPtr g = build_grid(square, h);
    const ManufacturedProblem m = manufactured_problem(psi_star, Potential::guillemin_only(g), D);
    const SolveResult r = newton_solve(m.problem);
    const double err = gauge_aligned_error(r.psi, m.psi_star, default_anchor(*g));
    std::printf("h=1/%-3.0f %s after %d iterations, residual %.2e, |psi - psi*| = %.3e (= %.1f h^2)\n", 1.0 / h,
                to_string(r.status), r.iterations, r.residual_history.back(), err, err / (h * h));
  }
}
