// Scalar curvature of the Guillemin metric on the unit square and on the
// standard simplex, computed by the divergence form of the operator.
#include <cstdio>

#include "abreu/operator.hpp"

int main() {
  using namespace abreu;
  const Expr one = Expr::parse("1");
  struct Case {
    const char* name;
    const char* edges;
    double exact;
  } cases[] = {{"square", "1 0 0\n0 1 0\n-1 0 -1\n0 -1 -1\n", 4.0}, {"simplex", "1 0 0\n0 1 0\n-1 -1 -1\n", 6.0}};
  for (const auto& c : cases) {
    const Polytope p = parse_polytope(c.edges);
    for (double h : {1.0 / 32, 1.0 / 64, 1.0 / 128}) {
      const Potential v = Potential::guillemin_only(build_grid(p, h));
      const ScalarField S = s_d_xi(v, one);
      double err = 0.0;
      for (std::size_t k = 0; k < S.size(); ++k)
        if (v.grid->band(k) >= 4) err = std::max(err, std::abs(S[k] - c.exact));
      std::printf("%-8s h=1/%-4.0f max|S - %.0f| on band>=4: %.3e\n", c.name, 1.0 / h, c.exact, err);
    }
  }
}
