#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sg/laguerre.hpp"

namespace sg {

// Newton failed to balance the cell masses within the iteration budget.
struct NonConvergence : std::runtime_error {
  int iterations;
  double final_error;
  NonConvergence(int it, double err)
      : std::runtime_error("transport solve did not converge: error " + std::to_string(err) +
                           " after " + std::to_string(it) + " iterations"),
        iterations(it),
        final_error(err) {}
};

struct SolveOptions {
  double tol = 1e-3;      // converged when max_i |mass_i - m_i| <= tol * total mass
  int max_iter = 200;
  std::string log_path;   // per-iteration CSV (iter,error,step,min_mass,dual) when set
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  double final_error = 0.0;  // max_i |mass_i - m_i| / total mass
  int repairs = 0;           // empty-cell quantile resets performed
  LaguerreTessellation tess; // tessellation at the accepted weights
};

// Damped Newton ascent on the concave transport dual.  w carries the warm
// start in (gauge-fixed on entry) and the solution out; when w is empty a
// cold start is built by a multiscale cascade (coarsen the particles,
// solve coarsely, lift the weights to the children).
// Target masses are rescaled to the quadrature mass of the (possibly
// density-weighted) source; a relative mismatch beyond 1% logs a warning to
// stderr.  Throws NonConvergence / DegenerateCell / ZeroMassRegion.
SolveReport solve_weights(const PhysicalDomain& dom, const DiscreteMeasure& mu,
                          KantorovichWeights& w, const SolveOptions& opts = {},
                          const std::vector<double>* node_density = nullptr);

}  // namespace sg
