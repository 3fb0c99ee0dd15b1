#pragma once

#include <string>
#include <vector>

#include "sg/domain.hpp"
#include "sg/dual_flow.hpp"
#include "sg/grid_field.hpp"
#include "sg/measure.hpp"
#include "sg/ot_solver.hpp"
#include "sg/physical_flow.hpp"

namespace sg {

// Fluid depth h >= 0 sampled on the quadrature grid; the associated
// geopotential is P(x) = h(x) + |x|^2 / 2, convex for valid states.
struct HeightField {
  ScalarField h;

  static HeightField uniform(const PhysicalDomain& dom, double value = 1.0);

  // Weighted integral over the domain.
  double total(const PhysicalDomain& dom) const;
  // Largest violation of midpoint convexity of P = h + |x|^2/2 along the
  // grid axes (max over interior inside nodes of 2P(x) - P(x-e) - P(x+e),
  // clamped at 0).  Zero for any convex P sampled on the grid.
  double convexity_defect(const PhysicalDomain& dom) const;
};

// Height-weighted semidiscrete transport: cell masses are integrals of h
// over the Laguerre cells.  h == 1 reduces to solve_weights exactly (the
// same code runs, with unit density factors).
SolveReport solve_weighted_ot(const PhysicalDomain& dom, const HeightField& h,
                              const DiscreteMeasure& mu, KantorovichWeights& w,
                              const SolveOptions& opts = {});

// Shallow-water dual velocity U_i = (X_i - c_i)^perp after the support
// cutoff: identical to the incompressible operator in two dimensions, and
// implemented as the same function.
std::vector<Vec2> sw_dual_velocity(const FlowState& state);

struct SwFixedPointOptions {
  double damping = 0.5;  // relaxation factor in (0, 1]
  int max_outer = 20;
  double tol = 1e-9;     // relative L1 change of h per outer step
};

// Honest convergence report of the height/potential fixed point; failure is
// a status here, not an exception — the iterated state is still usable.
struct SwIterateStatus {
  bool converged = false;
  int outer_iters = 0;
  std::vector<double> residuals;      // relative L1 fixed-point defect per outer step
  std::vector<double> renorm_factors; // mass renormalization per outer step
  double clamp_fraction = 0.0;        // inside nodes clamped to h = 0 at the end
  std::string message;                // diagnostic when the iteration stops early
};

// Alternates height-weighted transport with the height update
// h <- clamp(P + c - |x|^2/2, 0), where the constant c is chosen by
// bisection so the clamped integral matches the initial fluid volume, and
// mixes with the previous iterate using the damping factor.  w carries the
// warm start in and the final weights out; h is updated in place.
SwIterateStatus sw_consistency_iterate(const PhysicalDomain& dom, const DiscreteMeasure& mu,
                                       KantorovichWeights& w, HeightField& h,
                                       const SwFixedPointOptions& fp = {},
                                       const SolveOptions& ot = {});

// Runs the consistency fixed point at the flow's current particles and
// re-selects the centroids against the refit height, leaving a consistent
// (h, psi, centroid) triple for the next step.
SwIterateStatus sw_refit(const PhysicalDomain& dom, FlowState& flow, HeightField& h,
                         const SwFixedPointOptions& fp = {}, const SolveOptions& ot = {});

// Shallow-water advection over [0, T]: particle stepping shares the
// incompressible code path with h as the quadrature density, and the height
// is re-fit by the consistency fixed point after every save-stride window.
struct ShallowRun {
  FlowState flow;
  HeightField h0;                    // height at t = 0 (after the initial fit)
  std::vector<double> height_times;
  std::vector<ScalarField> heights;  // fitted height at each saved time
  std::vector<SwIterateStatus> statuses;
};

ShallowRun run_shallow(const PhysicalDomain& dom, const DiscreteMeasure& alpha0,
                       const HeightField& h0_guess, const RunOptions& opts,
                       const SwFixedPointOptions& fp = {});

// Same composition pipeline as the incompressible reconstruction; the
// weighted checks below replace the unweighted ones.
PhysicalFlowField sw_reconstruct_F(const PhysicalDomain& dom, const ShallowRun& run, double t);

// L^r distance between sampled flows weighted by the initial height.
double sw_flow_distance(const PhysicalDomain& dom, const GridField& F, const GridField& G,
                        double r, const HeightField& h0);

// Weighted pushforward check of F # h_src against h_dst over a K x K
// congruent binning: max over bins carrying target mass of
// |pushed - target| / max(target, mean bin load), the floor keeping edge
// slivers from inflating the statistic.
double sw_pushforward_stat(const PhysicalDomain& dom, const GridField& F, const HeightField& h_src,
                           const HeightField& h_dst, int bins = 5);

// Iteration diagnostics as a JSON object (status, residuals, factors).
std::string sw_status_to_json(const SwIterateStatus& st);

}  // namespace sg
