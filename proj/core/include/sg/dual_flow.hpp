#pragma once

#include <vector>

#include "sg/domain.hpp"
#include "sg/laguerre.hpp"
#include "sg/measure.hpp"
#include "sg/ot_solver.hpp"
#include "sg/vec.hpp"

namespace sg {

// C^1 radial taper: identically 1 on [0, R], identically 0 on [R+1, inf),
// monotone smoothstep in between.
struct CutoffProfile {
  double R = 0.0;
  double rho(double s) const {
    const double a = std::abs(s);
    if (a <= R) return 1.0;
    if (a >= R + 1.0) return 0.0;
    const double u = a - R;
    return 1.0 - u * u * (3.0 - 2.0 * u);
  }
};

// Componentwise taper H(X) = (rho(|X1|) X1, rho(|X2|) X2); identity on the
// box |X_i| <= R, zero outside |X_i| <= R+1.
Vec2 cutoff_map(const CutoffProfile& cut, Vec2 X);

// A priori bound on every transported speed below: |U| <= S + R + 1.
inline double speed_bound(double S, double R) { return S + R + 1.0; }

struct FlowSnapshot {
  double t = 0.0;
  std::vector<Vec2> positions;
  std::vector<double> psi;
  std::vector<Vec2> centroids;
};

struct RunOptions {
  double T = 0.5;
  double dt = -1.0;    // <= 0 picks 1e-2 * min(1, 1 / speed_bound)
  int save_stride = 1; // snapshot every k-th step (0 and final always kept)
  SolveOptions ot;
  int mollify_m = 0;   // > 0: average selections over particles within 1/m
  // Height-weighted transport when set (one entry per quadrature node; not
  // owned).  Null means uniform density — the incompressible path.
  const std::vector<double>* node_density = nullptr;
};

// Advected dual state: particle positions, transport weights, and the
// subdifferential selections (cell centroids) at the current time, plus the
// saved trajectory.  Masses never change; the support envelope R_T is fixed
// once from the initial measure and the run horizon.
struct FlowState {
  double t = 0.0;
  DiscreteMeasure particles;
  KantorovichWeights psi;
  std::vector<Vec2> centroids;
  double S = 0.0;
  double R_T = 0.0;
  CutoffProfile cutoff;
  double max_speed_seen = 0.0;
  std::vector<FlowSnapshot> history;
  // Transport solver effort across the run so far.
  long ot_solves = 0;
  long ot_iterations = 0;
  int ot_iterations_max = 0;

  std::size_t size() const { return particles.size(); }
};

// Solves transport at t = 0 and records the initial snapshot.  horizon sets
// the support envelope R_T = support_bound(R0, S, horizon).
FlowState init_flow(const PhysicalDomain& dom, const DiscreteMeasure& alpha0, double horizon,
                    const SolveOptions& ot = {},
                    const std::vector<double>* node_density = nullptr);

// Velocity of every particle: U_i = perp(H(X_i) - c_i).
std::vector<Vec2> dual_velocity(const FlowState& state);

// Same, but each selection is replaced by the bump-weighted average of the
// selections of particles within radius 1/m (weights: mollifier value times
// particle mass).  Converges to dual_velocity as m -> infinity.
std::vector<Vec2> mollified_velocity(const FlowState& state, int m);

// One midpoint (RK2) step of length dt; transport weights are re-solved at
// the midpoint and at the new positions.  Enforces the support invariant
// |X_i| <= R_T + 10 dt (S + R_T + 1).
void step(const PhysicalDomain& dom, FlowState& state, double dt, const RunOptions& opts);

// Full advection from alpha0 over [0, T]; returns the state with history.
FlowState run_flow(const PhysicalDomain& dom, const DiscreteMeasure& alpha0,
                   const RunOptions& opts);

// Saved snapshot at time t (|t - t_snap| <= 1e-9); throws if t was not saved.
const FlowSnapshot& snapshot_at(const FlowState& state, double t);

// Positions at time 0 by particle index: the inverse flow map evaluated at
// the particles of time t.  Composition with the forward map is exact
// bookkeeping (indices never permute).
std::vector<Vec2> inverse_flow(const FlowState& state, double t);

}  // namespace sg
