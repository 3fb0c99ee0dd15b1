#include "sg/dual_flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sg/kahan.hpp"

namespace sg {

Vec2 cutoff_map(const CutoffProfile& cut, Vec2 X) {
  return {cut.rho(X.x) * X.x, cut.rho(X.y) * X.y};
}

namespace {

std::vector<Vec2> velocity_from(const FlowState& state, const std::vector<Vec2>& positions,
                                const std::vector<Vec2>& selections) {
  std::vector<Vec2> U(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    U[i] = perp(cutoff_map(state.cutoff, positions[i]) - selections[i]);
  return U;
}

// Bump-weighted average of the selections over particles within radius 1/m.
// eta(u) = (1 - u^2)^3 on [0,1): C^2 at the rim, positive at 0, so the
// average always includes the particle itself and degenerates to the plain
// selection once 1/m drops below the particle spacing.
std::vector<Vec2> mollify_selections(const std::vector<Vec2>& positions,
                                     const std::vector<double>& masses,
                                     const std::vector<Vec2>& selections, int m) {
  const double radius = 1.0 / static_cast<double>(m);
  std::vector<Vec2> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    KahanSum wsum, cx, cy;
    for (std::size_t j = 0; j < positions.size(); ++j) {
      const double u = norm(positions[j] - positions[i]) / radius;
      if (u >= 1.0) continue;
      const double e = 1.0 - u * u;
      const double w = e * e * e * masses[j];
      wsum.add(w);
      cx.add(w * selections[j].x);
      cy.add(w * selections[j].y);
    }
    out[i] = {cx.value() / wsum.value(), cy.value() / wsum.value()};
  }
  return out;
}

void solve_and_select(const PhysicalDomain& dom, FlowState& state, const DiscreteMeasure& mu,
                      KantorovichWeights& psi, const SolveOptions& ot,
                      std::vector<Vec2>& selections, const std::vector<double>* density) {
  SolveReport rep = solve_weights(dom, mu, psi, ot, density);
  selections = cell_centroid_map(rep.tess);
  ++state.ot_solves;
  state.ot_iterations += rep.iterations;
  state.ot_iterations_max = std::max(state.ot_iterations_max, rep.iterations);
}

void enforce_support(const FlowState& state, double dt) {
  const double slack = 10.0 * dt * speed_bound(state.S, state.R_T);
  const double bound = state.R_T + slack;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (norm(state.particles.positions[i]) > bound)
      throw std::runtime_error("support invariant violated: particle " + std::to_string(i) +
                               " left the envelope R(T) = " + std::to_string(state.R_T));
  }
}

double default_dt(const FlowState& state) {
  return 1e-2 * std::min(1.0, 1.0 / speed_bound(state.S, state.R_T));
}

void record_snapshot(FlowState& state) {
  state.history.push_back({state.t, state.particles.positions, state.psi.psi, state.centroids});
}

double track_max_speed(FlowState& state, const std::vector<Vec2>& U) {
  double vmax = 0.0;
  for (const Vec2& u : U) vmax = std::max(vmax, norm(u));
  state.max_speed_seen = std::max(state.max_speed_seen, vmax);
  return vmax;
}

}  // namespace

FlowState init_flow(const PhysicalDomain& dom, const DiscreteMeasure& alpha0, double horizon,
                    const SolveOptions& ot, const std::vector<double>* node_density) {
  FlowState state;
  state.t = 0.0;
  state.particles = alpha0;
  state.S = dom.S();
  state.R_T = support_bound(alpha0.R0, dom.S(), horizon);
  state.cutoff = CutoffProfile{state.R_T};
  solve_and_select(dom, state, state.particles, state.psi, ot, state.centroids, node_density);
  record_snapshot(state);
  return state;
}

std::vector<Vec2> dual_velocity(const FlowState& state) {
  return velocity_from(state, state.particles.positions, state.centroids);
}

std::vector<Vec2> mollified_velocity(const FlowState& state, int m) {
  if (m <= 0) throw std::invalid_argument("mollified_velocity: m must be positive");
  const std::vector<Vec2> avg = mollify_selections(state.particles.positions,
                                                   state.particles.masses, state.centroids, m);
  return velocity_from(state, state.particles.positions, avg);
}

void step(const PhysicalDomain& dom, FlowState& state, double dt, const RunOptions& opts) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  const std::size_t n = state.size();
  auto select = [&](const std::vector<Vec2>& pos,
                    const std::vector<Vec2>& sel) -> std::vector<Vec2> {
    if (opts.mollify_m > 0)
      return mollify_selections(pos, state.particles.masses, sel, opts.mollify_m);
    return sel;
  };

  // Midpoint stage: velocities at the current state ...
  const std::vector<Vec2> k1 =
      velocity_from(state, state.particles.positions, select(state.particles.positions, state.centroids));
  track_max_speed(state, k1);
  DiscreteMeasure mid = state.particles;
  for (std::size_t i = 0; i < n; ++i) mid.positions[i] += (0.5 * dt) * k1[i];

  // ... then transport is re-solved at the midpoint for the full step.
  KantorovichWeights psi_mid = state.psi;
  std::vector<Vec2> sel_mid;
  solve_and_select(dom, state, mid, psi_mid, opts.ot, sel_mid, opts.node_density);
  const std::vector<Vec2> k2 = velocity_from(state, mid.positions, select(mid.positions, sel_mid));
  track_max_speed(state, k2);

  for (std::size_t i = 0; i < n; ++i) state.particles.positions[i] += dt * k2[i];
  state.psi = psi_mid;  // warm start from the midpoint solution
  solve_and_select(dom, state, state.particles, state.psi, opts.ot, state.centroids, opts.node_density);
  state.t += dt;
  enforce_support(state, dt);
}

FlowState run_flow(const PhysicalDomain& dom, const DiscreteMeasure& alpha0,
                   const RunOptions& opts) {
  if (!(opts.T >= 0.0)) throw std::invalid_argument("run_flow: T must be nonnegative");
  FlowState state = init_flow(dom, alpha0, opts.T, opts.ot, opts.node_density);
  const double dt = opts.dt > 0.0 ? opts.dt : default_dt(state);
  const int stride = std::max(1, opts.save_stride);
  int k = 0;
  while (state.t < opts.T - 1e-12) {
    const double step_dt = std::min(dt, opts.T - state.t);
    step(dom, state, step_dt, opts);
    ++k;
    if (k % stride == 0 || state.t >= opts.T - 1e-12) record_snapshot(state);
  }
  return state;
}

const FlowSnapshot& snapshot_at(const FlowState& state, double t) {
  for (const FlowSnapshot& s : state.history)
    if (std::abs(s.t - t) <= 1e-9) return s;
  throw std::invalid_argument("snapshot_at: time " + std::to_string(t) + " was not saved");
}

std::vector<Vec2> inverse_flow(const FlowState& state, double t) {
  (void)snapshot_at(state, t);  // validate the query time
  return state.history.front().positions;
}

}  // namespace sg
