#pragma once

#include <vector>

#include "sg/domain.hpp"
#include "sg/dual_flow.hpp"
#include "sg/grid_field.hpp"

namespace sg {

// Piecewise-constant physical flow sampled on the grid: node -> owning cell
// of the initial tessellation -> that particle's cell centroid at time t.
struct PhysicalFlowField {
  GridField map;
  std::vector<std::int32_t> cell;  // assignment used for the reconstruction
  double t = 0.0;
};

// F_t = (grad P_t^*) o Phi_t o (grad P_0).  t must be a saved snapshot time.
PhysicalFlowField reconstruct_F(const PhysicalDomain& dom, const FlowState& state, double t);

// F_t^* = (grad P_0^*) o Phi_t^* o (grad P_t): node -> cell at time t ->
// particle -> centroid at time 0.
PhysicalFlowField inverse_F(const PhysicalDomain& dom, const FlowState& state, double t);

// x -> F_t^*(F_t(x)) on the grid; distance to the identity is bounded by
// cell granularity.
GridField roundtrip_field(const PhysicalDomain& dom, const FlowState& state, double t);

// Dual position field Z(x, t) = X_{i(x)}(t): the time-t position of the
// particle owning x in the initial tessellation.
GridField z_field(const PhysicalDomain& dom, const FlowState& state, double t);

// Max over a K x K congruent binning of [-S,S]^2 (masked to Omega) of the
// relative gap between the bin mass pushed forward under the sampled map
// and the bin's own quadrature mass.  Zero for the identity map.
double measure_preservation_stat(const PhysicalDomain& dom, const GridField& F, int bins = 5);

// Weak-form transport residual of Z against test functions p(x) b(t) e_d
// with p the degree <= 2 monomials (L^1-normalized) and b smooth time
// profiles vanishing at the final time.  For an exact solution the value is
// O(dt^2) + transport tolerance; time integrals use the saved snapshots.
double z_residual(const PhysicalDomain& dom, const FlowState& state);

// CSV export with header x,y,Fx,Fy,cell — one row per defined node.
void save_flow_field(const PhysicalDomain& dom, const PhysicalFlowField& F,
                     const std::string& path);

}  // namespace sg
