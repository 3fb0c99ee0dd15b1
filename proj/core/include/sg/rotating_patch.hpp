#pragma once

#include <cstdint>

#include "sg/measure.hpp"
#include "sg/vec.hpp"

namespace sg {

// Closed-form rotating-patch solution on the unit disk: the dual measure is
// the uniform patch of total mass pi on the ball of radius eps about a
// center that circles the origin at unit speed, and every quantity below is
// known exactly.  This family is the reference oracle for the solver: as
// eps -> 0 the patch spins at rate (eps - 1)/eps -> -infinity.
namespace rotating_patch {

// Patch center z(t) = (cos t, sin t).
Vec2 center(double t);

// Interior spin rate (eps - 1)/eps of the patch about its center.
double angular_rate(double eps);

// Gradient of the exact potential: grad P(x) = z(t) + eps x.
Vec2 exact_grad_p(Vec2 x, double t, double eps);

// Exact potential P(x) = z(t) . x + eps |x|^2 / 2.
double exact_p(Vec2 x, double t, double eps);

// Exact conjugate: |Y-z|^2 / (2 eps) inside the patch, |Y-z| - eps/2 outside.
double exact_p_star(Vec2 Y, double t, double eps);

// Gradient of the conjugate: (Y-z)/eps inside the patch, (Y-z)/|Y-z| outside.
Vec2 exact_grad_p_star(Vec2 Y, double t, double eps);

// Dual-space flow: y0 at time 0 moves to z(t) + R_theta (y0 - z(0)) with
// theta = angular_rate(eps) * t.
Vec2 exact_dual_flow(Vec2 y0, double t, double eps);

// Physical flow: rigid rotation x -> R_theta x, theta = angular_rate(eps) t.
Vec2 exact_physical_flow(Vec2 x, double t, double eps);

// n equal-mass particles (total mass pi) sampling the patch at time t.
// Low-discrepancy placement by default; uniform pseudo-random when
// random_sampling is set.  seed offsets the low-discrepancy sequence and
// seeds the random generator.
DiscreteMeasure sample_patch(double eps, double t, std::size_t n, std::uint64_t seed = 1,
                             bool random_sampling = false);

}  // namespace rotating_patch
}  // namespace sg
