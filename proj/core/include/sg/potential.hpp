#pragma once

#include <string>
#include <vector>

#include "sg/domain.hpp"
#include "sg/laguerre.hpp"
#include "sg/measure.hpp"
#include "sg/vec.hpp"

namespace sg {

// Max-affine convex potential P(x) = max_i (x . X_i - psi_i): slopes are the
// particle positions, intercepts are -psi_i.
struct ConvexPotential {
  std::vector<Vec2> slopes;
  std::vector<double> psi;

  std::size_t size() const { return slopes.size(); }
  // Index of the active affine piece; ties resolve to the lowest index.
  std::size_t argmax(Vec2 x) const;
  double eval(Vec2 x) const;
  // Subdifferential selection at x: the slope of the active piece.
  Vec2 grad(Vec2 x) const;
};

ConvexPotential make_potential(const DiscreteMeasure& mu, const KantorovichWeights& w);

// Pointwise values and subdifferential selections of the conjugate P* at the
// particle positions: P*(X_i) = psi_i (gauge psi_0 = 0) and the selected
// gradient is the centroid of cell i.
struct LegendreDual {
  std::vector<double> values;
  std::vector<Vec2> selection;
  std::vector<std::uint8_t> valid;
};

LegendreDual legendre_dual(const ConvexPotential& pot, const LaguerreTessellation& tess);

// sup over inside quadrature nodes of x . Y - P(x); lower bound on P*(Y)
// exact to O(h) for Y in the transported support.
double legendre_numeric(const PhysicalDomain& dom, const ConvexPotential& pot, Vec2 Y);

// Selection of a conjugate subgradient at an arbitrary dual point: the
// centroid attached to the particle nearest to Y in the power metric
// |Y - X_i|^2 - 2 psi_i.  At Y = X_i this returns the cell centroid.
Vec2 grad_p_star(const ConvexPotential& pot, const LegendreDual& dual, Vec2 Y);

// P(x) + P*(Y) - x . Y with P* evaluated by legendre_numeric; nonnegative
// up to quadrature error, and zero (exactly) at Y = grad P(x) when x lies
// in a cell with quadrature support.
double fenchel_gap(const PhysicalDomain& dom, const ConvexPotential& pot, Vec2 x, Vec2 Y);

// JSON round trip: {"slopes": [[x,y],...], "intercepts": [...], "gauge": 0}.
std::string potential_to_json(const ConvexPotential& pot);
ConvexPotential potential_from_json(const std::string& text);

}  // namespace sg
