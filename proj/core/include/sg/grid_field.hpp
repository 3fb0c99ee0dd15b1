#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sg/domain.hpp"
#include "sg/measure.hpp"
#include "sg/vec.hpp"

namespace sg {

// Vector-valued samples on a domain's quadrature grid.  A node may be
// undefined (outside Omega, or not covered by a reconstruction); undefined
// nodes are skipped by every integral below.
struct GridField {
  int nq = 0;
  double S = 0.0;
  std::vector<Vec2> values;
  std::vector<std::uint8_t> defined;

  static GridField empty(const PhysicalDomain& dom);
  // Identity map x -> x on all inside nodes.
  static GridField identity(const PhysicalDomain& dom);

  bool same_frame(const GridField& o) const { return nq == o.nq && S == o.S; }
};

// (integral of w(x) |F - G|^r over nodes where both are defined)^(1/r),
// with r >= 1.  node_scale, if given, multiplies the quadrature weights
// (used for height-weighted distances); it must have one entry per node.
double lr_distance(const PhysicalDomain& dom, const GridField& F, const GridField& G,
                   double r, const std::vector<double>* node_scale = nullptr);

// Total-variation-style gap between the pushforward of the source weights
// under the sampled map and the target measure: each defined node's weight
// is credited to the target particle nearest to its image, and the result
// is sum_i |credited_i - m_i|.
double pushforward_discrepancy(const PhysicalDomain& dom, const GridField& F,
                               const std::vector<double>& source_weights,
                               const DiscreteMeasure& target);

// CSV round trip with header x,y,v1,v2,defined (rows in node order).
void save_grid_field(const PhysicalDomain& dom, const GridField& f, const std::string& path);
GridField load_grid_field(const PhysicalDomain& dom, const std::string& path);

// Scalar samples on the same grid (densities, heights).
struct ScalarField {
  int nq = 0;
  double S = 0.0;
  std::vector<double> values;

  static ScalarField constant(const PhysicalDomain& dom, double c);
};

void save_scalar_field(const PhysicalDomain& dom, const ScalarField& f, const std::string& path);

}  // namespace sg
