#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sg/domain.hpp"
#include "sg/measure.hpp"
#include "sg/vec.hpp"

namespace sg {

// Dual weights for the max-affine potential P(x) = max_i (x . X_i - psi_i).
// Adding a constant to every psi_i changes nothing observable; the solver
// pins psi_0 = 0 as the gauge.
struct KantorovichWeights {
  std::vector<double> psi;

  void gauge_fix() {
    if (psi.empty()) return;
    const double p0 = psi[0];
    for (double& p : psi) p -= p0;
  }
};

// An empty cell where a positive mass is required.  Raised when a selection
// (centroid) is demanded for a cell that owns no quadrature mass.
struct DegenerateCell : std::runtime_error {
  std::size_t cell;
  explicit DegenerateCell(std::size_t i)
      : std::runtime_error("degenerate cell: particle " + std::to_string(i) +
                           " owns no quadrature mass"),
        cell(i) {}
};

// A cell that owns territory whose source density vanishes identically, so
// no weight adjustment can feed it (weighted transport only).
struct ZeroMassRegion : std::runtime_error {
  std::size_t cell;
  explicit ZeroMassRegion(std::size_t i)
      : std::runtime_error("zero-mass region: particle " + std::to_string(i) +
                           " is confined to territory with vanishing source density"),
        cell(i) {}
};

// One node->particle decomposition of the domain: node k belongs to the
// particle maximizing x_k . X_i - psi_i (ties to the lowest index).
struct LaguerreTessellation {
  std::vector<std::int32_t> assignment;  // -1 outside Omega
  std::vector<double> node_best;         // attained max score per node
  std::vector<double> cell_mass;         // quadrature mass owned by each cell
  std::vector<Vec2> centroid;            // weight-averaged node position
  std::vector<std::uint8_t> centroid_valid;
  std::vector<std::int64_t> node_count;
  double integral_P = 0.0;  // weighted integral of the max score over Omega
  double mass_total = 0.0;

  std::size_t cells() const { return cell_mass.size(); }
  bool has_empty() const {
    for (double m : cell_mass)
      if (m == 0.0) return true;
    return false;
  }
};

// Brute-force assignment: every inside node scans every particle.  O(nq^2 N)
// on purpose -- transparent, exactly reproducible, and fast enough at desk
// scale once vectorized.  node_density, if given, scales each node's
// quadrature weight (weighted transport); it must have one entry per node.
LaguerreTessellation tessellate(const PhysicalDomain& dom, const std::vector<Vec2>& positions,
                                const KantorovichWeights& w,
                                const std::vector<double>* node_density = nullptr);

inline LaguerreTessellation tessellate(const PhysicalDomain& dom, const DiscreteMeasure& mu,
                                       const KantorovichWeights& w,
                                       const std::vector<double>* node_density = nullptr) {
  return tessellate(dom, mu.positions, w, node_density);
}

// Per-particle subdifferential selection: the centroid of each cell.
// Throws DegenerateCell if any cell has no mass.
std::vector<Vec2> cell_centroid_map(const LaguerreTessellation& tess);

// Mean over cells of the bounding-box diagonal of the cell's nodes; the
// working definition of "mean cell diameter" for reconstruction bounds.
double mean_cell_diameter(const PhysicalDomain& dom, const LaguerreTessellation& tess);

}  // namespace sg
