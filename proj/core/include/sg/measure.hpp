#pragma once

#include <string>
#include <vector>

#include "sg/vec.hpp"

namespace sg {

// Finitely supported nonnegative measure alpha = sum_i m_i delta_{X_i} on
// dual space, with a declared support bound R0 (|X_i| <= R0 at t = 0).
struct DiscreteMeasure {
  std::vector<Vec2> positions;
  std::vector<double> masses;
  double R0 = 0.0;

  std::size_t size() const { return positions.size(); }
};

// Builds a measure, validating masses (> 0) and the support bound, and
// separating exactly coincident particle positions by a deterministic
// index-seeded jitter of magnitude 1e-9 * length_scale.  Pass the domain
// scale S as length_scale when one is in scope; a non-positive value falls
// back to R0 (or 1 if R0 == 0).
DiscreteMeasure make_measure(std::vector<Vec2> positions, std::vector<double> masses,
                             double R0, double length_scale = -1.0);

// Kahan total of the particle masses.
double total_mass(const DiscreteMeasure& mu);

// Largest |X_i| actually attained.
double support_radius(const DiscreteMeasure& mu);

// Exponential-in-time support envelope R(T) = R0 e^T + (e^T - 1) S for a
// measure transported by the cutoff dual velocity.
double support_bound(double R0, double S, double T);

// JSON round trip: {"points": [[x,y],...], "masses": [...], "R0": r}.
std::string measure_to_json(const DiscreteMeasure& mu);
DiscreteMeasure measure_from_json(const std::string& text);
void save_measure(const DiscreteMeasure& mu, const std::string& path);
DiscreteMeasure load_measure(const std::string& path);

}  // namespace sg
