#pragma once

#include <cstdint>

namespace sg {

// Van der Corput radical inverse; halton(i,2) x halton(i,3) fills the unit
// square far more evenly than pseudo-random draws at the sample counts used
// here, which keeps patch centroids tight at small particle counts.
inline double halton(std::uint64_t index, std::uint32_t base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

}  // namespace sg
