#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sg/vec.hpp"

namespace sg {

enum class DomainShape { Disk, Rect };

// Physical domain Omega together with its fixed quadrature grid: nq x nq
// cell-centered nodes on [-S,S]^2, each carrying weight h^2 when its center
// lies inside Omega and 0 otherwise.  Omega is always contained in the
// closed ball of radius S about the origin.
class PhysicalDomain {
 public:
  static PhysicalDomain disk(double S, int nq);
  // Axis-aligned rectangle [-hx,hx] x [-hy,hy]; S = hypot(hx, hy).
  static PhysicalDomain rect(double hx, double hy, int nq);

  DomainShape shape() const { return shape_; }
  double S() const { return S_; }
  int nq() const { return nq_; }
  double h() const { return h_; }

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  const std::vector<double>& node_weight() const { return weight_; }
  const std::vector<std::uint8_t>& inside() const { return inside_; }

  // Kahan total of the node weights; approximates |Omega|.
  double quad_mass() const { return quad_mass_; }
  double area_exact() const;

  bool contains(Vec2 p) const;
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * nq_ + ix;
  }

  // Two grids are interchangeable iff shape, extent and resolution agree.
  bool same_frame(const PhysicalDomain& o) const {
    return shape_ == o.shape_ && S_ == o.S_ && nq_ == o.nq_ && hx_ == o.hx_ && hy_ == o.hy_;
  }

  double hx() const { return hx_; }
  double hy() const { return hy_; }

 private:
  PhysicalDomain(DomainShape shape, double S, double hx, double hy, int nq);

  DomainShape shape_;
  double S_, hx_, hy_;
  int nq_;
  double h_;
  std::vector<Vec2> nodes_;
  std::vector<double> weight_;
  std::vector<std::uint8_t> inside_;
  double quad_mass_ = 0.0;
};

}  // namespace sg
