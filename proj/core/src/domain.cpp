#include "sg/domain.hpp"

#include <cmath>

#include "sg/kahan.hpp"

namespace sg {

PhysicalDomain PhysicalDomain::disk(double S, int nq) {
  if (!(S > 0.0)) throw std::invalid_argument("domain: S must be positive");
  return PhysicalDomain(DomainShape::Disk, S, S, S, nq);
}

PhysicalDomain PhysicalDomain::rect(double hx, double hy, int nq) {
  if (!(hx > 0.0) || !(hy > 0.0))
    throw std::invalid_argument("domain: rectangle half-extents must be positive");
  return PhysicalDomain(DomainShape::Rect, std::hypot(hx, hy), hx, hy, nq);
}

PhysicalDomain::PhysicalDomain(DomainShape shape, double S, double hx, double hy, int nq)
    : shape_(shape), S_(S), hx_(hx), hy_(hy), nq_(nq) {
  if (nq < 2) throw std::invalid_argument("domain: quadrature resolution must be >= 2");
  h_ = 2.0 * S_ / nq_;
  const std::size_t n = static_cast<std::size_t>(nq_) * nq_;
  nodes_.resize(n);
  weight_.resize(n);
  inside_.resize(n);
  const double w = h_ * h_;
  KahanSum total;
  for (int iy = 0; iy < nq_; ++iy) {
    const double y = -S_ + (iy + 0.5) * h_;
    for (int ix = 0; ix < nq_; ++ix) {
      const double x = -S_ + (ix + 0.5) * h_;
      const std::size_t k = index(ix, iy);
      nodes_[k] = {x, y};
      const bool in = contains({x, y});
      inside_[k] = in ? 1 : 0;
      weight_[k] = in ? w : 0.0;
      if (in) total.add(w);
    }
  }
  quad_mass_ = total.value();
}

bool PhysicalDomain::contains(Vec2 p) const {
  if (shape_ == DomainShape::Disk) return p.x * p.x + p.y * p.y <= S_ * S_;
  return std::abs(p.x) <= hx_ && std::abs(p.y) <= hy_;
}

double PhysicalDomain::area_exact() const {
  if (shape_ == DomainShape::Disk) return M_PI * S_ * S_;
  return 4.0 * hx_ * hy_;
}

}  // namespace sg
