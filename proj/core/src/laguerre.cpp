#include "sg/laguerre.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sg/kahan.hpp"
#include "sg/parallel.hpp"

#if defined(__GNUC__) || defined(__clang__)
#define SG_RESTRICT __restrict__
#else
#define SG_RESTRICT
#endif

namespace sg {

LaguerreTessellation tessellate(const PhysicalDomain& dom, const std::vector<Vec2>& positions,
                                const KantorovichWeights& w,
                                const std::vector<double>* node_density) {
  const std::size_t n = positions.size();
  if (n == 0) throw std::invalid_argument("tessellate: no particles");
  if (w.psi.size() != n) throw std::invalid_argument("tessellate: psi size mismatch");
  if (node_density && node_density->size() != dom.node_count())
    throw std::invalid_argument("tessellate: node density size mismatch");

  const int nq = dom.nq();
  const double S = dom.S();
  const double h = dom.h();

  LaguerreTessellation tess;
  tess.assignment.assign(dom.node_count(), -1);
  tess.node_best.assign(dom.node_count(), 0.0);
  tess.cell_mass.assign(n, 0.0);
  tess.centroid.assign(n, Vec2{});
  tess.centroid_valid.assign(n, 0);
  tess.node_count.assign(n, 0);

  // SoA copies of the particle data keep the scan streaming.
  std::vector<double> px(n), py(n), ps(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = positions[i].x;
    py[i] = positions[i].y;
    ps[i] = w.psi[i];
  }
  std::vector<double> xs(nq);
  for (int ix = 0; ix < nq; ++ix) xs[ix] = -S + (ix + 0.5) * h;

  // Row-major scan, particles outer within a row so the inner loop is a
  // contiguous compare-and-blend the compiler can vectorize.  Ascending
  // particle order with a strict compare resolves ties to the lowest index.
  parallel_ranges(static_cast<std::size_t>(nq), [&](std::size_t row_lo, std::size_t row_hi) {
    std::vector<double> best(nq);
    std::vector<std::int32_t> bidx(nq);
    for (std::size_t iy = row_lo; iy < row_hi; ++iy) {
      const double y = -S + (iy + 0.5) * h;
      std::fill(best.begin(), best.end(), -std::numeric_limits<double>::infinity());
      std::fill(bidx.begin(), bidx.end(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        const double a = px[i];
        const double c = y * py[i] - ps[i];
        const std::int32_t ii = static_cast<std::int32_t>(i);
        double* SG_RESTRICT bp = best.data();
        std::int32_t* SG_RESTRICT ip = bidx.data();
        const double* SG_RESTRICT xp = xs.data();
        for (int ix = 0; ix < nq; ++ix) {
          const double s = xp[ix] * a + c;
          if (s > bp[ix]) {
            bp[ix] = s;
            ip[ix] = ii;
          }
        }
      }
      const std::size_t base = iy * static_cast<std::size_t>(nq);
      for (int ix = 0; ix < nq; ++ix) {
        const std::size_t k = base + ix;
        if (dom.inside()[k]) {
          tess.assignment[k] = bidx[ix];
          tess.node_best[k] = best[ix];
        }
      }
    }
  });

  // Serial reductions in node order: masses, centroids and the potential
  // integral are exactly reproducible regardless of the thread count.
  std::vector<KahanSum> mass(n), cx(n), cy(n);
  KahanSum ip_total, m_total;
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const std::int32_t i = tess.assignment[k];
    if (i < 0) continue;
    double wk = dom.node_weight()[k];
    if (node_density) wk *= (*node_density)[k];
    tess.node_count[i] += 1;
    if (wk == 0.0) continue;
    mass[i].add(wk);
    cx[i].add(wk * dom.nodes()[k].x);
    cy[i].add(wk * dom.nodes()[k].y);
    ip_total.add(wk * tess.node_best[k]);
    m_total.add(wk);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double m = mass[i].value();
    tess.cell_mass[i] = m;
    if (m > 0.0) {
      tess.centroid[i] = {cx[i].value() / m, cy[i].value() / m};
      tess.centroid_valid[i] = 1;
    }
  }
  tess.integral_P = ip_total.value();
  tess.mass_total = m_total.value();
  return tess;
}

std::vector<Vec2> cell_centroid_map(const LaguerreTessellation& tess) {
  for (std::size_t i = 0; i < tess.cells(); ++i)
    if (!tess.centroid_valid[i]) throw DegenerateCell(i);
  return tess.centroid;
}

double mean_cell_diameter(const PhysicalDomain& dom, const LaguerreTessellation& tess) {
  const std::size_t n = tess.cells();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> xlo(n, inf), xhi(n, -inf), ylo(n, inf), yhi(n, -inf);
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const std::int32_t i = tess.assignment[k];
    if (i < 0) continue;
    const Vec2 p = dom.nodes()[k];
    xlo[i] = std::min(xlo[i], p.x);
    xhi[i] = std::max(xhi[i], p.x);
    ylo[i] = std::min(ylo[i], p.y);
    yhi[i] = std::max(yhi[i], p.y);
  }
  KahanSum acc;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tess.node_count[i] == 0) continue;
    acc.add(std::hypot(xhi[i] - xlo[i], yhi[i] - ylo[i]));
    ++counted;
  }
  return counted == 0 ? 0.0 : acc.value() / static_cast<double>(counted);
}

}  // namespace sg
