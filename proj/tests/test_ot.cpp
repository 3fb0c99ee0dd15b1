// Laguerre tessellation and the damped-Newton transport solver.
//
// VALIDATES:
//   - symmetric 2-particle split: cells are half disks, centroids at the
//     half-disk value 4/(3*pi) from the axis (oracle: direct quadrature
//     computed independently in this file)
//   - equilateral 3-particle split carries pi/3 per cell
//   - gauge invariance and the linear scaling identity of the assignment
//   - weight monotonicity: raising psi_i never grows cell i
//   - cold-start convergence to tolerance, warm restarts, empty-cell repair
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sg/domain.hpp>
#include <sg/laguerre.hpp>
#include <sg/measure.hpp>
#include <sg/ot_solver.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent membership-quadrature oracle for the mass and centroid of
// {x in disk : x.d > 0}, written against the same grid the tessellation
// uses but without any Laguerre machinery.
struct HalfDiskOracle {
  double mass = 0.0;
  sg::Vec2 centroid{0.0, 0.0};
};

HalfDiskOracle half_disk(const sg::PhysicalDomain& dom, sg::Vec2 d) {
  HalfDiskOracle out;
  double sx = 0.0, sy = 0.0;
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const double w = dom.node_weight()[k];
    if (w == 0.0) continue;
    if (sg::dot(dom.nodes()[k], d) <= 0.0) continue;
    out.mass += w;
    sx += w * dom.nodes()[k].x;
    sy += w * dom.nodes()[k].y;
  }
  out.centroid = {sx / out.mass, sy / out.mass};
  return out;
}

std::vector<sg::Vec2> ring(std::size_t n, double r, double phase = 0.0) {
  std::vector<sg::Vec2> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = phase + 2.0 * kPi * double(i) / double(n);
    p[i] = {r * std::cos(th), r * std::sin(th)};
  }
  return p;
}

}  // namespace

TEST_CASE("two symmetric particles split the disk into half disks") {
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 192);
  const std::vector<sg::Vec2> pos{{0.4, 0.0}, {-0.4, 0.0}};
  sg::KantorovichWeights w;
  w.psi = {0.0, 0.0};
  const sg::LaguerreTessellation tess = sg::tessellate(dom, pos, w);

  // Equal weights and mirrored particles: the boundary is the y-axis, so
  // each cell is a half disk.  Compare against the direct oracle node for
  // node: identical membership, so only summation-order rounding remains.
  const HalfDiskOracle right = half_disk(dom, {1.0, 0.0});
  CHECK(tess.cell_mass[0] == doctest::Approx(right.mass).epsilon(1e-12));
  CHECK(tess.centroid[0].x == doctest::Approx(right.centroid.x).epsilon(1e-12));
  CHECK(std::abs(tess.centroid[0].y) <= 1e-12);

  // And the oracle itself converges to the closed form 4/(3*pi).
  CHECK(right.centroid.x == doctest::Approx(4.0 / (3.0 * kPi)).epsilon(0.01));
  CHECK(tess.mass_total == doctest::Approx(dom.quad_mass()).epsilon(1e-12));
}

TEST_CASE("equilateral 3-particle configuration gets pi/3 per cell") {
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 192);
  sg::KantorovichWeights w;
  w.psi = {0.0, 0.0, 0.0};
  // A phase that avoids grid-aligned cell boundaries (exact ties).
  const sg::LaguerreTessellation tess = sg::tessellate(dom, ring(3, 0.5, 0.31), w);
  const double third = dom.quad_mass() / 3.0;
  for (int i = 0; i < 3; ++i)
    CHECK(tess.cell_mass[i] == doctest::Approx(third).epsilon(4.0 * dom.h()));
}

TEST_CASE("assignment is gauge invariant and scales linearly") {
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 96);
  const std::vector<sg::Vec2> pos = ring(7, 0.6, 0.17);
  sg::KantorovichWeights w;
  w.psi = {0.01, -0.02, 0.005, 0.0, 0.03, -0.015, 0.02};

  const sg::LaguerreTessellation base = sg::tessellate(dom, pos, w);

  sg::KantorovichWeights shifted;
  for (double p : w.psi) shifted.psi.push_back(p + 123.456);
  const sg::LaguerreTessellation sh = sg::tessellate(dom, pos, shifted);
  CHECK(sh.assignment == base.assignment);

  // x.(sX) - s*psi = s(x.X - psi): scaling positions and weights together
  // by the same factor preserves the argmax.
  const double s = 0.37;
  std::vector<sg::Vec2> spos;
  sg::KantorovichWeights sw;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    spos.push_back(s * pos[i]);
    sw.psi.push_back(s * w.psi[i]);
  }
  const sg::LaguerreTessellation sc = sg::tessellate(dom, spos, sw);
  CHECK(sc.assignment == base.assignment);
}

TEST_CASE("raising a weight never grows its cell") {
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 96);
  const std::vector<sg::Vec2> pos = ring(5, 0.5, 0.11);
  sg::KantorovichWeights w;
  w.psi.assign(5, 0.0);
  const sg::LaguerreTessellation before = sg::tessellate(dom, pos, w);
  for (double bump : {1e-3, 1e-2, 0.1}) {
    sg::KantorovichWeights up = w;
    up.psi[2] += bump;
    const sg::LaguerreTessellation after = sg::tessellate(dom, pos, up);
    CHECK(after.cell_mass[2] <= before.cell_mass[2]);
    // Everyone else can only gain.
    for (int i : {0, 1, 3, 4}) CHECK(after.cell_mass[i] >= before.cell_mass[i]);
  }
}

TEST_CASE("cold-start solve hits tolerance with balanced targets") {
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 128);
  // Random-ish but deterministic cloud with unequal masses.
  std::vector<sg::Vec2> pos;
  std::vector<double> mass;
  for (int i = 0; i < 16; ++i) {
    const double th = 2.399963 * i;  // golden-angle spiral
    const double r = 0.85 * std::sqrt((i + 0.5) / 16.0);
    pos.push_back({r * std::cos(th), r * std::sin(th)});
    mass.push_back(1.0 + 0.5 * std::sin(3.0 * i));
  }
  const sg::DiscreteMeasure mu = sg::make_measure(pos, mass, 1.0, 1.0);

  sg::SolveOptions opts;
  opts.tol = 1e-3;
  sg::KantorovichWeights w;
  const sg::SolveReport rep = sg::solve_weights(dom, mu, w, opts);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 50);
  CHECK(rep.final_error <= opts.tol);

  // Per-cell masses match the rescaled targets within the tolerance.
  const double scale = dom.quad_mass() / sg::total_mass(mu);
  for (std::size_t i = 0; i < mu.size(); ++i)
    CHECK(std::abs(rep.tess.cell_mass[i] - mu.masses[i] * scale) <=
          opts.tol * dom.quad_mass());

  // A warm restart from the solution converges immediately.
  sg::KantorovichWeights warm = w;
  const sg::SolveReport rewarm = sg::solve_weights(dom, mu, warm, opts);
  CHECK(rewarm.converged);
  CHECK(rewarm.iterations <= 2);
}

TEST_CASE("solver revives a frozen-out cell") {
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 96);
  const std::vector<sg::Vec2> pos = ring(6, 0.5, 0.23);
  const sg::DiscreteMeasure mu =
      sg::make_measure(pos, std::vector<double>(6, 1.0), 1.0, 1.0);

  sg::KantorovichWeights w;
  w.psi.assign(6, 0.0);
  w.psi[3] = 50.0;  // cell 3 starts empty by construction
  REQUIRE(sg::tessellate(dom, pos, w).cell_mass[3] == 0.0);

  sg::SolveOptions opts;
  opts.tol = 1e-3;
  const sg::SolveReport rep = sg::solve_weights(dom, mu, w, opts);
  CHECK(rep.converged);
  CHECK(rep.repairs >= 1);
  CHECK(rep.tess.cell_mass[3] == doctest::Approx(dom.quad_mass() / 6.0)
                                     .epsilon(opts.tol * 6.0));
}

TEST_CASE("tessellation handles a particle with a far-off weight gracefully") {
  // mean_cell_diameter and centroid flags stay consistent on a lopsided
  // configuration: one dominant cell, several slivers.
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 96);
  const std::vector<sg::Vec2> pos = ring(4, 0.3, 0.05);
  sg::KantorovichWeights w;
  w.psi = {-0.5, 0.0, 0.0, 0.0};  // cell 0 dominates
  const sg::LaguerreTessellation tess = sg::tessellate(dom, pos, w);
  CHECK(tess.cell_mass[0] > tess.cell_mass[1]);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK((tess.centroid_valid[i] != 0) == (tess.cell_mass[i] > 0.0));
  if (!tess.has_empty()) {
    CHECK(sg::mean_cell_diameter(dom, tess) > 0.0);
    CHECK(sg::mean_cell_diameter(dom, tess) <= 2.0 * std::sqrt(2.0) + 1e-12);
  }
}
