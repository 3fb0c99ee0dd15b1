#include "sg/physical_flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sg/io.hpp"
#include "sg/kahan.hpp"

namespace sg {

namespace {

LaguerreTessellation tessellation_at(const PhysicalDomain& dom, const FlowSnapshot& snap) {
  KantorovichWeights w{snap.psi};
  return tessellate(dom, snap.positions, w);
}

PhysicalFlowField project_through(const PhysicalDomain& dom, const FlowSnapshot& assign_snap,
                                  const FlowSnapshot& image_snap) {
  const LaguerreTessellation tess = tessellation_at(dom, assign_snap);
  PhysicalFlowField out;
  out.map = GridField::empty(dom);
  out.cell = tess.assignment;
  out.t = image_snap.t;
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const std::int32_t i = tess.assignment[k];
    if (i < 0) continue;
    out.map.values[k] = image_snap.centroids[i];
    out.map.defined[k] = 1;
  }
  return out;
}

}  // namespace

PhysicalFlowField reconstruct_F(const PhysicalDomain& dom, const FlowState& state, double t) {
  return project_through(dom, state.history.front(), snapshot_at(state, t));
}

PhysicalFlowField inverse_F(const PhysicalDomain& dom, const FlowState& state, double t) {
  PhysicalFlowField out = project_through(dom, snapshot_at(state, t), state.history.front());
  out.t = t;  // the map inverts F_t even though its images live at time 0
  return out;
}

GridField roundtrip_field(const PhysicalDomain& dom, const FlowState& state, double t) {
  const PhysicalFlowField fwd = reconstruct_F(dom, state, t);
  const FlowSnapshot& snap_t = snapshot_at(state, t);
  const FlowSnapshot& snap_0 = state.history.front();

  // Assign each forward image to its cell at time t by the same score rule
  // the tessellation uses, then project back to the initial centroid.
  GridField out = GridField::empty(dom);
  const std::size_t n = snap_t.positions.size();
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (!fwd.map.defined[k]) continue;
    const Vec2 y = fwd.map.values[k];
    std::size_t best = 0;
    double sbest = dot(y, snap_t.positions[0]) - snap_t.psi[0];
    for (std::size_t i = 1; i < n; ++i) {
      const double s = dot(y, snap_t.positions[i]) - snap_t.psi[i];
      if (s > sbest) {
        sbest = s;
        best = i;
      }
    }
    out.values[k] = snap_0.centroids[best];
    out.defined[k] = 1;
  }
  return out;
}

GridField z_field(const PhysicalDomain& dom, const FlowState& state, double t) {
  const FlowSnapshot& snap = snapshot_at(state, t);
  const LaguerreTessellation tess = tessellation_at(dom, state.history.front());
  GridField out = GridField::empty(dom);
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const std::int32_t i = tess.assignment[k];
    if (i < 0) continue;
    out.values[k] = snap.positions[i];
    out.defined[k] = 1;
  }
  return out;
}

double measure_preservation_stat(const PhysicalDomain& dom, const GridField& F, int bins) {
  if (bins < 1) throw std::invalid_argument("measure_preservation_stat: bins must be >= 1");
  const double S = dom.S();
  const double wbin = 2.0 * S / bins;
  const std::size_t nb = static_cast<std::size_t>(bins) * bins;
  auto bin_of = [&](Vec2 p) -> std::size_t {
    int bx = static_cast<int>(std::floor((p.x + S) / wbin));
    int by = static_cast<int>(std::floor((p.y + S) / wbin));
    bx = std::clamp(bx, 0, bins - 1);
    by = std::clamp(by, 0, bins - 1);
    return static_cast<std::size_t>(by) * bins + bx;
  };
  std::vector<KahanSum> area(nb), pushed(nb);
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const double w = dom.node_weight()[k];
    if (w == 0.0 || !F.defined[k]) continue;
    area[bin_of(dom.nodes()[k])].add(w);
    pushed[bin_of(F.values[k])].add(w);
  }
  double worst = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const double a = area[b].value();
    if (a <= 0.0) continue;
    worst = std::max(worst, std::abs(pushed[b].value() - a) / a);
  }
  return worst;
}

double z_residual(const PhysicalDomain& dom, const FlowState& state) {
  if (state.history.size() < 2)
    throw std::invalid_argument("z_residual: need at least two snapshots");
  const double T = state.history.back().t;
  const std::size_t n = state.size();

  // Degree <= 2 monomials, L^1(Omega)-normalized, integrated over the cells
  // of the initial tessellation.
  const LaguerreTessellation tess0 = tessellation_at(dom, state.history.front());
  auto monomial = [](int p, Vec2 x) -> double {
    switch (p) {
      case 0: return 1.0;
      case 1: return x.x;
      case 2: return x.y;
      case 3: return x.x * x.x;
      case 4: return x.x * x.y;
      default: return x.y * x.y;
    }
  };
  constexpr int kPolys = 6;
  std::vector<std::vector<double>> cell_weight(kPolys, std::vector<double>(n, 0.0));
  for (int p = 0; p < kPolys; ++p) {
    std::vector<KahanSum> acc(n);
    KahanSum l1;
    for (std::size_t k = 0; k < dom.node_count(); ++k) {
      const std::int32_t i = tess0.assignment[k];
      const double w = dom.node_weight()[k];
      if (i < 0 || w == 0.0) continue;
      const double v = monomial(p, dom.nodes()[k]);
      acc[i].add(w * v);
      l1.add(w * std::abs(v));
    }
    const double scale = l1.value();
    for (std::size_t i = 0; i < n; ++i) cell_weight[p][i] = acc[i].value() / scale;
  }

  // Two C^1 time profiles vanishing at T: one alive at t = 0 (exercises the
  // initial term), one vanishing at both ends.
  struct Bump {
    double (*b)(double, double);
    double (*db)(double, double);
  };
  static const Bump bumps[2] = {
      {[](double t, double T) { const double c = std::cos(0.5 * M_PI * t / T); return c * c; },
       [](double t, double T) { return -0.5 * M_PI / T * std::sin(M_PI * t / T); }},
      {[](double t, double T) { const double s = std::sin(M_PI * t / T); return s * s; },
       [](double t, double T) { return M_PI / T * std::sin(2.0 * M_PI * t / T); }},
  };

  // Per snapshot and per test function, reduce over particles first:
  //   A[p](t) = sum_i w_i^p X_i(t),  B[p](t) = sum_i w_i^p perp(X_i - c_i)(t).
  const std::size_t ns = state.history.size();
  std::vector<std::vector<Vec2>> A(kPolys, std::vector<Vec2>(ns)), B(kPolys, std::vector<Vec2>(ns));
  for (std::size_t s = 0; s < ns; ++s) {
    const FlowSnapshot& snap = state.history[s];
    for (int p = 0; p < kPolys; ++p) {
      KahanSum ax, ay, bx, by;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = cell_weight[p][i];
        const Vec2 X = snap.positions[i];
        const Vec2 v = perp(X - snap.centroids[i]);
        ax.add(w * X.x);
        ay.add(w * X.y);
        bx.add(w * v.x);
        by.add(w * v.y);
      }
      A[p][s] = {ax.value(), ay.value()};
      B[p][s] = {bx.value(), by.value()};
    }
  }

  // Trapezoid in time of A b' + B b, plus the initial term A(0) b(0).
  double worst = 0.0;
  for (int p = 0; p < kPolys; ++p) {
    for (const Bump& bump : bumps) {
      KahanSum ix, iy;
      for (std::size_t s = 0; s + 1 < ns; ++s) {
        const double t0 = state.history[s].t, t1 = state.history[s + 1].t;
        const double half = 0.5 * (t1 - t0);
        const Vec2 f0 = bump.db(t0, T) * A[p][s] + bump.b(t0, T) * B[p][s];
        const Vec2 f1 = bump.db(t1, T) * A[p][s + 1] + bump.b(t1, T) * B[p][s + 1];
        ix.add(half * (f0.x + f1.x));
        iy.add(half * (f0.y + f1.y));
      }
      const Vec2 init = bump.b(0.0, T) * A[p][0];
      worst = std::max({worst, std::abs(ix.value() + init.x), std::abs(iy.value() + init.y)});
    }
  }
  return worst;
}

void save_flow_field(const PhysicalDomain& dom, const PhysicalFlowField& F,
                     const std::string& path) {
  std::ostringstream os;
  os << "x,y,Fx,Fy,cell\n";
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (!F.map.defined[k]) continue;
    const Vec2 x = dom.nodes()[k];
    os << fmt_double(x.x) << ',' << fmt_double(x.y) << ',' << fmt_double(F.map.values[k].x)
       << ',' << fmt_double(F.map.values[k].y) << ',' << F.cell[k] << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace sg
