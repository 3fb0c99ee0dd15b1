#include "sg/shallow_water.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sg/io.hpp"
#include "sg/kahan.hpp"
#include "sg/potential.hpp"

namespace sg {

HeightField HeightField::uniform(const PhysicalDomain& dom, double value) {
  if (!(value >= 0.0)) throw std::invalid_argument("height field: value must be nonnegative");
  return HeightField{ScalarField::constant(dom, value)};
}

double HeightField::total(const PhysicalDomain& dom) const {
  if (h.values.size() != dom.node_count())
    throw std::invalid_argument("height field: grid size mismatch");
  KahanSum acc;
  for (std::size_t k = 0; k < dom.node_count(); ++k)
    acc.add(dom.node_weight()[k] * h.values[k]);
  return acc.value();
}

double HeightField::convexity_defect(const PhysicalDomain& dom) const {
  if (h.values.size() != dom.node_count())
    throw std::invalid_argument("height field: grid size mismatch");
  const int nq = dom.nq();
  auto P = [&](std::size_t k) {
    return h.values[k] + 0.5 * norm2(dom.nodes()[k]);
  };
  double worst = 0.0;
  for (int iy = 0; iy < nq; ++iy) {
    for (int ix = 0; ix < nq; ++ix) {
      const std::size_t k = dom.index(ix, iy);
      if (!dom.inside()[k]) continue;
      if (ix > 0 && ix + 1 < nq) {
        const std::size_t l = dom.index(ix - 1, iy), r = dom.index(ix + 1, iy);
        if (dom.inside()[l] && dom.inside()[r])
          worst = std::max(worst, 2.0 * P(k) - P(l) - P(r));
      }
      if (iy > 0 && iy + 1 < nq) {
        const std::size_t d = dom.index(ix, iy - 1), u = dom.index(ix, iy + 1);
        if (dom.inside()[d] && dom.inside()[u])
          worst = std::max(worst, 2.0 * P(k) - P(d) - P(u));
      }
    }
  }
  return std::max(worst, 0.0);
}

SolveReport solve_weighted_ot(const PhysicalDomain& dom, const HeightField& h,
                              const DiscreteMeasure& mu, KantorovichWeights& w,
                              const SolveOptions& opts) {
  if (h.h.values.size() != dom.node_count())
    throw std::invalid_argument("solve_weighted_ot: height grid size mismatch");
  for (double v : h.h.values)
    if (!(v >= 0.0)) throw std::invalid_argument("solve_weighted_ot: height must be nonnegative");
  return solve_weights(dom, mu, w, opts, &h.h.values);
}

std::vector<Vec2> sw_dual_velocity(const FlowState& state) { return dual_velocity(state); }

namespace {

// Constant c such that the clamped height clamp(P + c - |x|^2/2, 0)
// integrates to target over the quadrature grid.  g(c) is continuous,
// nondecreasing and piecewise linear, so bisection is exact up to the
// interval tolerance.
double bisect_level(const PhysicalDomain& dom, const std::vector<double>& pvals, double target) {
  double pmin = 0.0, pmax = 0.0;
  bool seen = false;
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (dom.node_weight()[k] == 0.0) continue;
    if (!seen) {
      pmin = pmax = pvals[k];
      seen = true;
    } else {
      pmin = std::min(pmin, pvals[k]);
      pmax = std::max(pmax, pvals[k]);
    }
  }
  if (!seen) throw std::invalid_argument("height update: empty quadrature grid");

  auto clamped_total = [&](double c) {
    KahanSum acc;
    for (std::size_t k = 0; k < dom.node_count(); ++k) {
      const double w = dom.node_weight()[k];
      if (w == 0.0) continue;
      acc.add(w * std::max(pvals[k] + c, 0.0));
    }
    return acc.value();
  };

  double lo = -pmax;                                       // total 0
  double hi = -pmin + target / dom.quad_mass() + 1.0;      // total > target
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = clamped_total(mid);
    if (std::abs(g - target) <= 1e-12 * std::max(target, 1.0)) return mid;
    if (g < target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * (std::abs(lo) + std::abs(hi) + 1.0)) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SwIterateStatus sw_consistency_iterate(const PhysicalDomain& dom, const DiscreteMeasure& mu,
                                       KantorovichWeights& w, HeightField& h,
                                       const SwFixedPointOptions& fp, const SolveOptions& ot) {
  if (!(fp.damping > 0.0 && fp.damping <= 1.0))
    throw std::invalid_argument("sw_consistency_iterate: damping must lie in (0, 1]");
  if (h.h.values.size() != dom.node_count())
    throw std::invalid_argument("sw_consistency_iterate: height grid size mismatch");

  SwIterateStatus st;
  const double volume = h.total(dom);
  if (!(volume > 0.0))
    throw std::invalid_argument("sw_consistency_iterate: height carries no volume");

  std::vector<double> pvals(dom.node_count(), 0.0);
  for (int outer = 0; outer < fp.max_outer; ++outer) {
    SolveReport rep;
    try {
      rep = solve_weighted_ot(dom, h, mu, w, ot);
    } catch (const NonConvergence& e) {
      st.message = e.what();
      break;
    } catch (const ZeroMassRegion& e) {
      st.message = e.what();
      break;
    }
    ++st.outer_iters;

    // P at a node is the affine piece of its owning cell; the assignment is
    // exactly the argmax of the max-affine potential.
    const ConvexPotential pot = make_potential(mu, w);
    for (std::size_t k = 0; k < dom.node_count(); ++k) {
      if (dom.node_weight()[k] == 0.0) continue;
      const std::int32_t i = rep.tess.assignment[k];
      const Vec2 x = dom.nodes()[k];
      const double P =
          i >= 0 ? dot(x, pot.slopes[static_cast<std::size_t>(i)]) - pot.psi[static_cast<std::size_t>(i)]
                 : pot.eval(x);
      pvals[k] = P - 0.5 * norm2(x);
    }

    const double c = bisect_level(dom, pvals, volume);

    // Fixed-point defect, clamp activity, and the damped update.
    KahanSum defect;
    std::size_t inside_count = 0, clamped = 0;
    for (std::size_t k = 0; k < dom.node_count(); ++k) {
      const double wq = dom.node_weight()[k];
      if (wq == 0.0) continue;
      ++inside_count;
      const double raw = pvals[k] + c;
      if (raw < 0.0) ++clamped;
      defect.add(wq * std::abs(std::max(raw, 0.0) - h.h.values[k]));
    }
    const double residual = defect.value() / volume;
    st.residuals.push_back(residual);
    st.clamp_fraction =
        inside_count > 0 ? static_cast<double>(clamped) / static_cast<double>(inside_count) : 0.0;

    for (std::size_t k = 0; k < dom.node_count(); ++k) {
      if (dom.node_weight()[k] == 0.0) {
        h.h.values[k] = 0.0;
        continue;
      }
      const double target = std::max(pvals[k] + c, 0.0);
      h.h.values[k] += fp.damping * (target - h.h.values[k]);
    }
    const double mixed = h.total(dom);
    const double renorm = mixed > 0.0 ? volume / mixed : 1.0;
    st.renorm_factors.push_back(renorm);
    for (std::size_t k = 0; k < dom.node_count(); ++k) h.h.values[k] *= renorm;

    if (residual <= fp.tol) {
      st.converged = true;
      break;
    }
  }
  if (!st.converged && st.message.empty())
    st.message = "fixed point did not reach tolerance within the outer budget";
  return st;
}

SwIterateStatus sw_refit(const PhysicalDomain& dom, FlowState& flow, HeightField& h,
                         const SwFixedPointOptions& fp, const SolveOptions& ot) {
  SwIterateStatus st = sw_consistency_iterate(dom, flow.particles, flow.psi, h, fp, ot);
  SolveReport rep = solve_weighted_ot(dom, h, flow.particles, flow.psi, ot);
  flow.centroids = cell_centroid_map(rep.tess);
  ++flow.ot_solves;
  flow.ot_iterations += rep.iterations;
  flow.ot_iterations_max = std::max(flow.ot_iterations_max, rep.iterations);
  return st;
}

namespace {

void push_snapshot(FlowState& state) {
  state.history.push_back({state.t, state.particles.positions, state.psi.psi, state.centroids});
}

void refit_height(const PhysicalDomain& dom, ShallowRun& run, HeightField& h,
                  const SwFixedPointOptions& fp, const SolveOptions& ot) {
  run.statuses.push_back(sw_refit(dom, run.flow, h, fp, ot));
  run.height_times.push_back(run.flow.t);
  run.heights.push_back(h.h);
}

}  // namespace

ShallowRun run_shallow(const PhysicalDomain& dom, const DiscreteMeasure& alpha0,
                       const HeightField& h0_guess, const RunOptions& opts,
                       const SwFixedPointOptions& fp) {
  if (!(opts.T >= 0.0)) throw std::invalid_argument("run_shallow: T must be nonnegative");
  ShallowRun run;
  HeightField h = h0_guess;  // stable storage: the run options point at it

  // Fit the initial height to alpha0 before the clock starts.
  KantorovichWeights w;
  SwIterateStatus st0 = sw_consistency_iterate(dom, alpha0, w, h, fp, opts.ot);
  run.h0 = h;

  RunOptions local = opts;
  local.node_density = &h.h.values;
  run.flow = init_flow(dom, alpha0, local.T, local.ot, local.node_density);
  run.statuses.push_back(std::move(st0));
  run.height_times.push_back(0.0);
  run.heights.push_back(h.h);

  const double dt =
      local.dt > 0.0 ? local.dt : 1e-2 * std::min(1.0, 1.0 / speed_bound(run.flow.S, run.flow.R_T));
  const int stride = std::max(1, local.save_stride);
  int k = 0;
  while (run.flow.t < local.T - 1e-12) {
    const double step_dt = std::min(dt, local.T - run.flow.t);
    step(dom, run.flow, step_dt, local);
    ++k;
    if (k % stride == 0 || run.flow.t >= local.T - 1e-12) {
      refit_height(dom, run, h, fp, local.ot);
      push_snapshot(run.flow);
    }
  }
  return run;
}

PhysicalFlowField sw_reconstruct_F(const PhysicalDomain& dom, const ShallowRun& run, double t) {
  return reconstruct_F(dom, run.flow, t);
}

double sw_flow_distance(const PhysicalDomain& dom, const GridField& F, const GridField& G,
                        double r, const HeightField& h0) {
  return lr_distance(dom, F, G, r, &h0.h.values);
}

double sw_pushforward_stat(const PhysicalDomain& dom, const GridField& F, const HeightField& h_src,
                           const HeightField& h_dst, int bins) {
  if (bins < 1) throw std::invalid_argument("sw_pushforward_stat: bins must be >= 1");
  if (h_src.h.values.size() != dom.node_count() || h_dst.h.values.size() != dom.node_count())
    throw std::invalid_argument("sw_pushforward_stat: height grid size mismatch");
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
  std::vector<KahanSum> target(nb), pushed(nb);
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const double w = dom.node_weight()[k];
    if (w == 0.0 || !F.defined[k]) continue;
    target[bin_of(dom.nodes()[k])].add(w * h_dst.h.values[k]);
    pushed[bin_of(F.values[k])].add(w * h_src.h.values[k]);
  }
  KahanSum volume;
  for (std::size_t b = 0; b < nb; ++b) volume.add(target[b].value());
  // Sliver bins (a corner cell clipping the fluid edge) carry almost no
  // target mass; dividing by the bin mass there turns a one-node leak into
  // worst = 1.  Floor the denominator at the mean bin load instead.
  const double floor_mass = volume.value() / static_cast<double>(nb);
  double worst = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const double a = target[b].value();
    if (a <= 0.0) continue;
    worst = std::max(worst, std::abs(pushed[b].value() - a) / std::max(a, floor_mass));
  }
  return worst;
}

std::string sw_status_to_json(const SwIterateStatus& st) {
  std::ostringstream os;
  os << "{\"converged\": " << (st.converged ? "true" : "false")
     << ", \"outer_iters\": " << st.outer_iters << ", \"clamp_fraction\": "
     << fmt_double(st.clamp_fraction) << ", \"residuals\": [";
  for (std::size_t i = 0; i < st.residuals.size(); ++i)
    os << (i ? ", " : "") << fmt_double(st.residuals[i]);
  os << "], \"renorm_factors\": [";
  for (std::size_t i = 0; i < st.renorm_factors.size(); ++i)
    os << (i ? ", " : "") << fmt_double(st.renorm_factors[i]);
  os << "], \"message\": \"" << st.message << "\"}";
  return os.str();
}

}  // namespace sg
