#include "sg/ot_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseCore>

#include "sg/io.hpp"
#include "sg/kahan.hpp"
#include "sg/parallel.hpp"

namespace sg {

namespace {

// Concave dual objective; ascent in this value is the damping criterion.
double dual_value(const LaguerreTessellation& tess, const std::vector<double>& psi,
                  const std::vector<double>& targets) {
  KahanSum lin;
  for (std::size_t i = 0; i < targets.size(); ++i) lin.add(targets[i] * psi[i]);
  return -tess.integral_P - lin.value();
}

double max_abs_residual(const LaguerreTessellation& tess, const std::vector<double>& targets) {
  double err = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    err = std::max(err, std::abs(tess.cell_mass[i] - targets[i]));
  return err;
}

// Discrete Jacobian of the cell masses with respect to psi, assembled from
// counts of grid edges whose endpoints lie in different cells: each crossing
// edge stands for ~h of interface, and a boundary between cells i and j
// moves at rate 1/|X_i - X_j| per unit weight change.  Returned as the
// positive-semidefinite graph Laplacian L = -d(mass)/d(psi).
Eigen::SparseMatrix<double> assemble_laplacian(const PhysicalDomain& dom,
                                               const LaguerreTessellation& tess,
                                               const std::vector<Vec2>& X,
                                               const std::vector<double>* node_density) {
  const std::size_t n = X.size();
  const int nq = dom.nq();
  const double h = dom.h();
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> diag(n, 0.0);

  auto density_at = [&](std::size_t k) {
    return node_density ? (*node_density)[k] : 1.0;
  };
  auto edge = [&](std::size_t ka, std::size_t kb) {
    const std::int32_t i = tess.assignment[ka];
    const std::int32_t j = tess.assignment[kb];
    if (i < 0 || j < 0 || i == j) return;
    const double dX = norm(X[i] - X[j]);
    if (dX == 0.0) return;
    const double w = 0.5 * (density_at(ka) + density_at(kb)) * h / dX;
    if (w == 0.0) return;
    trip.emplace_back(i, j, -w);
    trip.emplace_back(j, i, -w);
    diag[i] += w;
    diag[j] += w;
  };
  for (int iy = 0; iy < nq; ++iy) {
    for (int ix = 0; ix < nq; ++ix) {
      const std::size_t k = dom.index(ix, iy);
      if (ix + 1 < nq) edge(k, dom.index(ix + 1, iy));
      if (iy + 1 < nq) edge(k, dom.index(ix, iy + 1));
    }
  }
  // A tiny Tikhonov floor keeps CG happy on the gauge kernel and on any
  // isolated cell; the constant-direction component it permits is removed
  // by the gauge fix after the update.
  double dmax = 0.0;
  for (double d : diag) dmax = std::max(dmax, d);
  const double floor = std::max(1e-12 * dmax, 1e-300);
  for (std::size_t i = 0; i < n; ++i) trip.emplace_back(i, i, diag[i] + floor);

  Eigen::SparseMatrix<double> L(static_cast<int>(n), static_cast<int>(n));
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

// Direct 1D reset for a cell that owns no mass: give it a foothold.  Nodes
// are ranked by margin g = x . X_i - current best score; the cell owns node
// k iff x_k . X_i - psi_i >= node_best_k, i.e. iff psi_i <= g_k, so
// psi_i = cut captures exactly the nodes with g >= cut.  The foothold is a
// few nodes' mass (or the full target if that is smaller): Newton handles
// the rebalancing once every cell is alive, and small grabs do not cascade
// into neighboring cells the way full-target grabs do.
void quantile_repair(const PhysicalDomain& dom, const std::vector<double>& node_best,
                     const std::vector<Vec2>& X, std::size_t cell, double target,
                     const std::vector<double>* node_density, std::vector<double>& psi) {
  std::vector<std::pair<double, double>> margin;  // (g, node weight)
  margin.reserve(dom.node_count());
  double wmax = 0.0;
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (!dom.inside()[k]) continue;
    double wk = dom.node_weight()[k];
    if (node_density) wk *= (*node_density)[k];
    const double g = dot(dom.nodes()[k], X[cell]) - node_best[k];
    margin.emplace_back(g, wk);
    wmax = std::max(wmax, wk);
  }
  std::sort(margin.begin(), margin.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const double want = std::min(target, 4.0 * wmax);
  double acc = 0.0;
  std::size_t q = margin.size();  // first rank where the foothold is met
  for (std::size_t j = 0; j < margin.size(); ++j) {
    acc += margin[j].second;
    if (acc >= want) {
      q = j;
      break;
    }
  }
  // Cut strictly between the last grabbed node and the first kept one: a
  // cut exactly at a node's margin creates an exact score tie there, and
  // ties shatter under the infinitesimal perturbations of the Newton line
  // search (the node flips owner at any step size, re-starving the cell).
  double cut;
  if (q + 1 < margin.size()) {
    cut = 0.5 * (margin[q].first + margin[q + 1].first);
    if (!(cut < margin[q].first))  // equal margins: nudge strictly below
      cut = margin[q].first - 1e-9 * (1.0 + std::abs(margin[q].first));
  } else {
    cut = margin.back().first - 1.0;  // foothold never met: take every node
  }
  psi[cell] = cut;
}

// Cold-start weights from one entropic (Sinkhorn) half-step at a coarse
// temperature: psi_i = tau log sum_k w_k exp(x_k . X_i / tau) - tau log t_i,
// which balances every cell's unnormalized soft mass to its target.  Used
// at the bottom of the multiscale cascade, where any stragglers left by the
// soft-to-hard collapse are cheap to repair.
void entropic_init(const PhysicalDomain& dom, const std::vector<Vec2>& X,
                   const std::vector<double>& targets,
                   const std::vector<double>* node_density, std::vector<double>& psi) {
  const std::size_t n = X.size();
  psi.assign(n, 0.0);
  double rmax = 0.0;
  for (const Vec2& x : X) rmax = std::max(rmax, norm(x));
  const double tau = 0.25 * (dom.S() + rmax);
  parallel_ranges(n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      double gmax = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < dom.node_count(); ++k) {
        if (!dom.inside()[k]) continue;
        gmax = std::max(gmax, dot(dom.nodes()[k], X[i]));
      }
      KahanSum acc;
      for (std::size_t k = 0; k < dom.node_count(); ++k) {
        double wk = dom.node_weight()[k];
        if (wk == 0.0) continue;
        if (node_density) {
          wk *= (*node_density)[k];
          if (wk == 0.0) continue;
        }
        acc.add(wk * std::exp((dot(dom.nodes()[k], X[i]) - gmax) / tau));
      }
      psi[i] = gmax + tau * std::log(acc.value()) - tau * std::log(targets[i]);
    }
  });
}

// Mass-weighted spatial clustering for the multiscale cascade: particles
// are binned on a uniform grid over their bounding box sized for roughly
// target_clusters occupied bins; each occupied bin becomes one cluster at
// the mass centroid.  parent_of maps every particle to its cluster.
DiscreteMeasure coarsen(const DiscreteMeasure& mu, std::size_t target_clusters,
                        std::vector<std::size_t>& parent_of) {
  const std::size_t n = mu.size();
  double xlo = mu.positions[0].x, xhi = xlo, ylo = mu.positions[0].y, yhi = ylo;
  for (const Vec2& p : mu.positions) {
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
    ylo = std::min(ylo, p.y);
    yhi = std::max(yhi, p.y);
  }
  const int m = std::max(1, static_cast<int>(std::lround(
                                std::ceil(std::sqrt(static_cast<double>(target_clusters))))));
  const double bx = std::max(xhi - xlo, 1e-30) / m;
  const double by = std::max(yhi - ylo, 1e-30) / m;
  std::vector<std::ptrdiff_t> cluster_of_bin(static_cast<std::size_t>(m) * m, -1);
  DiscreteMeasure coarse;
  std::vector<Vec2> first_moment;
  parent_of.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int ix = std::clamp(static_cast<int>((mu.positions[i].x - xlo) / bx), 0, m - 1);
    const int iy = std::clamp(static_cast<int>((mu.positions[i].y - ylo) / by), 0, m - 1);
    const std::size_t b = static_cast<std::size_t>(iy) * m + ix;
    if (cluster_of_bin[b] < 0) {
      cluster_of_bin[b] = static_cast<std::ptrdiff_t>(coarse.positions.size());
      coarse.positions.push_back({0.0, 0.0});
      coarse.masses.push_back(0.0);
      first_moment.push_back({0.0, 0.0});
    }
    const std::size_t c = static_cast<std::size_t>(cluster_of_bin[b]);
    parent_of[i] = c;
    coarse.masses[c] += mu.masses[i];
    first_moment[c] += mu.masses[i] * mu.positions[i];
  }
  for (std::size_t c = 0; c < coarse.positions.size(); ++c) {
    coarse.positions[c] = first_moment[c] / coarse.masses[c];
    coarse.R0 = std::max(coarse.R0, norm(coarse.positions[c]));
  }
  return coarse;
}

}  // namespace

SolveReport solve_weights(const PhysicalDomain& dom, const DiscreteMeasure& mu,
                          KantorovichWeights& w, const SolveOptions& opts,
                          const std::vector<double>* node_density) {
  const std::size_t n = mu.size();
  const bool cold_start = w.psi.empty();
  if (w.psi.size() != n && !cold_start)
    throw std::invalid_argument("solve_weights: psi size mismatch");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("solve_weights: tol must be positive");

  // The cell masses always sum to the quadrature mass of the source
  // (independent of the weights: every inside node lands in some cell), so
  // the targets are rescaled to that total; a large mismatch is worth a
  // warning but not a failure.
  KahanSum qt;
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    double wk = dom.node_weight()[k];
    if (node_density) wk *= (*node_density)[k];
    qt.add(wk);
  }
  const double quad_total = qt.value();
  if (!(quad_total > 0.0)) throw std::invalid_argument("solve_weights: source has no mass");
  const double mass_in = total_mass(mu);
  if (std::abs(mass_in - quad_total) > 0.01 * quad_total) {
    std::fprintf(stderr,
                 "[solve_weights] warning: particle mass %.6g vs source mass %.6g; "
                 "targets rescaled\n",
                 mass_in, quad_total);
  }
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) targets[i] = mu.masses[i] * (quad_total / mass_in);

  if (cold_start) {
    // Multiscale cascade: solve a ~8x coarser clustering of the particles
    // first (recursively, to a rough tolerance) and lift its weights to the
    // children with nearest-neighbor offsets, so every level starts Newton
    // from live, roughly proportioned cells.  Cold starts in one shot fail
    // here whenever the support sits far off center: most cells start
    // empty and repairs alone cannot rebalance them.
    if (n > 64) {
      std::vector<std::size_t> parent_of;
      const DiscreteMeasure coarse = coarsen(mu, (n + 7) / 8, parent_of);
      KantorovichWeights wc;
      SolveOptions copts = opts;
      copts.log_path.clear();
      // The residual test is relative to total mass, so the coarse solve
      // must resolve a fraction of one cluster's share: a fixed loose
      // tolerance here leaves near-empty parents whose children inherit
      // nothing.
      copts.tol =
          std::max(opts.tol, 0.25 / static_cast<double>(coarse.positions.size()));
      const SolveReport coarse_rep = solve_weights(dom, coarse, wc, copts, node_density);
      w.psi.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = parent_of[i];
        const Vec2 Xp = coarse.positions[c];
        // Siblings split the parent territory by a Voronoi diagram of their
        // offsets, recentered on the parent's actual cell centroid: tilted
        // weights displace cells from their particles, and without the
        // recentering one sibling per parent wins the whole far-away cell.
        const Vec2 cp = coarse_rep.tess.centroid_valid[c] ? coarse_rep.tess.centroid[c] : Xp;
        const Vec2 u = mu.positions[i] - Xp;
        w.psi[i] = wc.psi[c] + 0.5 * (norm2(mu.positions[i]) - norm2(Xp)) + dot(u, cp - Xp);
      }
    } else {
      entropic_init(dom, mu.positions, targets, node_density, w.psi);
    }
  }
  w.gauge_fix();
  LaguerreTessellation tess = tessellate(dom, mu.positions, w, node_density);
#ifdef SG_OT_TRACE
  {
    std::size_t empties = 0;
    for (double m : tess.cell_mass)
      if (m == 0.0) ++empties;
    std::fprintf(stderr, "[trace] init n=%zu empties=%zu err=%g\n", n, empties,
                 max_abs_residual(tess, targets) / quad_total);
  }
#endif

  std::ostringstream log;
  if (!opts.log_path.empty()) log << "iter,error,step,min_mass,dual\n";
  auto log_row = [&](int it, double err, double step, double dual) {
    if (opts.log_path.empty()) return;
    const double mn = *std::min_element(tess.cell_mass.begin(), tess.cell_mass.end());
    log << it << ',' << fmt_double(err / quad_total) << ',' << fmt_double(step) << ','
        << fmt_double(mn) << ',' << fmt_double(dual) << '\n';
  };
  auto flush_log = [&]() {
    if (!opts.log_path.empty()) write_text_file(opts.log_path, log.str());
  };

  SolveReport report;
  std::vector<int> starved(n, 0);  // consecutive iterations owning territory but no mass
  double err = max_abs_residual(tess, targets);

  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    // Empty cells first: Newton's Jacobian row for them vanishes, so they
    // get a direct quantile reset instead.  Repairs within a pass are
    // sequential against a running best-score field, so each repaired cell
    // competes with the ones already reset this pass instead of grabbing
    // the same territory blindly.
    bool repaired = false;
    std::vector<double> best;
    for (std::size_t i = 0; i < n; ++i) {
      if (tess.cell_mass[i] > 0.0) {
        starved[i] = 0;
        continue;
      }
      if (node_density && tess.node_count[i] > 0) {
        // Territory without mass: only a vanishing source density does this.
        if (++starved[i] >= 3) {
          flush_log();
          throw ZeroMassRegion(i);
        }
      }
      if (!repaired) best = tess.node_best;
      quantile_repair(dom, best, mu.positions, i, targets[i], node_density, w.psi);
      for (std::size_t k = 0; k < dom.node_count(); ++k) {
        if (!dom.inside()[k]) continue;
        best[k] = std::max(best[k], dot(dom.nodes()[k], mu.positions[i]) - w.psi[i]);
      }
      ++report.repairs;
      repaired = true;
    }
    if (repaired) {
      w.gauge_fix();
      tess = tessellate(dom, mu.positions, w, node_density);
      err = max_abs_residual(tess, targets);
      log_row(iter, err, 0.0, dual_value(tess, w.psi, targets));
      report.iterations = iter + 1;
      continue;
    }

    err = max_abs_residual(tess, targets);
    if (err <= opts.tol * quad_total) {
      for (std::size_t i = 0; i < n; ++i)
        if (tess.cell_mass[i] == 0.0) {
          flush_log();
          throw DegenerateCell(i);
        }
      report.converged = true;
      report.final_error = err / quad_total;
      log_row(iter, err, 0.0, dual_value(tess, w.psi, targets));
      flush_log();
      report.tess = std::move(tess);
      return report;
    }
    if (iter == opts.max_iter) break;

    // Newton direction: solve L delta = residual on the mass-balance system.
    Eigen::VectorXd r(static_cast<int>(n));
    for (std::size_t i = 0; i < n; ++i)
      r[static_cast<int>(i)] = tess.cell_mass[i] - targets[i];
    const Eigen::SparseMatrix<double> L =
        assemble_laplacian(dom, tess, mu.positions, node_density);
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-9);
    cg.setMaxIterations(1000);
    cg.compute(L);
    Eigen::VectorXd delta = cg.solve(r);

    // Damped step: halve until progress is made, preferring steps that keep
    // every cell alive.  The dual is piecewise linear on the grid, so
    // plateaus happen; those are only crossed when the residual shrinks
    // without killing anyone.  When every live candidate is blocked by a
    // fragile cell, fall back on the largest strictly dual-increasing step
    // regardless of deaths: the repair pass revives the victims at a yet
    // higher dual, so the ascent stays monotone and no configuration
    // repeats.
    const double dual_here = dual_value(tess, w.psi, targets);
    double alpha = 1.0;
    bool accepted = false;
    bool have_fallback = false;
    double alpha_fallback = 0.0;
    int fallback_at = 0;
    KantorovichWeights w_fallback;
    LaguerreTessellation t_fallback;
    for (int halving = 0; halving < 30; ++halving, alpha *= 0.5) {
      // Every probe is a full tessellation; once a dual-increasing fallback
      // is banked, only a few further halvings could beat it.
      if (have_fallback && halving - fallback_at >= 6) break;
      std::vector<double> cand = w.psi;
      for (std::size_t i = 0; i < n; ++i) cand[i] += alpha * delta[static_cast<int>(i)];
      KantorovichWeights wc{std::move(cand)};
      wc.gauge_fix();
      LaguerreTessellation tc = tessellate(dom, mu.positions, wc, node_density);
      const double dual_cand = dual_value(tc, wc.psi, targets);
      const bool progress =
          dual_cand > dual_here ||
          (dual_cand >= dual_here && max_abs_residual(tc, targets) < err);
      if (progress && !tc.has_empty()) {
        w = std::move(wc);
        tess = std::move(tc);
        accepted = true;
        break;
      }
      if (!have_fallback && dual_cand > dual_here) {
        w_fallback = std::move(wc);
        t_fallback = std::move(tc);
        alpha_fallback = alpha;
        fallback_at = halving;
        have_fallback = true;
      }
    }
    if (!accepted && have_fallback) {
      w = std::move(w_fallback);
      tess = std::move(t_fallback);
      alpha = alpha_fallback;
      accepted = true;
    }
    report.iterations = iter + 1;
    err = max_abs_residual(tess, targets);
    log_row(iter + 1, err, accepted ? alpha : 0.0, dual_value(tess, w.psi, targets));
    if (!accepted) break;  // stalled below step granularity
  }

  report.final_error = err / quad_total;
  flush_log();
  throw NonConvergence(report.iterations, report.final_error);
}

}  // namespace sg
