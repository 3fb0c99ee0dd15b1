#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sg/domain.hpp"
#include "sg/dual_flow.hpp"
#include "sg/measure.hpp"
#include "sg/ot_solver.hpp"
#include "sg/shallow_water.hpp"
#include "sg/vec.hpp"

namespace sg {

// Configuration file problem: unknown key, bad type, or invalid value.  The
// message names the offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainSpec {
  std::string shape = "disk";  // disk | rect
  double S = 1.0;              // disk radius
  double hx = 1.0, hy = 1.0;   // rect half-extents
  int quadrature = 256;        // nodes per axis
};

struct MeasureSpec {
  std::string kind = "vortex-patch";  // vortex-patch | file | density-grid

  // vortex-patch
  double eps = 0.5;
  int n = 2048;
  bool random = false;  // uniform-random sampling instead of low-discrepancy

  // file
  std::string path;

  // density-grid: named density on [-extent, extent]^2, particlized
  std::string density = "cos2-bump";
  Vec2 center{0.4, 0.0};
  double width = 0.5;
  double extent = 1.2;
  int resolution = 128;
  int particles = 2304;
  double mollify_width = 0.0;  // > 0: mollify before particlizing
};

struct StabilitySpec {
  std::string generator = "mollify";  // mollify | subsample | vortex
  std::vector<double> widths{0.2, 0.1, 0.05, 0.025};
  std::vector<int> counts{576, 1024, 2304};
  std::vector<double> epsilons{0.5, 0.25, 0.1};
  std::vector<double> norms{1.0, 2.0};
  std::vector<double> times{0.1, 0.3, 0.5};
};

struct ShallowSpec {
  std::string h0 = "uniform";  // uniform | tent
  double value = 1.0;
  Vec2 center{0.0, 0.0};       // tent peak
  double damping = 0.5;
  int max_outer = 20;
  double tol = 1e-9;
};

struct VortexSpec {
  std::vector<double> epsilons{1.0, 0.5, 0.25};
};

struct OrliczSpec {
  std::string family = "mollified";  // mollified | vortex | single
  std::vector<double> widths{0.2, 0.1, 0.05, 0.025};
  std::vector<double> epsilons{0.5, 0.25, 0.1};
  Vec2 center{0.4, 0.0};
  double width = 0.5;
  double extent = 2.0;
  int resolution = 256;
};

struct ExperimentConfig {
  DomainSpec domain;
  MeasureSpec initial;
  double T = 0.5;
  double dt = -1.0;  // <= 0: integrator default
  int save_stride = 1;
  int mollify_m = 0;
  double ot_tol = 1e-4;
  int ot_max_iter = 200;
  bool ot_log = false;
  StabilitySpec stability;
  ShallowSpec shallow;
  VortexSpec vortex;
  OrliczSpec orlicz;
  std::string output = "out";
  unsigned seed = 1;
};

// Strict JSON: unknown keys, wrong types, and invalid values all throw
// ConfigError naming the key.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig config_from_file(const std::string& path);
// Full echo of the effective configuration (defaults included).
std::string config_to_json(const ExperimentConfig& cfg);

PhysicalDomain build_domain(const ExperimentConfig& cfg);
DiscreteMeasure build_initial_measure(const ExperimentConfig& cfg);

// Density samples on a cell-centered resolution^2 grid over
// [-extent, extent]^2 in dual space, used to manufacture particle data.
struct DualGridDensity {
  double extent = 1.0;
  int resolution = 0;
  std::vector<double> rho;  // row-major

  double cell_area() const {
    const double h = 2.0 * extent / resolution;
    return h * h;
  }
  Vec2 node(int ix, int iy) const {
    const double h = 2.0 * extent / resolution;
    return {-extent + (ix + 0.5) * h, -extent + (iy + 0.5) * h};
  }
  double total() const;
};

// C^1 bump rho(X) = cos^2(pi |X - center| / (2 width)) on |X - center| <
// width, scaled to the requested total mass.
DualGridDensity bump_density(double extent, int resolution, Vec2 center, double width,
                             double total_mass = 3.14159265358979323846);
// Uniform patch density total/( pi eps^2) on B(center, eps).
DualGridDensity patch_density(double extent, int resolution, Vec2 center, double eps,
                              double total_mass = 3.14159265358979323846);
// Convolution with the normalized C^2 bump of the given radius, rescaled to
// preserve the total exactly.
DualGridDensity mollify_density(const DualGridDensity& f, double width);
double density_l1(const DualGridDensity& a, const DualGridDensity& b);

// Deterministic particlization: coarse ~sqrt(target)^2 binning of the
// density, one particle per bin at the bin's density centroid carrying the
// bin mass; near-empty bins are dropped.
DiscreteMeasure particlize(const DualGridDensity& rho, int target_particles);

// Rotation angle of F_t about the origin fitted per saved snapshot
// (mass-weighted orthogonal fit), unwrapped in time, least-squares slope.
// Snapshots are thinned to at most max_samples for the fit.
double fit_rotation_rate(const PhysicalDomain& dom, const FlowState& state,
                         int max_samples = 24);

// Subcommands.  Each writes its artifacts under cfg.output and returns the
// process exit code: 0 success, 2 configuration error (thrown as
// ConfigError by the parser before these run), 3 solver nonconvergence
// (partial artifacts are still written).
int cmd_run(const ExperimentConfig& cfg);
int cmd_stability(const ExperimentConfig& cfg);
int cmd_vortex_validate(const ExperimentConfig& cfg);
int cmd_orlicz_demo(const ExperimentConfig& cfg);
int cmd_shallow_run(const ExperimentConfig& cfg);
int cmd_dump_potential(const ExperimentConfig& cfg);

}  // namespace sg
