#include "sg/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sg/grid_field.hpp"
#include "sg/io.hpp"
#include "sg/kahan.hpp"
#include "sg/laguerre.hpp"
#include "sg/orlicz.hpp"
#include "sg/physical_flow.hpp"
#include "sg/potential.hpp"
#include "sg/rotating_patch.hpp"

#ifndef SGFLOW_VERSION
#define SGFLOW_VERSION "0.0.0"
#endif

namespace sg {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------- parsing --

std::string qual(const std::string& ctx, const std::string& key) {
  return ctx.empty() ? key : ctx + "." + key;
}

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: \"" + ctx + "\" must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("config: unknown key \"" + qual(ctx, it.key()) + "\"");
  }
}

double get_num(const json& j, const std::string& ctx, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError("config: \"" + qual(ctx, key) + "\" must be a number");
  return v.get<double>();
}

int get_int(const json& j, const std::string& ctx, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    throw ConfigError("config: \"" + qual(ctx, key) + "\" must be an integer");
  return v.get<int>();
}

bool get_bool(const json& j, const std::string& ctx, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError("config: \"" + qual(ctx, key) + "\" must be a boolean");
  return v.get<bool>();
}

std::string get_str(const json& j, const std::string& ctx, const char* key,
                    const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError("config: \"" + qual(ctx, key) + "\" must be a string");
  return v.get<std::string>();
}

std::vector<double> get_num_list(const json& j, const std::string& ctx, const char* key,
                                 std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError("config: \"" + qual(ctx, key) + "\" must be an array");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number())
      throw ConfigError("config: \"" + qual(ctx, key) + "\" must contain numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<int> get_int_list(const json& j, const std::string& ctx, const char* key,
                              std::vector<int> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError("config: \"" + qual(ctx, key) + "\" must be an array");
  std::vector<int> out;
  for (const json& e : v) {
    if (!e.is_number_integer())
      throw ConfigError("config: \"" + qual(ctx, key) + "\" must contain integers");
    out.push_back(e.get<int>());
  }
  return out;
}

Vec2 get_point(const json& j, const std::string& ctx, const char* key, Vec2 fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError("config: \"" + qual(ctx, key) + "\" must be a [x, y] pair");
  return {v[0].get<double>(), v[1].get<double>()};
}

void require_positive(double v, const std::string& key) {
  if (!(v > 0.0)) throw ConfigError("config: \"" + key + "\" must be positive");
}

DomainSpec parse_domain(const json& j) {
  DomainSpec d;
  check_keys(j, "domain", {"shape", "S", "hx", "hy", "quadrature"});
  d.shape = get_str(j, "domain", "shape", d.shape);
  if (d.shape != "disk" && d.shape != "rect")
    throw ConfigError("config: \"domain.shape\" must be \"disk\" or \"rect\"");
  d.S = get_num(j, "domain", "S", d.S);
  d.hx = get_num(j, "domain", "hx", d.hx);
  d.hy = get_num(j, "domain", "hy", d.hy);
  d.quadrature = get_int(j, "domain", "quadrature", d.quadrature);
  require_positive(d.S, "domain.S");
  require_positive(d.hx, "domain.hx");
  require_positive(d.hy, "domain.hy");
  if (d.quadrature < 2) throw ConfigError("config: \"domain.quadrature\" must be >= 2");
  return d;
}

MeasureSpec parse_measure(const json& j) {
  MeasureSpec m;
  check_keys(j, "initial_measure",
             {"kind", "eps", "n", "random", "path", "density", "center", "width", "extent",
              "resolution", "particles", "mollify_width"});
  m.kind = get_str(j, "initial_measure", "kind", m.kind);
  if (m.kind != "vortex-patch" && m.kind != "file" && m.kind != "density-grid")
    throw ConfigError(
        "config: \"initial_measure.kind\" must be \"vortex-patch\", \"file\" or "
        "\"density-grid\"");
  m.eps = get_num(j, "initial_measure", "eps", m.eps);
  m.n = get_int(j, "initial_measure", "n", m.n);
  m.random = get_bool(j, "initial_measure", "random", m.random);
  m.path = get_str(j, "initial_measure", "path", m.path);
  m.density = get_str(j, "initial_measure", "density", m.density);
  m.center = get_point(j, "initial_measure", "center", m.center);
  m.width = get_num(j, "initial_measure", "width", m.width);
  m.extent = get_num(j, "initial_measure", "extent", m.extent);
  m.resolution = get_int(j, "initial_measure", "resolution", m.resolution);
  m.particles = get_int(j, "initial_measure", "particles", m.particles);
  m.mollify_width = get_num(j, "initial_measure", "mollify_width", m.mollify_width);
  if (!(m.eps > 0.0 && m.eps <= 1.0))
    throw ConfigError("config: \"initial_measure.eps\" must lie in (0, 1]");
  if (m.n < 1) throw ConfigError("config: \"initial_measure.n\" must be >= 1");
  if (m.kind == "file" && m.path.empty())
    throw ConfigError("config: \"initial_measure.path\" is required for kind \"file\"");
  if (m.density != "cos2-bump")
    throw ConfigError("config: \"initial_measure.density\" must be \"cos2-bump\"");
  require_positive(m.width, "initial_measure.width");
  require_positive(m.extent, "initial_measure.extent");
  if (m.resolution < 2) throw ConfigError("config: \"initial_measure.resolution\" must be >= 2");
  if (m.particles < 1) throw ConfigError("config: \"initial_measure.particles\" must be >= 1");
  if (m.mollify_width < 0.0)
    throw ConfigError("config: \"initial_measure.mollify_width\" must be >= 0");
  return m;
}

StabilitySpec parse_stability(const json& j) {
  StabilitySpec s;
  check_keys(j, "stability", {"generator", "widths", "counts", "epsilons", "norms", "times"});
  s.generator = get_str(j, "stability", "generator", s.generator);
  if (s.generator != "mollify" && s.generator != "subsample" && s.generator != "vortex")
    throw ConfigError(
        "config: \"stability.generator\" must be \"mollify\", \"subsample\" or \"vortex\"");
  s.widths = get_num_list(j, "stability", "widths", s.widths);
  s.counts = get_int_list(j, "stability", "counts", s.counts);
  s.epsilons = get_num_list(j, "stability", "epsilons", s.epsilons);
  s.norms = get_num_list(j, "stability", "norms", s.norms);
  s.times = get_num_list(j, "stability", "times", s.times);
  for (double w : s.widths) require_positive(w, "stability.widths");
  for (int c : s.counts)
    if (c < 1) throw ConfigError("config: \"stability.counts\" must be >= 1");
  for (double e : s.epsilons)
    if (!(e > 0.0 && e <= 1.0))
      throw ConfigError("config: \"stability.epsilons\" must lie in (0, 1]");
  for (double r : s.norms)
    if (!(r >= 1.0)) throw ConfigError("config: \"stability.norms\" must be >= 1");
  for (double t : s.times)
    if (!(t >= 0.0)) throw ConfigError("config: \"stability.times\" must be >= 0");
  if (s.generator == "mollify" && s.widths.empty())
    throw ConfigError("config: \"stability.widths\" must not be empty");
  if (s.generator == "subsample" && s.counts.empty())
    throw ConfigError("config: \"stability.counts\" must not be empty");
  if (s.generator == "vortex" && s.epsilons.empty())
    throw ConfigError("config: \"stability.epsilons\" must not be empty");
  return s;
}

ShallowSpec parse_shallow(const json& j) {
  ShallowSpec s;
  check_keys(j, "shallow", {"h0", "value", "center", "damping", "max_outer", "tol"});
  s.h0 = get_str(j, "shallow", "h0", s.h0);
  if (s.h0 != "uniform" && s.h0 != "tent")
    throw ConfigError("config: \"shallow.h0\" must be \"uniform\" or \"tent\"");
  s.value = get_num(j, "shallow", "value", s.value);
  s.center = get_point(j, "shallow", "center", s.center);
  s.damping = get_num(j, "shallow", "damping", s.damping);
  s.max_outer = get_int(j, "shallow", "max_outer", s.max_outer);
  s.tol = get_num(j, "shallow", "tol", s.tol);
  require_positive(s.value, "shallow.value");
  if (!(s.damping > 0.0 && s.damping <= 1.0))
    throw ConfigError("config: \"shallow.damping\" must lie in (0, 1]");
  if (s.max_outer < 1) throw ConfigError("config: \"shallow.max_outer\" must be >= 1");
  require_positive(s.tol, "shallow.tol");
  return s;
}

VortexSpec parse_vortex(const json& j) {
  VortexSpec v;
  check_keys(j, "vortex", {"epsilons"});
  v.epsilons = get_num_list(j, "vortex", "epsilons", v.epsilons);
  if (v.epsilons.empty()) throw ConfigError("config: \"vortex.epsilons\" must not be empty");
  for (double e : v.epsilons)
    if (!(e > 0.0 && e <= 1.0))
      throw ConfigError("config: \"vortex.epsilons\" must lie in (0, 1]");
  return v;
}

OrliczSpec parse_orlicz(const json& j) {
  OrliczSpec o;
  check_keys(j, "orlicz",
             {"family", "widths", "epsilons", "center", "width", "extent", "resolution"});
  o.family = get_str(j, "orlicz", "family", o.family);
  if (o.family != "mollified" && o.family != "vortex" && o.family != "single")
    throw ConfigError(
        "config: \"orlicz.family\" must be \"mollified\", \"vortex\" or \"single\"");
  o.widths = get_num_list(j, "orlicz", "widths", o.widths);
  o.epsilons = get_num_list(j, "orlicz", "epsilons", o.epsilons);
  o.center = get_point(j, "orlicz", "center", o.center);
  o.width = get_num(j, "orlicz", "width", o.width);
  o.extent = get_num(j, "orlicz", "extent", o.extent);
  o.resolution = get_int(j, "orlicz", "resolution", o.resolution);
  for (double w : o.widths) require_positive(w, "orlicz.widths");
  for (double e : o.epsilons)
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError("config: \"orlicz.epsilons\" must lie in (0, 1]");
  require_positive(o.width, "orlicz.width");
  require_positive(o.extent, "orlicz.extent");
  if (o.resolution < 2) throw ConfigError("config: \"orlicz.resolution\" must be >= 2");
  if (o.family == "vortex" && o.epsilons.empty())
    throw ConfigError("config: \"orlicz.epsilons\" must not be empty");
  return o;
}

// ------------------------------------------------------------------- echo --

json point_json(Vec2 p) { return json::array({p.x, p.y}); }

json config_echo(const ExperimentConfig& c) {
  json j;
  j["domain"] = {{"shape", c.domain.shape}, {"S", c.domain.S},           {"hx", c.domain.hx},
                 {"hy", c.domain.hy},       {"quadrature", c.domain.quadrature}};
  j["initial_measure"] = {{"kind", c.initial.kind},
                          {"eps", c.initial.eps},
                          {"n", c.initial.n},
                          {"random", c.initial.random},
                          {"path", c.initial.path},
                          {"density", c.initial.density},
                          {"center", point_json(c.initial.center)},
                          {"width", c.initial.width},
                          {"extent", c.initial.extent},
                          {"resolution", c.initial.resolution},
                          {"particles", c.initial.particles},
                          {"mollify_width", c.initial.mollify_width}};
  j["T"] = c.T;
  j["dt"] = c.dt;
  j["save_stride"] = c.save_stride;
  j["mollify_m"] = c.mollify_m;
  j["ot"] = {{"tol", c.ot_tol}, {"max_iter", c.ot_max_iter}, {"log", c.ot_log}};
  j["stability"] = {{"generator", c.stability.generator}, {"widths", c.stability.widths},
                    {"counts", c.stability.counts},       {"epsilons", c.stability.epsilons},
                    {"norms", c.stability.norms},         {"times", c.stability.times}};
  j["shallow"] = {{"h0", c.shallow.h0},           {"value", c.shallow.value},
                  {"center", point_json(c.shallow.center)}, {"damping", c.shallow.damping},
                  {"max_outer", c.shallow.max_outer},       {"tol", c.shallow.tol}};
  j["vortex"] = {{"epsilons", c.vortex.epsilons}};
  j["orlicz"] = {{"family", c.orlicz.family},   {"widths", c.orlicz.widths},
                 {"epsilons", c.orlicz.epsilons}, {"center", point_json(c.orlicz.center)},
                 {"width", c.orlicz.width},     {"extent", c.orlicz.extent},
                 {"resolution", c.orlicz.resolution}};
  j["output"] = c.output;
  j["seed"] = c.seed;
  return j;
}

// ----------------------------------------------------------------- output --

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string now_iso8601() {
  const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json manifest_base(const ExperimentConfig& cfg, const std::string& command) {
  json m;
  m["command"] = command;
  m["version"] = SGFLOW_VERSION;
  m["config"] = config_echo(cfg);
  m["generated_at"] = now_iso8601();  // the only timestamp in any artifact
  return m;
}

// -------------------------------------------------------------- flow runs --

RunOptions make_run_options(const ExperimentConfig& cfg) {
  RunOptions o;
  o.T = cfg.T;
  o.dt = cfg.dt;
  o.save_stride = cfg.save_stride;
  o.mollify_m = cfg.mollify_m;
  o.ot.tol = cfg.ot_tol;
  o.ot.max_iter = cfg.ot_max_iter;
  return o;
}

double effective_dt(const RunOptions& opts, const FlowState& state) {
  return opts.dt > 0.0 ? opts.dt : 1e-2 * std::min(1.0, 1.0 / speed_bound(state.S, state.R_T));
}

void push_snapshot(FlowState& state) {
  state.history.push_back({state.t, state.particles.positions, state.psi.psi, state.centroids});
}

// Advances state over [0, T]; on NonConvergence the partially advanced state
// (with its history so far) survives in `state` for partial artifacts.
void drive_flow(const PhysicalDomain& dom, const DiscreteMeasure& alpha0, const RunOptions& opts,
                FlowState& state) {
  state = init_flow(dom, alpha0, opts.T, opts.ot, opts.node_density);
  const double dt = effective_dt(opts, state);
  const int stride = std::max(1, opts.save_stride);
  int k = 0;
  while (state.t < opts.T - 1e-12) {
    const double step_dt = std::min(dt, opts.T - state.t);
    step(dom, state, step_dt, opts);
    ++k;
    if (k % stride == 0 || state.t >= opts.T - 1e-12) push_snapshot(state);
  }
}

void write_trajectories(const FlowState& state, const std::string& path) {
  std::ostringstream os;
  os << "t,i,X1,X2,c1,c2,psi\n";
  for (const FlowSnapshot& s : state.history)
    for (std::size_t i = 0; i < s.positions.size(); ++i)
      os << fmt_double(s.t) << ',' << i << ',' << fmt_double(s.positions[i].x) << ','
         << fmt_double(s.positions[i].y) << ',' << fmt_double(s.centroids[i].x) << ','
         << fmt_double(s.centroids[i].y) << ',' << fmt_double(s.psi[i]) << '\n';
  write_text_file(path, os.str());
}

// Indices of at most `cap` history entries, always keeping first and last.
std::vector<std::size_t> thin_indices(std::size_t ns, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (ns == 0) return idx;
  const std::size_t m = std::min(ns, cap);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = m == 1 ? 0 : k * (ns - 1) / (m - 1);
    if (idx.empty() || idx.back() != i) idx.push_back(i);
  }
  return idx;
}

json run_invariant_report(const PhysicalDomain& dom, const FlowState& state, double dt_eff) {
  json r;
  const double mass = total_mass(state.particles);
  r["mass"] = {{"total", mass}, {"conserved_exact", true}};

  double support_max = 0.0;
  for (const FlowSnapshot& s : state.history)
    for (const Vec2& X : s.positions) support_max = std::max(support_max, norm(X));
  const double vmax = speed_bound(state.S, state.R_T);
  const double support_limit = state.R_T + 10.0 * dt_eff * vmax;
  r["support"] = {{"max", support_max},
                  {"limit", support_limit},
                  {"R_T", state.R_T},
                  {"ok", support_max <= support_limit}};
  r["speed"] = {{"max", state.max_speed_seen},
                {"limit", vmax},
                {"ok", state.max_speed_seen <= vmax}};

  if (!state.history.empty()) {
    const double t_final = state.history.back().t;
    const LaguerreTessellation tess0 =
        tessellate(dom, state.history.front().positions, KantorovichWeights{state.history.front().psi});
    const LaguerreTessellation tessT =
        tessellate(dom, state.history.back().positions, KantorovichWeights{state.history.back().psi});
    const double diam_limit =
        2.0 * std::max(mean_cell_diameter(dom, tess0), mean_cell_diameter(dom, tessT));
    const GridField rt = roundtrip_field(dom, state, t_final);
    const double rt_l1 = lr_distance(dom, rt, GridField::identity(dom), 1.0);
    r["roundtrip"] = {{"l1", rt_l1}, {"limit", diam_limit}, {"ok", rt_l1 <= diam_limit}};

    const PhysicalFlowField F = reconstruct_F(dom, state, t_final);
    r["measure_preservation"] = {{"stat", measure_preservation_stat(dom, F.map)},
                                 {"bins", 5},
                                 {"reference_threshold", 0.05}};
  }
  if (state.history.size() >= 3)
    r["z_residual"] = z_residual(dom, state);
  else
    r["z_residual"] = nullptr;
  return r;
}

GridField rotation_field(const PhysicalDomain& dom, double angle) {
  GridField F = GridField::empty(dom);
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (dom.node_weight()[k] == 0.0) continue;
    F.values[k] = rotate(dom.nodes()[k], angle);
    F.defined[k] = 1;
  }
  return F;
}

// Mass-weighted pairing of member particles to the nearest reference
// particle at t = 0; statistic = weighted mean over particles of the
// sup-in-time distance between the paired trajectories.
double sup_phi_statistic(const FlowState& member, const FlowState& reference) {
  const std::vector<Vec2>& m0 = member.history.front().positions;
  const std::vector<Vec2>& r0 = reference.history.front().positions;
  std::vector<std::size_t> pair(m0.size());
  for (std::size_t i = 0; i < m0.size(); ++i) {
    std::size_t best = 0;
    double dbest = norm2(m0[i] - r0[0]);
    for (std::size_t jj = 1; jj < r0.size(); ++jj) {
      const double d = norm2(m0[i] - r0[jj]);
      if (d < dbest) {
        dbest = d;
        best = jj;
      }
    }
    pair[i] = best;
  }
  const std::size_t ns = std::min(member.history.size(), reference.history.size());
  KahanSum acc, wsum;
  for (std::size_t i = 0; i < m0.size(); ++i) {
    double sup = 0.0;
    for (std::size_t s = 0; s < ns; ++s)
      sup = std::max(sup, norm(member.history[s].positions[i] -
                               reference.history[s].positions[pair[i]]));
    acc.add(member.particles.masses[i] * sup);
    wsum.add(member.particles.masses[i]);
  }
  return acc.value() / wsum.value();
}

std::string csv_num_label(double v) {
  std::string s = fmt_double(v);
  return s;
}

void validate_times(const std::vector<double>& times, double T, double dt) {
  for (double t : times) {
    if (t > T + 1e-12)
      throw ConfigError("config: \"stability.times\" must not exceed T");
    const double k = std::round(t / dt);
    if (std::abs(t - k * dt) > 1e-9)
      throw ConfigError("config: \"stability.times\" must be integer multiples of dt");
  }
}

}  // namespace

// ----------------------------------------------------------- construction --

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  ExperimentConfig c;
  check_keys(j, "",
             {"domain", "initial_measure", "T", "dt", "save_stride", "mollify_m", "ot",
              "stability", "shallow", "vortex", "orlicz", "output", "seed"});
  if (j.contains("domain")) c.domain = parse_domain(j.at("domain"));
  if (j.contains("initial_measure")) c.initial = parse_measure(j.at("initial_measure"));
  c.T = get_num(j, "", "T", c.T);
  if (!(c.T >= 0.0)) throw ConfigError("config: \"T\" must be >= 0");
  if (j.contains("dt")) {
    c.dt = get_num(j, "", "dt", c.dt);
    require_positive(c.dt, "dt");
  }
  c.save_stride = get_int(j, "", "save_stride", c.save_stride);
  if (c.save_stride < 1) throw ConfigError("config: \"save_stride\" must be >= 1");
  c.mollify_m = get_int(j, "", "mollify_m", c.mollify_m);
  if (c.mollify_m < 0) throw ConfigError("config: \"mollify_m\" must be >= 0");
  if (j.contains("ot")) {
    const json& o = j.at("ot");
    check_keys(o, "ot", {"tol", "max_iter", "log"});
    c.ot_tol = get_num(o, "ot", "tol", c.ot_tol);
    c.ot_max_iter = get_int(o, "ot", "max_iter", c.ot_max_iter);
    c.ot_log = get_bool(o, "ot", "log", c.ot_log);
    require_positive(c.ot_tol, "ot.tol");
    if (c.ot_max_iter < 1) throw ConfigError("config: \"ot.max_iter\" must be >= 1");
  }
  if (j.contains("stability")) c.stability = parse_stability(j.at("stability"));
  if (j.contains("shallow")) c.shallow = parse_shallow(j.at("shallow"));
  if (j.contains("vortex")) c.vortex = parse_vortex(j.at("vortex"));
  if (j.contains("orlicz")) c.orlicz = parse_orlicz(j.at("orlicz"));
  c.output = get_str(j, "", "output", c.output);
  if (c.output.empty()) throw ConfigError("config: \"output\" must not be empty");
  {
    const long long seed = static_cast<long long>(get_num(j, "", "seed", c.seed));
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_integer() || seed < 0)
        throw ConfigError("config: \"seed\" must be a nonnegative integer");
      c.seed = static_cast<unsigned>(seed);
    }
  }
  return c;
}

ExperimentConfig config_from_file(const std::string& path) {
  return config_from_json_text(read_text_file(path));
}

std::string config_to_json(const ExperimentConfig& cfg) { return config_echo(cfg).dump(2) + "\n"; }

PhysicalDomain build_domain(const ExperimentConfig& cfg) {
  if (cfg.domain.shape == "rect")
    return PhysicalDomain::rect(cfg.domain.hx, cfg.domain.hy, cfg.domain.quadrature);
  return PhysicalDomain::disk(cfg.domain.S, cfg.domain.quadrature);
}

DiscreteMeasure build_initial_measure(const ExperimentConfig& cfg) {
  const MeasureSpec& m = cfg.initial;
  if (m.kind == "vortex-patch")
    return rotating_patch::sample_patch(m.eps, 0.0, static_cast<std::size_t>(m.n), cfg.seed,
                                        m.random);
  if (m.kind == "file") return load_measure(m.path);
  DualGridDensity rho = bump_density(m.extent, m.resolution, m.center, m.width);
  if (m.mollify_width > 0.0) rho = mollify_density(rho, m.mollify_width);
  return particlize(rho, m.particles);
}

// ---------------------------------------------------------------- density --

double DualGridDensity::total() const {
  KahanSum acc;
  for (double v : rho) acc.add(v);
  return acc.value() * cell_area();
}

DualGridDensity bump_density(double extent, int resolution, Vec2 center, double width,
                             double total_mass) {
  DualGridDensity d;
  d.extent = extent;
  d.resolution = resolution;
  d.rho.assign(static_cast<std::size_t>(resolution) * resolution, 0.0);
  for (int iy = 0; iy < resolution; ++iy)
    for (int ix = 0; ix < resolution; ++ix) {
      const Vec2 X = d.node(ix, iy);
      const double r = norm(X - center);
      if (r >= width) continue;
      const double c = std::cos(0.5 * kPi * r / width);
      d.rho[static_cast<std::size_t>(iy) * resolution + ix] = c * c;
    }
  const double tot = d.total();
  if (!(tot > 0.0)) throw std::invalid_argument("bump density vanishes on the grid");
  const double s = total_mass / tot;
  for (double& v : d.rho) v *= s;
  return d;
}

DualGridDensity patch_density(double extent, int resolution, Vec2 center, double eps,
                              double total_mass) {
  DualGridDensity d;
  d.extent = extent;
  d.resolution = resolution;
  d.rho.assign(static_cast<std::size_t>(resolution) * resolution, 0.0);
  for (int iy = 0; iy < resolution; ++iy)
    for (int ix = 0; ix < resolution; ++ix)
      if (norm(d.node(ix, iy) - center) < eps)
        d.rho[static_cast<std::size_t>(iy) * resolution + ix] = 1.0;
  const double tot = d.total();
  if (!(tot > 0.0)) throw std::invalid_argument("patch density vanishes on the grid");
  const double s = total_mass / tot;
  for (double& v : d.rho) v *= s;
  return d;
}

DualGridDensity mollify_density(const DualGridDensity& f, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("mollify_density: width must be positive");
  const int res = f.resolution;
  const double h = 2.0 * f.extent / res;
  const int rw = static_cast<int>(std::ceil(width / h));
  // Discrete C^2 bump kernel on the stencil, normalized to unit sum so that
  // constants are preserved; the boundary truncation is repaired by a final
  // rescale to the exact original total.
  std::vector<double> kernel(static_cast<std::size_t>(2 * rw + 1) * (2 * rw + 1), 0.0);
  double ksum = 0.0;
  for (int dy = -rw; dy <= rw; ++dy)
    for (int dx = -rw; dx <= rw; ++dx) {
      const double r = std::hypot(dx * h, dy * h) / width;
      if (r >= 1.0) continue;
      const double e = 1.0 - r * r;
      kernel[static_cast<std::size_t>(dy + rw) * (2 * rw + 1) + (dx + rw)] = e * e * e;
      ksum += e * e * e;
    }
  DualGridDensity out;
  out.extent = f.extent;
  out.resolution = res;
  out.rho.assign(f.rho.size(), 0.0);
  for (int iy = 0; iy < res; ++iy)
    for (int ix = 0; ix < res; ++ix) {
      double acc = 0.0;
      for (int dy = -rw; dy <= rw; ++dy) {
        const int jy = iy + dy;
        if (jy < 0 || jy >= res) continue;
        for (int dx = -rw; dx <= rw; ++dx) {
          const int jx = ix + dx;
          if (jx < 0 || jx >= res) continue;
          const double kv = kernel[static_cast<std::size_t>(dy + rw) * (2 * rw + 1) + (dx + rw)];
          if (kv != 0.0) acc += kv * f.rho[static_cast<std::size_t>(jy) * res + jx];
        }
      }
      out.rho[static_cast<std::size_t>(iy) * res + ix] = acc / ksum;
    }
  const double before = f.total(), after = out.total();
  if (after > 0.0) {
    const double s = before / after;
    for (double& v : out.rho) v *= s;
  }
  return out;
}

double density_l1(const DualGridDensity& a, const DualGridDensity& b) {
  if (a.resolution != b.resolution || a.extent != b.extent)
    throw std::invalid_argument("density_l1: grids differ");
  KahanSum acc;
  for (std::size_t k = 0; k < a.rho.size(); ++k) acc.add(std::abs(a.rho[k] - b.rho[k]));
  return acc.value() * a.cell_area();
}

DiscreteMeasure particlize(const DualGridDensity& rho, int target_particles) {
  if (target_particles < 1)
    throw std::invalid_argument("particlize: target_particles must be >= 1");
  const int m = std::max(1, static_cast<int>(std::lround(std::sqrt(
                                static_cast<double>(target_particles)))));
  const double H = 2.0 * rho.extent / m;
  std::vector<double> mass(static_cast<std::size_t>(m) * m, 0.0);
  std::vector<double> cx(mass.size(), 0.0), cy(mass.size(), 0.0);
  const double area = rho.cell_area();
  for (int iy = 0; iy < rho.resolution; ++iy)
    for (int ix = 0; ix < rho.resolution; ++ix) {
      const double w = rho.rho[static_cast<std::size_t>(iy) * rho.resolution + ix] * area;
      if (w == 0.0) continue;
      const Vec2 X = rho.node(ix, iy);
      int bx = std::clamp(static_cast<int>((X.x + rho.extent) / H), 0, m - 1);
      int by = std::clamp(static_cast<int>((X.y + rho.extent) / H), 0, m - 1);
      const std::size_t b = static_cast<std::size_t>(by) * m + bx;
      mass[b] += w;
      cx[b] += w * X.x;
      cy[b] += w * X.y;
    }
  double total = 0.0;
  for (double w : mass) total += w;
  std::vector<Vec2> positions;
  std::vector<double> masses;
  double R0 = 0.0;
  for (std::size_t b = 0; b < mass.size(); ++b) {
    if (mass[b] <= 1e-12 * total) continue;
    const Vec2 X{cx[b] / mass[b], cy[b] / mass[b]};
    positions.push_back(X);
    masses.push_back(mass[b]);
    R0 = std::max(R0, norm(X));
  }
  return make_measure(std::move(positions), std::move(masses), R0, rho.extent);
}

// --------------------------------------------------------------- rate fit --

double fit_rotation_rate(const PhysicalDomain& dom, const FlowState& state, int max_samples) {
  if (state.history.size() < 2)
    throw std::invalid_argument("fit_rotation_rate: need at least two snapshots");
  const std::vector<std::size_t> idx =
      thin_indices(state.history.size(), static_cast<std::size_t>(std::max(2, max_samples)));
  std::vector<double> ts, thetas;
  for (std::size_t s : idx) {
    const double t = state.history[s].t;
    const PhysicalFlowField F = reconstruct_F(dom, state, t);
    KahanSum sc, ss;
    for (std::size_t k = 0; k < dom.node_count(); ++k) {
      const double w = dom.node_weight()[k];
      if (w == 0.0 || !F.map.defined[k]) continue;
      const Vec2 x = dom.nodes()[k];
      const Vec2 y = F.map.values[k];
      sc.add(w * dot(x, y));
      ss.add(w * cross(x, y));
    }
    double th = std::atan2(ss.value(), sc.value());
    if (!thetas.empty()) {
      while (th - thetas.back() > kPi) th -= 2.0 * kPi;
      while (th - thetas.back() < -kPi) th += 2.0 * kPi;
    }
    ts.push_back(t);
    thetas.push_back(th);
  }
  const std::size_t n = ts.size();
  double tbar = 0.0, thbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tbar += ts[i];
    thbar += thetas[i];
  }
  tbar /= static_cast<double>(n);
  thbar /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (ts[i] - tbar) * (thetas[i] - thbar);
    den += (ts[i] - tbar) * (ts[i] - tbar);
  }
  if (den == 0.0) throw std::invalid_argument("fit_rotation_rate: degenerate time samples");
  return num / den;
}

// ----------------------------------------------------------------- cmd_run --

int cmd_run(const ExperimentConfig& cfg) {
  const PhysicalDomain dom = build_domain(cfg);
  const DiscreteMeasure alpha0 = build_initial_measure(cfg);
  ensure_directory(cfg.output);

  RunOptions opts = make_run_options(cfg);
  if (cfg.ot_log) opts.ot.log_path = join_path(cfg.output, "ot_initial.csv");

  FlowState state;
  std::string failure;
  try {
    state = init_flow(dom, alpha0, opts.T, opts.ot, nullptr);
    opts.ot.log_path.clear();  // log covers the initial solve only
    const double dt = effective_dt(opts, state);
    const int stride = std::max(1, opts.save_stride);
    int k = 0;
    while (state.t < opts.T - 1e-12) {
      const double step_dt = std::min(dt, opts.T - state.t);
      step(dom, state, step_dt, opts);
      ++k;
      if (k % stride == 0 || state.t >= opts.T - 1e-12) push_snapshot(state);
    }
  } catch (const NonConvergence& e) {
    failure = e.what();
  }

  json manifest = manifest_base(cfg, "run");
  json outputs = json::array();

  if (!state.history.empty()) {
    write_trajectories(state, join_path(cfg.output, "trajectories.csv"));
    outputs.push_back("trajectories.csv");

    json fields = json::array();
    for (std::size_t s : thin_indices(state.history.size(), 8)) {
      const double t = state.history[s].t;
      char name[32];
      std::snprintf(name, sizeof name, "F_%04zu.csv", s);
      save_flow_field(dom, reconstruct_F(dom, state, t), join_path(cfg.output, name));
      fields.push_back({{"file", name}, {"t", t}});
      outputs.push_back(name);
    }
    manifest["flow_fields"] = fields;

    const double dt_eff = effective_dt(opts, state);
    json report = run_invariant_report(dom, state, dt_eff);
    if (cfg.initial.kind == "vortex-patch" && state.history.size() >= 2) {
      report["fitted_rate"] = fit_rotation_rate(dom, state);
      report["exact_rate"] = rotating_patch::angular_rate(cfg.initial.eps);
    }
    write_json_file(join_path(cfg.output, "invariant_report.json"), report);
    outputs.push_back("invariant_report.json");

    manifest["dt_effective"] = dt_eff;
    manifest["R_T"] = state.R_T;
    manifest["ot_stats"] = {{"solves", state.ot_solves},
                            {"iterations_total", state.ot_iterations},
                            {"iterations_max", state.ot_iterations_max}};
  }
  manifest["tolerances"] = {{"ot_tol", cfg.ot_tol}, {"snapshot_match", 1e-9}};
  manifest["status"] = failure.empty() ? "ok" : "nonconvergence";
  if (!failure.empty()) manifest["failure"] = failure;
  if (cfg.ot_log) outputs.push_back("ot_initial.csv");
  outputs.push_back("manifest.json");
  manifest["outputs"] = outputs;
  write_json_file(join_path(cfg.output, "manifest.json"), manifest);
  return failure.empty() ? 0 : 3;
}

// ---------------------------------------------------------- cmd_stability --

namespace {

struct FlowGaps {
  std::string label;
  double density_l1_gap = 0.0;
  double orlicz_gap = -1.0;  // < 0: not available
  double sup_phi = -1.0;
  std::vector<double> flow;  // row-major over (norms x times)
  double rate_fit = 0.0, rate_exact = 0.0;
  bool has_rate = false;
};

void write_stability_csv(const std::string& path, const StabilitySpec& st,
                         const std::string& label_name, const std::vector<FlowGaps>& rows,
                         bool pairwise) {
  std::ostringstream os;
  os << label_name << ",density_l1,orlicz_gap,sup_phi";
  if (!rows.empty() && rows.front().has_rate) os << ",rate_fit,rate_exact";
  for (double r : st.norms)
    for (double t : st.times)
      os << ',' << (pairwise ? "gap_prev" : "flow") << "_r" << csv_num_label(r) << "_t"
         << csv_num_label(t);
  os << '\n';
  for (const FlowGaps& g : rows) {
    os << g.label << ',' << fmt_double(g.density_l1_gap) << ','
       << (g.orlicz_gap >= 0.0 ? fmt_double(g.orlicz_gap) : "") << ','
       << (g.sup_phi >= 0.0 ? fmt_double(g.sup_phi) : "");
    if (g.has_rate) os << ',' << fmt_double(g.rate_fit) << ',' << fmt_double(g.rate_exact);
    for (double v : g.flow) os << ',' << (v >= 0.0 ? fmt_double(v) : "");
    os << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace

int cmd_stability(const ExperimentConfig& cfg) {
  const PhysicalDomain dom = build_domain(cfg);
  ensure_directory(cfg.output);
  const StabilitySpec& st = cfg.stability;

  RunOptions opts = make_run_options(cfg);
  opts.save_stride = 1;  // gap evaluation needs snapshots at the probe times
  // With an explicit step the probe times can be rejected before any run;
  // the auto-picked step is re-validated after each flow below.
  if (opts.dt > 0.0) validate_times(st.times, opts.T, opts.dt);

  json manifest = manifest_base(cfg, "stability");
  std::vector<FlowGaps> rows;
  json orlicz_info;

  if (st.generator == "vortex") {
    std::vector<FlowGaps> out;
    FlowState prev;
    DualGridDensity prev_density;
    std::vector<std::vector<double>> family;
    const int res = cfg.orlicz.resolution;
    const double extent = cfg.orlicz.extent;
    std::vector<double> weights(static_cast<std::size_t>(res) * res, 0.0);
    bool first = true;
    for (double eps : st.epsilons) {
      const DiscreteMeasure mu = rotating_patch::sample_patch(
          eps, 0.0, static_cast<std::size_t>(cfg.initial.n), cfg.seed, cfg.initial.random);
      FlowState state;
      drive_flow(dom, mu, opts, state);
      validate_times(st.times, state.history.back().t, effective_dt(opts, state));

      const DualGridDensity dens =
          patch_density(extent, res, rotating_patch::center(0.0), eps);
      family.push_back(dens.rho);
      if (first)
        std::fill(weights.begin(), weights.end(), dens.cell_area());

      FlowGaps g;
      g.label = csv_num_label(eps);
      g.has_rate = true;
      g.rate_fit = fit_rotation_rate(dom, state);
      g.rate_exact = rotating_patch::angular_rate(eps);
      if (!first) {
        g.density_l1_gap = density_l1(dens, prev_density);
        g.sup_phi = -1.0;
        for (double r : st.norms)
          for (double t : st.times)
            g.flow.push_back(lr_distance(dom, reconstruct_F(dom, state, t).map,
                                         reconstruct_F(dom, prev, t).map, r));
      } else {
        g.flow.assign(st.norms.size() * st.times.size(), -1.0);
      }
      out.push_back(g);
      prev = std::move(state);
      prev_density = dens;
      first = false;
    }
    const DominatingBuild build = build_dominating_N(family, weights);
    orlicz_info = {{"success", build.success},
                   {"message", build.message},
                   {"lambda", build.lambda},
                   {"tail_integral", build.tail_integral}};
    rows = std::move(out);
    write_stability_csv(join_path(cfg.output, "stability.csv"), st, "eps", rows, true);
  } else {
    // mollify / subsample toward the fixed density-grid reference.
    const MeasureSpec& ms = cfg.initial;
    const DualGridDensity base = bump_density(ms.extent, ms.resolution, ms.center, ms.width);
    const DiscreteMeasure ref_mu = particlize(base, ms.particles);
    FlowState ref;
    drive_flow(dom, ref_mu, opts, ref);
    validate_times(st.times, ref.history.back().t, effective_dt(opts, ref));
    std::vector<PhysicalFlowField> refF;
    for (double t : st.times) refF.push_back(reconstruct_F(dom, ref, t));

    std::vector<std::vector<double>> family{base.rho};
    std::vector<double> weights(base.rho.size(), base.cell_area());
    std::vector<DualGridDensity> member_density;
    std::vector<FlowGaps> out;

    if (st.generator == "mollify") {
      for (double w : st.widths) {
        const DualGridDensity dens = mollify_density(base, w);
        const DiscreteMeasure mu = particlize(dens, ms.particles);
        FlowState state;
        drive_flow(dom, mu, opts, state);
        FlowGaps g;
        g.label = csv_num_label(w);
        g.density_l1_gap = density_l1(dens, base);
        g.sup_phi = sup_phi_statistic(state, ref);
        for (std::size_t ri = 0; ri < st.norms.size(); ++ri)
          for (std::size_t ti = 0; ti < st.times.size(); ++ti)
            g.flow.push_back(lr_distance(dom, reconstruct_F(dom, state, st.times[ti]).map,
                                         refF[ti].map, st.norms[ri]));
        family.push_back(dens.rho);
        member_density.push_back(dens);
        out.push_back(std::move(g));
      }
    } else {  // subsample
      for (int c : st.counts) {
        const DiscreteMeasure mu = particlize(base, c);
        FlowState state;
        drive_flow(dom, mu, opts, state);
        FlowGaps g;
        g.label = std::to_string(c);
        g.density_l1_gap = 0.0;  // same underlying density
        g.sup_phi = sup_phi_statistic(state, ref);
        for (std::size_t ri = 0; ri < st.norms.size(); ++ri)
          for (std::size_t ti = 0; ti < st.times.size(); ++ti)
            g.flow.push_back(lr_distance(dom, reconstruct_F(dom, state, st.times[ti]).map,
                                         refF[ti].map, st.norms[ri]));
        out.push_back(std::move(g));
      }
    }

    const DominatingBuild build = build_dominating_N(family, weights);
    orlicz_info = {{"success", build.success},
                   {"message", build.message},
                   {"lambda", build.lambda},
                   {"tail_integral", build.tail_integral}};
    if (build.success) {
      save_nfunction(build.A, join_path(cfg.output, "A_table.csv"));
      orlicz_info["bound_B"] = build.bound_B;
      orlicz_info["table"] = "A_table.csv";
      for (std::size_t i = 0; i < member_density.size(); ++i) {
        std::vector<double> diff(base.rho.size());
        for (std::size_t k = 0; k < diff.size(); ++k)
          diff[k] = member_density[i].rho[k] - base.rho[k];
        out[i].orlicz_gap = luxemburg_norm(diff, weights, build.A);
      }
    }
    rows = std::move(out);
    write_stability_csv(join_path(cfg.output, "stability.csv"), st, st.generator == "mollify" ? "width" : "count",
                        rows, false);
  }

  manifest["orlicz"] = orlicz_info;
  manifest["outputs"] = json::array({"stability.csv", "manifest.json"});
  write_json_file(join_path(cfg.output, "manifest.json"), manifest);
  return 0;
}

// ----------------------------------------------------- cmd_vortex_validate --

int cmd_vortex_validate(const ExperimentConfig& cfg) {
  const PhysicalDomain dom = build_domain(cfg);
  ensure_directory(cfg.output);
  RunOptions opts = make_run_options(cfg);

  json runs = json::array();
  std::string failure;
  for (double eps : cfg.vortex.epsilons) {
    const DiscreteMeasure mu = rotating_patch::sample_patch(
        eps, 0.0, static_cast<std::size_t>(cfg.initial.n), cfg.seed, cfg.initial.random);
    FlowState state;
    try {
      drive_flow(dom, mu, opts, state);
    } catch (const NonConvergence& e) {
      failure = e.what();
      runs.push_back({{"eps", eps}, {"status", "nonconvergence"}, {"failure", failure}});
      break;
    }

    const std::vector<Vec2>& y0 = state.history.front().positions;
    double dual_err = 0.0;
    for (const FlowSnapshot& s : state.history)
      for (std::size_t i = 0; i < y0.size(); ++i)
        dual_err = std::max(
            dual_err, norm(s.positions[i] - rotating_patch::exact_dual_flow(y0[i], s.t, eps)));

    const double t_final = state.history.back().t;
    const double rate_exact = rotating_patch::angular_rate(eps);
    const PhysicalFlowField F = reconstruct_F(dom, state, t_final);
    const double f_l2 =
        lr_distance(dom, F.map, rotation_field(dom, rate_exact * t_final), 2.0);
    const double rate_fit = fit_rotation_rate(dom, state);

    runs.push_back({{"eps", eps},
                    {"n", cfg.initial.n},
                    {"T", t_final},
                    {"status", "ok"},
                    {"dual_max_error", dual_err},
                    {"f_l2_error", f_l2},
                    {"rate_fit", rate_fit},
                    {"rate_exact", rate_exact},
                    {"rate_abs_error", std::abs(rate_fit - rate_exact)},
                    {"rate_rel_error", rate_exact != 0.0
                                           ? std::abs(rate_fit - rate_exact) / std::abs(rate_exact)
                                           : std::abs(rate_fit)}});
  }

  json report;
  report["runs"] = runs;
  write_json_file(join_path(cfg.output, "vortex_report.json"), report);

  json manifest = manifest_base(cfg, "vortex-validate");
  manifest["status"] = failure.empty() ? "ok" : "nonconvergence";
  if (!failure.empty()) manifest["failure"] = failure;
  manifest["outputs"] = json::array({"vortex_report.json", "manifest.json"});
  write_json_file(join_path(cfg.output, "manifest.json"), manifest);
  return failure.empty() ? 0 : 3;
}

// -------------------------------------------------------- cmd_orlicz_demo --

int cmd_orlicz_demo(const ExperimentConfig& cfg) {
  const OrliczSpec& os = cfg.orlicz;
  ensure_directory(cfg.output);

  std::vector<std::vector<double>> family;
  std::vector<std::string> labels;
  DualGridDensity base;
  std::vector<DualGridDensity> members;

  if (os.family == "vortex") {
    for (double eps : os.epsilons) {
      members.push_back(
          patch_density(os.extent, os.resolution, rotating_patch::center(0.0), eps));
      labels.push_back("eps=" + csv_num_label(eps));
    }
  } else {
    base = bump_density(os.extent, os.resolution, os.center, os.width);
    members.push_back(base);
    labels.push_back("base");
    if (os.family == "mollified")
      for (double w : os.widths) {
        members.push_back(mollify_density(base, w));
        labels.push_back("width=" + csv_num_label(w));
      }
  }
  for (const DualGridDensity& d : members) family.push_back(d.rho);
  const std::vector<double> weights(family.front().size(), members.front().cell_area());

  const DominatingBuild build = build_dominating_N(family, weights);
  json report;
  report["family"] = os.family;
  report["labels"] = labels;
  report["status"] = build.success ? "built" : "not-uniformly-integrable";
  report["message"] = build.message;
  report["lambda"] = build.lambda;
  report["tail_integral"] = build.tail_integral;

  if (build.success) {
    const DeltaRegularity delta = delta_regular_check(build.A, 1.0);
    report["delta"] = {{"regular", delta.regular}, {"C", delta.C}};
    report["bound_B"] = build.bound_B;
    save_nfunction(build.A, join_path(cfg.output, "A_table.csv"));
    report["table"] = "A_table.csv";

    json norms = json::array();
    for (std::size_t i = 0; i < members.size(); ++i) {
      json row = {{"label", labels[i]},
                  {"luxemburg", luxemburg_norm(members[i].rho, weights, build.A)}};
      if (os.family == "mollified" && i > 0) {
        std::vector<double> diff(base.rho.size());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = members[i].rho[k] - base.rho[k];
        row["difference_luxemburg"] = luxemburg_norm(diff, weights, build.A);
        row["difference_l1"] = density_l1(members[i], base);
      }
      norms.push_back(row);
    }
    report["norms"] = norms;
  }
  write_json_file(join_path(cfg.output, "orlicz_report.json"), report);

  json manifest = manifest_base(cfg, "orlicz-demo");
  manifest["status"] = report["status"];
  manifest["outputs"] = json::array({"orlicz_report.json", "manifest.json"});
  if (build.success) manifest["outputs"].push_back("A_table.csv");
  write_json_file(join_path(cfg.output, "manifest.json"), manifest);
  return 0;
}

// --------------------------------------------------------- cmd_shallow_run --

namespace {

HeightField initial_height(const PhysicalDomain& dom, const ShallowSpec& sw) {
  if (sw.h0 == "uniform") return HeightField::uniform(dom, sw.value);
  HeightField h = HeightField::uniform(dom, 0.0);
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (dom.node_weight()[k] == 0.0) continue;
    const double r = norm(dom.nodes()[k] - sw.center);
    h.h.values[k] = sw.value * std::max(0.0, 1.0 - r / dom.S());
  }
  return h;
}

void write_height_csv(const PhysicalDomain& dom, const ScalarField& h, const std::string& path) {
  std::ostringstream os;
  os << "x,y,h\n";
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (dom.node_weight()[k] == 0.0) continue;
    os << fmt_double(dom.nodes()[k].x) << ',' << fmt_double(dom.nodes()[k].y) << ','
       << fmt_double(h.values[k]) << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace

int cmd_shallow_run(const ExperimentConfig& cfg) {
  const PhysicalDomain dom = build_domain(cfg);
  const DiscreteMeasure alpha0 = build_initial_measure(cfg);
  ensure_directory(cfg.output);

  const SwFixedPointOptions fp{cfg.shallow.damping, cfg.shallow.max_outer, cfg.shallow.tol};
  RunOptions opts = make_run_options(cfg);

  ShallowRun run;
  HeightField h = initial_height(dom, cfg.shallow);
  std::string failure;
  try {
    KantorovichWeights w;
    SwIterateStatus st0 = sw_consistency_iterate(dom, alpha0, w, h, fp, opts.ot);
    run.h0 = h;
    opts.node_density = &h.h.values;
    run.flow = init_flow(dom, alpha0, opts.T, opts.ot, opts.node_density);
    run.statuses.push_back(std::move(st0));
    run.height_times.push_back(0.0);
    run.heights.push_back(h.h);

    const double dt = effective_dt(opts, run.flow);
    const int stride = std::max(1, opts.save_stride);
    int k = 0;
    while (run.flow.t < opts.T - 1e-12) {
      const double step_dt = std::min(dt, opts.T - run.flow.t);
      step(dom, run.flow, step_dt, opts);
      ++k;
      if (k % stride == 0 || run.flow.t >= opts.T - 1e-12) {
        run.statuses.push_back(sw_refit(dom, run.flow, h, fp, opts.ot));
        run.height_times.push_back(run.flow.t);
        run.heights.push_back(h.h);
        push_snapshot(run.flow);
      }
    }
  } catch (const NonConvergence& e) {
    failure = e.what();
  }

  json manifest = manifest_base(cfg, "shallow-run");
  json outputs = json::array();

  if (!run.flow.history.empty()) {
    write_trajectories(run.flow, join_path(cfg.output, "trajectories.csv"));
    outputs.push_back("trajectories.csv");
  }
  json heights = json::array();
  for (std::size_t s : thin_indices(run.heights.size(), 8)) {
    char name[32];
    std::snprintf(name, sizeof name, "h_%04zu.csv", s);
    write_height_csv(dom, run.heights[s], join_path(cfg.output, name));
    heights.push_back({{"file", name}, {"t", run.height_times[s]}});
    outputs.push_back(name);
  }
  manifest["height_fields"] = heights;

  json statuses = json::array();
  for (const SwIterateStatus& st : run.statuses) statuses.push_back(json::parse(sw_status_to_json(st)));
  write_json_file(join_path(cfg.output, "sw_status.json"), statuses);
  outputs.push_back("sw_status.json");

  if (!run.flow.history.empty() && failure.empty()) {
    json report;
    report["mass_total"] = total_mass(run.flow.particles);
    json volumes = json::array();
    for (const ScalarField& hf : run.heights) volumes.push_back(HeightField{hf}.total(dom));
    report["fluid_volume"] = volumes;

    const PhysicalFlowField F0 = sw_reconstruct_F(dom, run, 0.0);
    report["pushforward_t0"] =
        sw_pushforward_stat(dom, F0.map, run.h0, run.h0);
    const double t_final = run.flow.history.back().t;
    const PhysicalFlowField FT = sw_reconstruct_F(dom, run, t_final);
    report["pushforward_final"] =
        sw_pushforward_stat(dom, FT.map, run.h0, HeightField{run.heights.back()});
    report["convexity_defect_final"] = HeightField{run.heights.back()}.convexity_defect(dom);
    bool all_nonneg = true;
    for (double v : run.heights.back().values) all_nonneg = all_nonneg && v >= 0.0;
    report["height_nonnegative"] = all_nonneg;
    bool all_conv = true;
    for (const SwIterateStatus& st : run.statuses) all_conv = all_conv && st.converged;
    report["fixed_point_all_converged"] = all_conv;
    write_json_file(join_path(cfg.output, "shallow_report.json"), report);
    outputs.push_back("shallow_report.json");

    manifest["dt_effective"] = effective_dt(opts, run.flow);
    manifest["R_T"] = run.flow.R_T;
    manifest["ot_stats"] = {{"solves", run.flow.ot_solves},
                            {"iterations_total", run.flow.ot_iterations},
                            {"iterations_max", run.flow.ot_iterations_max}};
  }
  manifest["status"] = failure.empty() ? "ok" : "nonconvergence";
  if (!failure.empty()) manifest["failure"] = failure;
  manifest["realization"] =
      "height/potential coupling realized by a damped fixed point between transport "
      "solves; convergence status reported per refit, not assumed";
  outputs.push_back("manifest.json");
  manifest["outputs"] = outputs;
  write_json_file(join_path(cfg.output, "manifest.json"), manifest);
  return failure.empty() ? 0 : 3;
}

// ------------------------------------------------------ cmd_dump_potential --

int cmd_dump_potential(const ExperimentConfig& cfg) {
  const PhysicalDomain dom = build_domain(cfg);
  const DiscreteMeasure alpha0 = build_initial_measure(cfg);
  ensure_directory(cfg.output);

  SolveOptions ot;
  ot.tol = cfg.ot_tol;
  ot.max_iter = cfg.ot_max_iter;
  KantorovichWeights w;
  std::string failure;
  try {
    solve_weights(dom, alpha0, w, ot);
  } catch (const NonConvergence& e) {
    failure = e.what();
  }
  if (failure.empty())
    write_text_file(join_path(cfg.output, "potential.json"),
                    potential_to_json(make_potential(alpha0, w)));

  json manifest = manifest_base(cfg, "dump-potential");
  manifest["status"] = failure.empty() ? "ok" : "nonconvergence";
  if (!failure.empty()) manifest["failure"] = failure;
  manifest["outputs"] = failure.empty() ? json::array({"potential.json", "manifest.json"})
                                        : json::array({"manifest.json"});
  write_json_file(join_path(cfg.output, "manifest.json"), manifest);
  return failure.empty() ? 0 : 3;
}

}  // namespace sg
