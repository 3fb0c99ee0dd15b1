#include "sg/potential.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace sg {

std::size_t ConvexPotential::argmax(Vec2 x) const {
  std::size_t best = 0;
  double sbest = dot(x, slopes[0]) - psi[0];
  for (std::size_t i = 1; i < slopes.size(); ++i) {
    const double s = dot(x, slopes[i]) - psi[i];
    if (s > sbest) {
      sbest = s;
      best = i;
    }
  }
  return best;
}

double ConvexPotential::eval(Vec2 x) const {
  const std::size_t i = argmax(x);
  return dot(x, slopes[i]) - psi[i];
}

Vec2 ConvexPotential::grad(Vec2 x) const { return slopes[argmax(x)]; }

ConvexPotential make_potential(const DiscreteMeasure& mu, const KantorovichWeights& w) {
  if (mu.size() != w.psi.size())
    throw std::invalid_argument("make_potential: measure/weights size mismatch");
  if (mu.size() == 0) throw std::invalid_argument("make_potential: empty measure");
  return ConvexPotential{mu.positions, w.psi};
}

LegendreDual legendre_dual(const ConvexPotential& pot, const LaguerreTessellation& tess) {
  if (tess.cells() != pot.size())
    throw std::invalid_argument("legendre_dual: tessellation size mismatch");
  LegendreDual dual;
  dual.values = pot.psi;
  dual.selection = tess.centroid;
  dual.valid = tess.centroid_valid;
  return dual;
}

double legendre_numeric(const PhysicalDomain& dom, const ConvexPotential& pot, Vec2 Y) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (!dom.inside()[k]) continue;
    const Vec2 x = dom.nodes()[k];
    const double v = dot(x, Y) - pot.eval(x);
    if (v > best) best = v;
  }
  if (!std::isfinite(best)) throw std::runtime_error("legendre_numeric: no inside nodes");
  return best;
}

Vec2 grad_p_star(const ConvexPotential& pot, const LegendreDual& dual, Vec2 Y) {
  if (dual.selection.size() != pot.size())
    throw std::invalid_argument("grad_p_star: dual size mismatch");
  std::size_t best = 0;
  double dbest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pot.size(); ++i) {
    const double d = norm2(Y - pot.slopes[i]) - 2.0 * pot.psi[i];
    if (d < dbest) {
      dbest = d;
      best = i;
    }
  }
  if (!dual.valid[best]) throw DegenerateCell(best);
  return dual.selection[best];
}

double fenchel_gap(const PhysicalDomain& dom, const ConvexPotential& pot, Vec2 x, Vec2 Y) {
  return pot.eval(x) + legendre_numeric(dom, pot, Y) - dot(x, Y);
}

std::string potential_to_json(const ConvexPotential& pot) {
  nlohmann::json j;
  auto& sl = j["slopes"] = nlohmann::json::array();
  for (const Vec2& s : pot.slopes) sl.push_back({s.x, s.y});
  auto& in = j["intercepts"] = nlohmann::json::array();
  for (double p : pot.psi) in.push_back(-p);
  j["gauge"] = 0.0;
  return j.dump(2);
}

ConvexPotential potential_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ConvexPotential pot;
  for (const auto& s : j.at("slopes")) pot.slopes.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  for (const auto& b : j.at("intercepts")) pot.psi.push_back(-b.get<double>());
  const double gauge = j.value("gauge", 0.0);
  for (double& p : pot.psi) p += gauge;
  if (pot.slopes.empty() || pot.slopes.size() != pot.psi.size())
    throw std::invalid_argument("potential: bad JSON shape");
  return pot;
}

}  // namespace sg
