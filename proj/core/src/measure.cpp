#include "sg/measure.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sg/io.hpp"
#include "sg/kahan.hpp"

namespace sg {

DiscreteMeasure make_measure(std::vector<Vec2> positions, std::vector<double> masses,
                             double R0, double length_scale) {
  if (positions.size() != masses.size())
    throw std::invalid_argument("measure: positions/masses size mismatch");
  if (positions.empty()) throw std::invalid_argument("measure: no particles");
  if (!(R0 >= 0.0)) throw std::invalid_argument("measure: R0 must be nonnegative");
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] > 0.0))
      throw std::invalid_argument("measure: particle " + std::to_string(i) +
                                  " has non-positive mass");
  }
  double scale = length_scale > 0.0 ? length_scale : (R0 > 0.0 ? R0 : 1.0);

  // Separate exact duplicates deterministically.  Directions come from the
  // golden angle so repeated collisions at one site fan out; the loop is
  // bounded because each pass strictly shrinks the duplicate set.
  const double golden = 2.399963229728653;
  for (int pass = 1; pass <= 64; ++pass) {
    std::map<std::pair<double, double>, std::size_t> seen;
    bool any = false;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      auto key = std::make_pair(positions[i].x, positions[i].y);
      auto [it, fresh] = seen.emplace(key, i);
      if (!fresh) {
        const double r = 1e-9 * scale * pass;
        const double a = golden * static_cast<double>(i + 1);
        positions[i] += Vec2{r * std::cos(a), r * std::sin(a)};
        any = true;
      }
    }
    if (!any) break;
  }

  double rmax = 0.0;
  for (const Vec2& p : positions) rmax = std::max(rmax, norm(p));
  if (rmax > R0 * (1.0 + 1e-12) + 1e-9 * scale)
    throw std::invalid_argument("measure: particle outside declared support bound R0");

  DiscreteMeasure mu;
  mu.positions = std::move(positions);
  mu.masses = std::move(masses);
  mu.R0 = R0;
  return mu;
}

double total_mass(const DiscreteMeasure& mu) { return kahan_total(mu.masses); }

double support_radius(const DiscreteMeasure& mu) {
  double r = 0.0;
  for (const Vec2& p : mu.positions) r = std::max(r, norm(p));
  return r;
}

double support_bound(double R0, double S, double T) {
  const double eT = std::exp(T);
  return R0 * eT + (eT - 1.0) * S;
}

std::string measure_to_json(const DiscreteMeasure& mu) {
  nlohmann::json j;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const Vec2& p : mu.positions) pts.push_back({p.x, p.y});
  j["masses"] = mu.masses;
  j["R0"] = mu.R0;
  return j.dump(2);
}

DiscreteMeasure measure_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.contains("points") || !j.contains("masses") || !j.contains("R0"))
    throw std::invalid_argument("measure: JSON must contain points, masses, R0");
  std::vector<Vec2> pos;
  for (const auto& p : j.at("points")) pos.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  std::vector<double> m = j.at("masses").get<std::vector<double>>();
  return make_measure(std::move(pos), std::move(m), j.at("R0").get<double>());
}

void save_measure(const DiscreteMeasure& mu, const std::string& path) {
  write_text_file(path, measure_to_json(mu));
}

DiscreteMeasure load_measure(const std::string& path) {
  return measure_from_json(read_text_file(path));
}

}  // namespace sg
