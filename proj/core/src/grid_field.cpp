#include "sg/grid_field.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sg/io.hpp"
#include "sg/kahan.hpp"

namespace sg {

GridField GridField::empty(const PhysicalDomain& dom) {
  GridField f;
  f.nq = dom.nq();
  f.S = dom.S();
  f.values.assign(dom.node_count(), Vec2{});
  f.defined.assign(dom.node_count(), 0);
  return f;
}

GridField GridField::identity(const PhysicalDomain& dom) {
  GridField f = empty(dom);
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (dom.inside()[k]) {
      f.values[k] = dom.nodes()[k];
      f.defined[k] = 1;
    }
  }
  return f;
}

double lr_distance(const PhysicalDomain& dom, const GridField& F, const GridField& G,
                   double r, const std::vector<double>* node_scale) {
  if (!F.same_frame(G) || F.nq != dom.nq() || F.S != dom.S())
    throw std::invalid_argument("lr_distance: mismatched grids");
  if (!(r >= 1.0)) throw std::invalid_argument("lr_distance: r must be >= 1");
  if (node_scale && node_scale->size() != dom.node_count())
    throw std::invalid_argument("lr_distance: node_scale size mismatch");
  KahanSum acc;
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (!F.defined[k] || !G.defined[k]) continue;
    double w = dom.node_weight()[k];
    if (node_scale) w *= (*node_scale)[k];
    if (w == 0.0) continue;
    const double d = norm(F.values[k] - G.values[k]);
    acc.add(w * std::pow(d, r));
  }
  return std::pow(acc.value(), 1.0 / r);
}

double pushforward_discrepancy(const PhysicalDomain& dom, const GridField& F,
                               const std::vector<double>& source_weights,
                               const DiscreteMeasure& target) {
  if (F.nq != dom.nq() || F.S != dom.S())
    throw std::invalid_argument("pushforward_discrepancy: mismatched grids");
  if (source_weights.size() != dom.node_count())
    throw std::invalid_argument("pushforward_discrepancy: source weight size mismatch");
  std::vector<KahanSum> credited(target.size());
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    if (!F.defined[k] || source_weights[k] == 0.0) continue;
    const Vec2 y = F.values[k];
    std::size_t best = 0;
    double best_d = norm2(y - target.positions[0]);
    for (std::size_t i = 1; i < target.size(); ++i) {
      const double d = norm2(y - target.positions[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    credited[best].add(source_weights[k]);
  }
  KahanSum gap;
  for (std::size_t i = 0; i < target.size(); ++i)
    gap.add(std::abs(credited[i].value() - target.masses[i]));
  return gap.value();
}

void save_grid_field(const PhysicalDomain& dom, const GridField& f, const std::string& path) {
  std::ostringstream out;
  out << "x,y,v1,v2,defined\n";
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const Vec2 p = dom.nodes()[k];
    out << fmt_double(p.x) << ',' << fmt_double(p.y) << ',' << fmt_double(f.values[k].x)
        << ',' << fmt_double(f.values[k].y) << ',' << int(f.defined[k]) << '\n';
  }
  write_text_file(path, out.str());
}

GridField load_grid_field(const PhysicalDomain& dom, const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("grid field: empty file " + path);
  GridField f = GridField::empty(dom);
  std::size_t k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (k >= dom.node_count()) throw std::runtime_error("grid field: too many rows in " + path);
    const auto cells = split_csv_line(line);
    if (cells.size() != 5) throw std::runtime_error("grid field: bad row in " + path);
    f.values[k] = {std::stod(cells[2]), std::stod(cells[3])};
    f.defined[k] = static_cast<std::uint8_t>(std::stoi(cells[4]));
    ++k;
  }
  if (k != dom.node_count()) throw std::runtime_error("grid field: row count mismatch in " + path);
  return f;
}

ScalarField ScalarField::constant(const PhysicalDomain& dom, double c) {
  ScalarField f;
  f.nq = dom.nq();
  f.S = dom.S();
  f.values.assign(dom.node_count(), c);
  return f;
}

void save_scalar_field(const PhysicalDomain& dom, const ScalarField& f, const std::string& path) {
  std::ostringstream out;
  out << "x,y,v1,defined\n";
  for (std::size_t k = 0; k < dom.node_count(); ++k) {
    const Vec2 p = dom.nodes()[k];
    out << fmt_double(p.x) << ',' << fmt_double(p.y) << ',' << fmt_double(f.values[k]) << ','
        << int(dom.inside()[k]) << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace sg
