#include "sg/orlicz.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sg/io.hpp"
#include "sg/kahan.hpp"

namespace sg {

namespace {

// Index of the knot interval containing t (t <= t_max assumed).
std::size_t interval_of(const std::vector<double>& knots, double t) {
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - knots.begin());
  return j == 0 ? 0 : j - 1;
}

std::vector<double> integrate_density(const std::vector<double>& knots,
                                      const std::vector<double>& density) {
  std::vector<double> cum(knots.size(), 0.0);
  KahanSum acc;
  for (std::size_t j = 1; j < knots.size(); ++j) {
    acc.add(0.5 * (density[j - 1] + density[j]) * (knots[j] - knots[j - 1]));
    cum[j] = acc.value();
  }
  return cum;
}

}  // namespace

double NFunction::density_at(double t) const {
  if (t <= 0.0) return 0.0;
  const double tm = t_max();
  if (t <= tm) {
    const std::size_t j = interval_of(knots, t);
    if (j + 1 >= knots.size()) return density.back();
    const double u = (t - knots[j]) / (knots[j + 1] - knots[j]);
    return density[j] + u * (density[j + 1] - density[j]);
  }
  const double a_end = density.back();
  switch (tail) {
    case Tail::Power:
      return a_end * std::pow(t / tm, tail_param - 1.0);
    case Tail::Exponential:
      return a_end * std::exp(tail_param * (t - tm));
    case Tail::Log:
      return a_end + std::log(t / tm) / tail_param;
  }
  return a_end;
}

double NFunction::eval(double t) const {
  t = std::abs(t);
  if (t == 0.0) return 0.0;
  const double tm = t_max();
  if (t <= tm) {
    const std::size_t j = interval_of(knots, t);
    return cum[j] + 0.5 * (density[j] + density_at(t)) * (t - knots[j]);
  }
  const double a_end = density.back();
  const double A_end = cum.back();
  switch (tail) {
    case Tail::Power: {
      const double p = tail_param;
      return A_end + a_end * tm / p * (std::pow(t / tm, p) - 1.0);
    }
    case Tail::Exponential: {
      const double k = tail_param;
      return A_end + a_end / k * (std::exp(k * (t - tm)) - 1.0);
    }
    case Tail::Log: {
      const double k = tail_param;
      const double d = t - tm;
      return A_end + a_end * d + (t * std::log(t / tm) - d) / k;
    }
  }
  return A_end;
}

void NFunction::validate() const {
  if (knots.size() < 2 || knots.size() != density.size() || knots.size() != cum.size())
    throw std::invalid_argument("N-function: malformed table");
  if (knots.front() != 0.0 || density.front() != 0.0)
    throw std::invalid_argument("N-function: density must vanish at 0");
  for (std::size_t j = 1; j < knots.size(); ++j) {
    if (!(knots[j] > knots[j - 1]))
      throw std::invalid_argument("N-function: knots must be strictly increasing");
    if (density[j] < density[j - 1])
      throw std::invalid_argument("N-function: density must be nondecreasing");
  }
  if (!(density.back() > 0.0))
    throw std::invalid_argument("N-function: density must become positive");
  if (tail == Tail::Power && !(tail_param > 1.0))
    throw std::invalid_argument("N-function: power tail needs exponent > 1");
  if (tail != Tail::Power && !(tail_param > 0.0))
    throw std::invalid_argument("N-function: tail rate must be positive");
}

NFunction NFunction::power(double p, double scale, double tmax, std::size_t knot_count) {
  if (!(p > 1.0)) throw std::invalid_argument("power N-function needs p > 1");
  NFunction A;
  A.knots.resize(knot_count);
  A.density.resize(knot_count);
  for (std::size_t j = 0; j < knot_count; ++j) {
    const double t = tmax * static_cast<double>(j) / static_cast<double>(knot_count - 1);
    A.knots[j] = t;
    A.density[j] = scale * p * std::pow(t, p - 1.0);
  }
  // The density integrates in closed form; an exact cumulative keeps the
  // quadrature bias of the near-zero cells (where t^(p-1) has unbounded
  // curvature for p < 2) out of the whole table.
  A.cum.resize(knot_count);
  for (std::size_t j = 0; j < knot_count; ++j) A.cum[j] = scale * std::pow(A.knots[j], p);
  A.tail = Tail::Power;
  A.tail_param = p;
  A.validate();
  return A;
}

NFunction NFunction::exp_growth(double kappa, double tmax, std::size_t knot_count) {
  NFunction A;
  A.knots.resize(knot_count);
  A.density.resize(knot_count);
  for (std::size_t j = 0; j < knot_count; ++j) {
    const double t = tmax * static_cast<double>(j) / static_cast<double>(knot_count - 1);
    A.knots[j] = t;
    A.density[j] = t == 0.0 ? 0.0 : std::expm1(kappa * t);
  }
  A.cum = integrate_density(A.knots, A.density);
  A.tail = Tail::Exponential;
  A.tail_param = kappa;
  A.validate();
  return A;
}

NFunction NFunction::from_density_table(std::vector<double> knots, std::vector<double> density,
                                        Tail tail, double tail_param) {
  NFunction A;
  A.knots = std::move(knots);
  A.density = std::move(density);
  A.cum = integrate_density(A.knots, A.density);
  A.tail = tail;
  A.tail_param = tail_param;
  A.validate();
  return A;
}

NFunction conjugate(const NFunction& A) {
  A.validate();
  // The conjugate's density is the generalized inverse of A's density:
  // swap the axes of the (t, a) graph, merging flat segments (which become
  // jumps and carry no integral).
  std::vector<double> s_knots, t_values;
  s_knots.push_back(0.0);
  t_values.push_back(0.0);
  for (std::size_t j = 1; j < A.knots.size(); ++j) {
    const double s = A.density[j];
    if (s > s_knots.back()) {
      s_knots.push_back(s);
      t_values.push_back(A.knots[j]);
    } else {
      t_values.back() = std::max(t_values.back(), A.knots[j]);
    }
  }
  if (s_knots.size() < 2)
    throw std::invalid_argument("conjugate: density has no increase to invert");

  NFunction::Tail tail;
  double param;
  switch (A.tail) {
    case NFunction::Tail::Power:
      tail = NFunction::Tail::Power;
      param = A.tail_param / (A.tail_param - 1.0);
      break;
    case NFunction::Tail::Exponential:
      tail = NFunction::Tail::Log;
      param = A.tail_param;
      break;
    default:
      tail = NFunction::Tail::Exponential;
      param = A.tail_param;
      break;
  }
  return NFunction::from_density_table(std::move(s_knots), std::move(t_values), tail, param);
}

double luxemburg_norm(const std::vector<double>& values, const std::vector<double>& weights,
                      const NFunction& A) {
  if (values.size() != weights.size())
    throw std::invalid_argument("luxemburg_norm: size mismatch");
  double vmax = 0.0;
  bool carries_mass = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::abs(values[i]);
    if (weights[i] > 0.0 && v > 0.0) {
      carries_mass = true;
      vmax = std::max(vmax, v);
    }
  }
  if (!carries_mass) return 0.0;

  auto modular = [&](double k) {
    KahanSum acc;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (weights[i] == 0.0) continue;
      acc.add(weights[i] * A.eval(std::abs(values[i]) / k));
    }
    return acc.value();
  };

  // Bracket [k_lo, k_hi] with modular(k_hi) <= 1 <= modular(k_lo).
  double k_hi = vmax;
  int expansions = 0;
  while (modular(k_hi) > 1.0) {
    k_hi *= 2.0;
    if (++expansions > 200) throw std::runtime_error("luxemburg_norm: bracket failure (upper)");
  }
  double k_lo = 0.5 * k_hi;
  while (modular(k_lo) < 1.0) {
    k_hi = k_lo;
    k_lo *= 0.5;
    if (++expansions > 200) return k_hi;  // modular < 1 down to numerical zero
  }

  double k = 0.5 * (k_lo + k_hi);
  for (int it = 0; it < 200; ++it) {
    k = 0.5 * (k_lo + k_hi);
    const double m = modular(k);
    if (std::abs(m - 1.0) <= 1e-6) return k;
    if (m > 1.0)
      k_lo = k;
    else
      k_hi = k;
    if (k_hi - k_lo <= 1e-14 * k_hi) break;
  }
  return k;
}

DeltaRegularity delta_regular_check(const NFunction& A, double t0) {
  if (!(t0 > 0.0)) throw std::invalid_argument("delta_regular_check: t0 must be positive");
  DeltaRegularity out;
  out.regular = A.tail != NFunction::Tail::Exponential;
  double sup = 0.0;
  auto probe = [&](double t) {
    const double at = A.eval(t);
    const double a2 = A.eval(2.0 * t);
    if (at <= 0.0) {
      if (a2 > 0.0) out.regular = false;  // doubling unbounded where A vanishes
      return;
    }
    if (std::isfinite(a2) && std::isfinite(at)) sup = std::max(sup, a2 / at);
  };
  probe(t0);
  for (double t : A.knots)
    if (t >= t0) probe(t);
  double t = std::max(t0, A.t_max());
  for (int j = 0; j < 40 && out.regular; ++j) {
    probe(t);
    t *= 2.0;
    if (!std::isfinite(A.eval(t))) break;
  }
  out.C = sup;
  return out;
}

DominatingBuild build_dominating_N(const std::vector<std::vector<double>>& family,
                                   const std::vector<double>& weights, int j_max) {
  DominatingBuild out;
  if (family.empty()) throw std::invalid_argument("build_dominating_N: empty family");
  for (const auto& f : family)
    if (f.size() != weights.size())
      throw std::invalid_argument("build_dominating_N: sample size mismatch");

  const double wtotal = kahan_total(weights);
  double mean_max = 0.0, value_max = 0.0;
  for (const auto& f : family) {
    KahanSum mass;
    for (std::size_t i = 0; i < f.size(); ++i) {
      mass.add(weights[i] * std::abs(f[i]));
      value_max = std::max(value_max, std::abs(f[i]));
    }
    mean_max = std::max(mean_max, mass.value() / wtotal);
  }
  if (mean_max == 0.0) {
    out.success = true;
    out.A = NFunction::power(2.0);
    out.message = "family is identically zero; any N-function dominates";
    return out;
  }

  auto tail_integral = [&](double lambda) {
    double sup = 0.0;
    for (const auto& f : family) {
      KahanSum acc;
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double v = std::abs(f[i]);
        if (v > lambda) acc.add(weights[i] * v);
      }
      sup = std::max(sup, acc.value());
    }
    return sup;
  };

  const double lambda0 = 0.5 * mean_max;
  int halved_at = -1;
  double T0 = 0.0;
  for (int j = 0; j <= j_max; ++j) {
    const double lam = lambda0 * std::pow(2.0, j);
    const double T = tail_integral(lam);
    if (j == 0) T0 = T;
    out.lambda.push_back(lam);
    out.tail_integral.push_back(T);
    if (halved_at < 0 && T <= 0.5 * T0) halved_at = j;
  }
  if (T0 == 0.0) halved_at = 0;

  if (halved_at < 0) {
    out.success = false;
    out.message = "tail integrals fail to decay at table resolution; family concentrates";
    return out;
  }

  // Extend the threshold grid to cover the attained values, so the table
  // adapts to the whole range the family actually exercises.
  {
    int j = j_max + 1;
    while (out.lambda.back() < 2.0 * value_max && j < 64) {
      const double lam = lambda0 * std::pow(2.0, j);
      out.lambda.push_back(lam);
      out.tail_integral.push_back(tail_integral(lam));
      ++j;
    }
  }

  // Density a(lambda) = 1 + log(1 + T(lambda0)/T(lambda)), clamped
  // nondecreasing; once the tail is exhausted keep doubling so A stays
  // superlinear.  Growth is power-log, doubling-regular by construction.
  std::vector<double> knots{0.0}, dens{0.0};
  double prev = 0.0;
  for (std::size_t j = 0; j < out.lambda.size(); ++j) {
    const double T = out.tail_integral[j];
    double a = T > 0.0 ? 1.0 + std::log1p(T0 / T) : std::max(2.0 * prev, 2.0);
    a = std::max(a, prev);
    knots.push_back(out.lambda[j]);
    dens.push_back(a);
    prev = a;
  }
  out.A = NFunction::from_density_table(std::move(knots), std::move(dens),
                                        NFunction::Tail::Power, 2.0);

  double B = 0.0;
  for (const auto& f : family) {
    KahanSum acc;
    for (std::size_t i = 0; i < f.size(); ++i) acc.add(weights[i] * out.A.eval(std::abs(f[i])));
    B = std::max(B, acc.value());
  }
  out.bound_B = B;
  out.success = true;
  out.message = "tail integrals halve within the inspected grid";
  return out;
}

void save_nfunction(const NFunction& A, const std::string& path) {
  std::ostringstream os;
  os << "t,a,A\n";
  for (std::size_t j = 0; j < A.knots.size(); ++j)
    os << fmt_double(A.knots[j]) << ',' << fmt_double(A.density[j]) << ','
       << fmt_double(A.cum[j]) << '\n';
  write_text_file(path, os.str());
}

}  // namespace sg
