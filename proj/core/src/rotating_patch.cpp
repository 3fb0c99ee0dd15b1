#include "sg/rotating_patch.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "sg/halton.hpp"

namespace sg {
namespace rotating_patch {

Vec2 center(double t) { return {std::cos(t), std::sin(t)}; }

double angular_rate(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("rotating_patch: eps must be positive");
  return (eps - 1.0) / eps;
}

Vec2 exact_grad_p(Vec2 x, double t, double eps) { return center(t) + eps * x; }

double exact_p(Vec2 x, double t, double eps) {
  return dot(center(t), x) + 0.5 * eps * norm2(x);
}

double exact_p_star(Vec2 Y, double t, double eps) {
  const double d = norm(Y - center(t));
  if (d <= eps) return d * d / (2.0 * eps);
  return d - 0.5 * eps;
}

Vec2 exact_grad_p_star(Vec2 Y, double t, double eps) {
  const Vec2 d = Y - center(t);
  const double r = norm(d);
  if (r <= eps) return d / eps;
  return d / r;
}

Vec2 exact_dual_flow(Vec2 y0, double t, double eps) {
  return center(t) + rotate(y0 - center(0.0), angular_rate(eps) * t);
}

Vec2 exact_physical_flow(Vec2 x, double t, double eps) {
  return rotate(x, angular_rate(eps) * t);
}

DiscreteMeasure sample_patch(double eps, double t, std::size_t n, std::uint64_t seed,
                             bool random_sampling) {
  if (!(eps > 0.0)) throw std::invalid_argument("rotating_patch: eps must be positive");
  if (n == 0) throw std::invalid_argument("rotating_patch: need at least one particle");
  const Vec2 z = center(t);
  std::vector<Vec2> pos(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double u1, u2;
    if (random_sampling) {
      u1 = unif(rng);
      u2 = unif(rng);
    } else {
      const std::uint64_t idx = i + 20 + seed;  // burn-in avoids the degenerate prefix
      u1 = halton(idx, 2);
      u2 = halton(idx, 3);
    }
    const double r = eps * std::sqrt(u1);
    const double a = 2.0 * M_PI * u2;
    pos[i] = z + Vec2{r * std::cos(a), r * std::sin(a)};
  }
  std::vector<double> masses(n, M_PI / static_cast<double>(n));
  return make_measure(std::move(pos), std::move(masses), 1.0 + eps, 1.0);
}

}  // namespace rotating_patch
}  // namespace sg
