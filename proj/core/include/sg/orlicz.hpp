#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sg {

// Young function A(t) = integral_0^t a(s) ds represented by a piecewise-
// linear density table on [0, t_max] plus a declared tail model beyond
// t_max.  a must vanish at 0, be nondecreasing, and keep growing under the
// tail so A stays superlinear.
struct NFunction {
  enum class Tail : std::uint8_t {
    Power,        // a ~ (t / t_max)^(p-1): A grows like t^p; tail_param = p > 1
    Exponential,  // a ~ e^(kappa (t - t_max)); tail_param = kappa > 0
    Log           // a ~ a_end + log(t / t_max)/kappa: A grows like t log t
  };

  std::vector<double> knots;    // 0 = knots[0] < ... < knots.back() = t_max
  std::vector<double> density;  // a at the knots; a[0] = 0, nondecreasing
  std::vector<double> cum;      // A at the knots (exact for the linear pieces)
  Tail tail = Tail::Power;
  double tail_param = 2.0;

  double t_max() const { return knots.back(); }
  double density_at(double t) const;
  double eval(double t) const;  // A(t), tail-extrapolated beyond t_max

  // Checks the N-function axioms at table resolution; throws on violation.
  void validate() const;

  // A(t) = scale * t^p sampled exactly enough that norms match closed forms
  // to ~1e-6 relative; the power tail continues t^p exactly.
  static NFunction power(double p, double scale = 1.0, double tmax = 16.0,
                         std::size_t knot_count = 8192);
  // Exponential-growth density (never doubling-regular).
  static NFunction exp_growth(double kappa = 1.0, double tmax = 16.0,
                              std::size_t knot_count = 2048);

  static NFunction from_density_table(std::vector<double> knots, std::vector<double> density,
                                      Tail tail, double tail_param);
};

// Young conjugate A*(s) = sup_t (s t - A(t)), realized by inverting the
// density table; Power p maps to Power p/(p-1), Exponential to Log and back.
NFunction conjugate(const NFunction& A);

// Luxemburg norm inf{k > 0 : sum_i w_i A(|v_i|/k) <= 1} by bisection to
// |integral - 1| <= 1e-6.  Zero function returns 0.  Throws on bracket
// failure after 200 expansions.
double luxemburg_norm(const std::vector<double>& values, const std::vector<double>& weights,
                      const NFunction& A);

struct DeltaRegularity {
  bool regular = false;
  double C = 0.0;  // sup of A(2t)/A(t) over t >= t0 (meaningful when regular)
};

// Doubling check A(2t) <= C A(t) for t >= t0, decided by the tail model and
// measured over the table knots and geometric tail samples.
DeltaRegularity delta_regular_check(const NFunction& A, double t0);

struct DominatingBuild {
  bool success = false;
  NFunction A;
  double bound_B = 0.0;               // sup over the family of sum w A(|f|)
  std::vector<double> lambda;         // inspected thresholds
  std::vector<double> tail_integral;  // T(lambda_j) = sup_k sum_{|f_k|>lambda_j} w |f_k|
  std::string message;
};

// Builds an N-function A with sup_k integral A(|f_k|) finite from the decay
// of the family's tail integrals, density a(lambda) = 1 + log(1 + T(l0)/T(l)).
// Uniform integrability is judged at table resolution: T must halve within
// the geometric grid lambda_j = lambda0 2^j, j <= j_max, lambda0 = half the
// family's largest mean level.  A concentrating family fails honestly.
DominatingBuild build_dominating_N(const std::vector<std::vector<double>>& family,
                                   const std::vector<double>& weights, int j_max = 7);

// Table export with header t,a,A (one row per knot).
void save_nfunction(const NFunction& A, const std::string& path);

}  // namespace sg
