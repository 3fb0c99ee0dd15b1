#pragma once

#include <cmath>
#include <cstddef>

namespace sg {

// Kahan–Neumaier compensated accumulator.  Every reduction that feeds a
// conservation check or a reported diagnostic goes through one of these so
// results do not depend on summation luck.
class KahanSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <class It>
double kahan_total(It first, It last) {
  KahanSum acc;
  for (; first != last; ++first) acc.add(*first);
  return acc.value();
}

template <class C>
double kahan_total(const C& c) {
  return kahan_total(c.begin(), c.end());
}

}  // namespace sg
