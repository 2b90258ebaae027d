#ifndef MHA_MATH_HPP
#define MHA_MATH_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace mha {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  const double hi = *std::max_element(values.begin(), values.end());
  if (hi == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

}  // namespace mha

#endif  // MHA_MATH_HPP
