#include "dannet/trainer/schedule.hpp"

#include <cmath>
#include <string>

#include "dannet/core/error.hpp"

namespace dannet::trainer {

double poly_lr(double base, std::int64_t iter, std::int64_t max_iter, double power) {
  if (iter < 0 || iter > max_iter) {
    throw ConfigError("poly_lr: iteration " + std::to_string(iter) + " outside [0, " +
                      std::to_string(max_iter) + "]");
  }
  if (max_iter == 0) return base;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return base * std::pow(frac, power);
}

}  // namespace dannet::trainer
