#pragma once

#include <cstdint>

namespace dannet::trainer {

/// base * (1 - iter / max_iter)^power. Throws ConfigError outside
/// 0 <= iter <= max_iter. A zero-length schedule stays at base.
double poly_lr(double base, std::int64_t iter, std::int64_t max_iter, double power);

}  // namespace dannet::trainer
