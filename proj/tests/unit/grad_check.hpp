#pragma once

#include <algorithm>
#include <cmath>

// Relative error with a small floor so near-zero gradients compare absolutely.
inline double grad_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}
