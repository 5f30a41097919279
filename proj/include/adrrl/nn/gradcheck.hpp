#pragma once

#include "adrrl/common.hpp"

#include <algorithm>

namespace adrrl::nn {

// Central finite differences of a scalar function of a vector.
template <class Fn>
Vector finite_difference_gradient(Fn&& fn, const Vector& at, double h = 1e-5) {
  Vector grad(at.size());
  Vector x = at;
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    const double orig = x[j];
    x[j] = orig + h;
    const double up = fn(x);
    x[j] = orig - h;
    const double down = fn(x);
    x[j] = orig;
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Norm-wise relative error; zero when both vectors vanish.
inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale < 1e-300) return 0.0;
  return (a - b).norm() / scale;
}

}  // namespace adrrl::nn
