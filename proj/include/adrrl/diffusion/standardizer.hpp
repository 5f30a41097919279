#pragma once

#include "adrrl/common.hpp"

namespace adrrl::diffusion {

// Per-dimension affine standardization z = (x - mean) / std.
struct Standardizer {
  Vector mean;
  Vector std;

  static constexpr double kMinStd = 1e-6;

  static Standardizer identity(Eigen::Index dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }

  // Columns of `data` are samples. Dimensions with (near) zero spread keep std 1.
  static Standardizer fit(const Matrix& data) {
    if (data.cols() == 0) throw UsageError("standardizer: no data");
    Standardizer s;
    s.mean = data.rowwise().mean();
    const Matrix centered = data.colwise() - s.mean;
    const double denom = data.cols() > 1 ? static_cast<double>(data.cols() - 1) : 1.0;
    s.std = (centered.array().square().rowwise().sum() / denom).sqrt().matrix();
    for (Eigen::Index j = 0; j < s.std.size(); ++j)
      if (!(s.std[j] > kMinStd)) s.std[j] = 1.0;
    return s;
  }

  Eigen::Index dim() const { return mean.size(); }

  Matrix apply(const Matrix& x) const { return (x.colwise() - mean).array().colwise() / std.array(); }
  Matrix invert(const Matrix& z) const { return (z.array().colwise() * std.array()).matrix().colwise() + mean; }

  Vector apply_segment(const Vector& x, Eigen::Index offset) const {
    return (x - mean.segment(offset, x.size())).cwiseQuotient(std.segment(offset, x.size()));
  }
};

}  // namespace adrrl::diffusion
