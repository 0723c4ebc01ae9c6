#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace cgx {

// Dense row-major matrix of doubles. Vectors are 1×n or n×1 tensors.
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  int size() const { return rows * cols; }

  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Tensor2 from_row(const std::vector<double>& v) {
    Tensor2 t(1, static_cast<int>(v.size()));
    t.data = v;
    return t;
  }

  static Tensor2 from_col(const std::vector<double>& v) {
    Tensor2 t(static_cast<int>(v.size()), 1);
    t.data = v;
    return t;
  }
};

}  // namespace cgx
