#pragma once

#include <cstddef>
#include <vector>

namespace gsvr {

// Dense 2D image, row-major, double precision internally.
struct Image2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Image2D() = default;
  Image2D(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Image2D& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace gsvr
