#pragma once

#include "milatp/types.hpp"

namespace milatp {

/// Spatial activation tensor stored as channels x (h*w), spatial positions
/// in row-major order. A column holds one spatial position across channels,
/// which keeps im2col and GEMM operands contiguous.
template <class T>
struct FeatureMap {
  Mat<T> data;
  Index h = 0;
  Index w = 0;

  Index channels() const { return data.rows(); }
  bool shape_matches(const FeatureMap& o) const {
    return h == o.h && w == o.w && data.rows() == o.data.rows();
  }
};

/// Wraps a grayscale raster as a single-channel feature map.
template <class T>
FeatureMap<T> map_from_image(const ImageF& img) {
  FeatureMap<T> m;
  m.h = img.rows();
  m.w = img.cols();
  m.data.resize(1, m.h * m.w);
  for (Index y = 0; y < m.h; ++y)
    for (Index x = 0; x < m.w; ++x)
      m.data(0, y * m.w + x) = static_cast<T>(img(y, x));
  return m;
}

}  // namespace milatp
