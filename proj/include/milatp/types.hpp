#pragma once

#include <Eigen/Core>

namespace milatp {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Matf = Mat<float>;
using Vecd = Vec<double>;
using Vecf = Vec<float>;

using Index = Eigen::Index;

/// Grayscale raster, row-major so that (row, col) indexing matches pixel
/// layout of the decoded file.
using ImageF =
    Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace milatp
