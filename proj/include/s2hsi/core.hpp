// Shared aliases, geometry and error types for the s2hsi library.
#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace s2hsi {

using Index = Eigen::Index;

/// Column-major bands x pixels matrix. Column j is the spectrum of pixel
/// (j / cols, j % cols).
template <typename Scalar>
using BandPixelMatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using BandPixelMatrix = BandPixelMatrixT<double>;

/// Single-band image, rows x cols, row-major so that the flat index matches
/// the pixel index of a BandPixelMatrix column.
template <typename Scalar>
using ImageT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = ImageT<double>;

struct Geometry {
  Index rows = 0;
  Index cols = 0;

  Index pixels() const { return rows * cols; }
  Index pixel(Index r, Index c) const { return r * cols + c; }
  bool operator==(const Geometry&) const = default;
};

inline Index wrap_index(Index i, Index n) {
  const Index m = i % n;
  return m < 0 ? m + n : m;
}

// Error taxonomy. The CLI maps ArgumentError to exit status 2 and everything
// else to 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct CorruptFileError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace s2hsi
