// Linear operators of the observation model: circular blur B and its adjoint,
// the spectral response D and its adjoint, and the single-band resamplers used
// by the degradation chain.
//
// All blurs use periodic boundaries, so B is circulant and B^T is the
// convolution with the flipped kernel.
#pragma once

#include "s2hsi/core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace s2hsi {

struct BlurKernel {
  int size = 1;
  double sigma = 0.0;
  Eigen::MatrixXd weights;  // size x size, sums to 1
  Eigen::VectorXd taps;     // 1-D factor when weights = taps * taps^T, else empty

  int half() const { return size / 2; }
  bool separable() const { return taps.size() == size; }
};

/// Sampled isotropic Gaussian normalized to unit sum.
BlurKernel build_gaussian_kernel(int size, double sigma);

/// Wraps arbitrary weights (e.g. asymmetric test kernels). Not renormalized.
BlurKernel make_kernel(const Eigen::MatrixXd& weights);

/// Kernel used inside the reconstruction model (side 7, sigma 0.7).
inline BlurKernel model_kernel() { return build_gaussian_kernel(7, 0.7); }

/// Anti-aliasing blur for decimation by `factor`: sigma = 0.4247 * factor,
/// side 2 * ceil(2 * sigma) + 1.
BlurKernel degradation_kernel(int factor);

BlurKernel flipped(const BlurKernel& k);

namespace detail {

// out(r, c) = sum_{u,v} w(u, v) * x(r - (u - h), c - (v - h)), periodic.
template <typename Scalar>
BandPixelMatrixT<Scalar> convolve_direct(const BandPixelMatrixT<Scalar>& x, Geometry g,
                                         const Eigen::MatrixXd& w) {
  const Index h = w.rows() / 2;
  BandPixelMatrixT<Scalar> out = BandPixelMatrixT<Scalar>::Zero(x.rows(), x.cols());
  for (Index r = 0; r < g.rows; ++r)
    for (Index c = 0; c < g.cols; ++c) {
      auto dst = out.col(g.pixel(r, c));
      for (Index u = 0; u < w.rows(); ++u) {
        const Index sr = wrap_index(r - (u - h), g.rows);
        for (Index v = 0; v < w.cols(); ++v) {
          if (w(u, v) == 0.0) continue;
          dst += Scalar(w(u, v)) * x.col(g.pixel(sr, wrap_index(c - (v - h), g.cols)));
        }
      }
    }
  return out;
}

template <typename Scalar>
BandPixelMatrixT<Scalar> convolve_separable(const BandPixelMatrixT<Scalar>& x, Geometry g,
                                            const Eigen::VectorXd& taps) {
  const Index h = taps.size() / 2;
  BandPixelMatrixT<Scalar> tmp = BandPixelMatrixT<Scalar>::Zero(x.rows(), x.cols());
  for (Index r = 0; r < g.rows; ++r)
    for (Index c = 0; c < g.cols; ++c) {
      auto dst = tmp.col(g.pixel(r, c));
      for (Index v = 0; v < taps.size(); ++v)
        dst += Scalar(taps(v)) * x.col(g.pixel(r, wrap_index(c - (v - h), g.cols)));
    }
  BandPixelMatrixT<Scalar> out = BandPixelMatrixT<Scalar>::Zero(x.rows(), x.cols());
  for (Index r = 0; r < g.rows; ++r)
    for (Index c = 0; c < g.cols; ++c) {
      auto dst = out.col(g.pixel(r, c));
      for (Index u = 0; u < taps.size(); ++u)
        dst += Scalar(taps(u)) * tmp.col(g.pixel(wrap_index(r - (u - h), g.rows), c));
    }
  return out;
}

inline void check_geometry(Index cols, Geometry g, const char* op) {
  if (cols != g.pixels())
    throw ArgumentError(std::string(op) + ": matrix has " + std::to_string(cols) +
                        " pixels but geometry has " + std::to_string(g.pixels()));
}

}  // namespace detail

/// X B: every band convolved with the kernel under periodic boundary.
template <typename Scalar>
BandPixelMatrixT<Scalar> apply_blur(const BandPixelMatrixT<Scalar>& x, Geometry g,
                                    const BlurKernel& k) {
  detail::check_geometry(x.cols(), g, "apply_blur");
  if (k.size == 1) return Scalar(k.weights(0, 0)) * x;
  if (k.separable()) return detail::convolve_separable(x, g, k.taps);
  return detail::convolve_direct(x, g, k.weights);
}

/// Y B^T, the exact adjoint of apply_blur under the Frobenius inner product.
template <typename Scalar>
BandPixelMatrixT<Scalar> apply_blur_adjoint(const BandPixelMatrixT<Scalar>& y, Geometry g,
                                            const BlurKernel& k) {
  detail::check_geometry(y.cols(), g, "apply_blur_adjoint");
  return apply_blur(y, g, flipped(k));
}

/// Single-image convenience wrapper around apply_blur.
template <typename Scalar>
ImageT<Scalar> blur_image(const ImageT<Scalar>& img, const BlurKernel& k) {
  const Geometry g{img.rows(), img.cols()};
  BandPixelMatrixT<Scalar> row = img.template reshaped<Eigen::RowMajor>().transpose();
  BandPixelMatrixT<Scalar> out = apply_blur(row, g, k);
  return Eigen::Map<const ImageT<Scalar>>(out.data(), g.rows, g.cols);
}

/// Row-stochastic spectral response matrix (sensor bands x source bands).
class SrfMatrix {
 public:
  SrfMatrix() = default;
  explicit SrfMatrix(Eigen::MatrixXd values);

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  const Eigen::MatrixXd& values() const { return values_; }

  /// [first, last] column range holding a row's nonzero weights.
  std::pair<Index, Index> support(Index row) const;

 private:
  Eigen::MatrixXd values_;
};

template <typename Scalar>
BandPixelMatrixT<Scalar> apply_srf(const SrfMatrix& d, const BandPixelMatrixT<Scalar>& a) {
  if (d.cols() != a.rows())
    throw ArgumentError("apply_srf: SRF has " + std::to_string(d.cols()) +
                        " columns but input has " + std::to_string(a.rows()) + " bands");
  return d.values().cast<Scalar>() * a;
}

template <typename Scalar>
BandPixelMatrixT<Scalar> apply_srf_adjoint(const SrfMatrix& d, const BandPixelMatrixT<Scalar>& y) {
  if (d.rows() != y.rows())
    throw ArgumentError("apply_srf_adjoint: SRF has " + std::to_string(d.rows()) +
                        " rows but input has " + std::to_string(y.rows()) + " bands");
  return d.values().transpose().cast<Scalar>() * y;
}

// Single-band resamplers.

/// Blur with `k` then keep every factor-th sample starting at offset 0.
Image blur_downsample(const Image& band, const BlurKernel& k, int factor);

/// blur_downsample with degradation_kernel(factor).
Image circular_blur_downsample(const Image& band, int factor);

/// Each pixel becomes a factor x factor constant block.
Image replicate_upsample(const Image& band, int factor);

/// Mean over non-overlapping factor x factor blocks; left inverse of
/// replicate_upsample.
Image block_mean(const Image& band, int factor);

/// Catmull-Rom bicubic (a = -0.5), half-pixel centers, replicated border.
Image bicubic_resize(const Image& band, Index out_rows, Index out_cols);

/// Bicubic resize by a positive rational scale num/den on both axes.
Image bicubic_scale(const Image& band, int num, int den = 1);

}  // namespace s2hsi
