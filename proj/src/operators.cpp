#include "s2hsi/operators.hpp"

#include <algorithm>
#include <array>

namespace s2hsi {

BlurKernel build_gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0)
    throw ArgumentError("kernel size must be a positive odd integer, got " + std::to_string(size));
  if (!(sigma > 0)) throw ArgumentError("kernel sigma must be positive");
  BlurKernel k;
  k.size = size;
  k.sigma = sigma;
  const int h = size / 2;
  k.taps.resize(size);
  for (int i = 0; i < size; ++i) {
    const double d = i - h;
    k.taps(i) = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  k.taps /= k.taps.sum();
  k.weights = k.taps * k.taps.transpose();
  return k;
}

BlurKernel make_kernel(const Eigen::MatrixXd& weights) {
  if (weights.rows() != weights.cols() || weights.rows() % 2 == 0)
    throw ArgumentError("kernel weights must be square with odd side");
  BlurKernel k;
  k.size = static_cast<int>(weights.rows());
  k.weights = weights;
  return k;
}

BlurKernel degradation_kernel(int factor) {
  if (factor < 1) throw ArgumentError("factor must be >= 1");
  const double sigma = 0.4247 * factor;
  const int side = 2 * static_cast<int>(std::ceil(2.0 * sigma)) + 1;
  return build_gaussian_kernel(side, sigma);
}

BlurKernel flipped(const BlurKernel& k) {
  BlurKernel f = k;
  f.weights = k.weights.reverse();
  if (k.separable()) f.taps = k.taps.reverse();
  return f;
}

SrfMatrix::SrfMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.size() == 0) throw ArgumentError("empty SRF");
  if ((values_.array() < 0).any()) throw ArgumentError("SRF weights must be nonnegative");
  for (Index r = 0; r < rows(); ++r) {
    if (std::abs(values_.row(r).sum() - 1.0) > 1e-12)
      throw ArgumentError("SRF row " + std::to_string(r) + " does not sum to 1");
    const auto [lo, hi] = support(r);
    for (Index c = lo; c <= hi; ++c)
      if (values_(r, c) == 0.0)
        throw ArgumentError("SRF row " + std::to_string(r) + " has a non-contiguous support");
  }
}

std::pair<Index, Index> SrfMatrix::support(Index row) const {
  Index lo = -1, hi = -1;
  for (Index c = 0; c < cols(); ++c)
    if (values_(row, c) != 0.0) {
      if (lo < 0) lo = c;
      hi = c;
    }
  return {lo, hi};
}

Image blur_downsample(const Image& band, const BlurKernel& k, int factor) {
  if (factor < 1) throw ArgumentError("factor must be >= 1");
  if (band.rows() % factor != 0 || band.cols() % factor != 0)
    throw ArgumentError("image " + std::to_string(band.rows()) + "x" + std::to_string(band.cols()) +
                        " not divisible by factor " + std::to_string(factor));
  const Image blurred = blur_image(band, k);
  Image out(band.rows() / factor, band.cols() / factor);
  for (Index r = 0; r < out.rows(); ++r)
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = blurred(r * factor, c * factor);
  return out;
}

Image circular_blur_downsample(const Image& band, int factor) {
  return blur_downsample(band, degradation_kernel(factor), factor);
}

Image replicate_upsample(const Image& band, int factor) {
  if (factor < 1) throw ArgumentError("factor must be >= 1");
  Image out(band.rows() * factor, band.cols() * factor);
  for (Index r = 0; r < out.rows(); ++r)
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = band(r / factor, c / factor);
  return out;
}

Image block_mean(const Image& band, int factor) {
  if (factor < 1 || band.rows() % factor != 0 || band.cols() % factor != 0)
    throw ArgumentError("block_mean: image not divisible by factor");
  Image out(band.rows() / factor, band.cols() / factor);
  for (Index r = 0; r < out.rows(); ++r)
    for (Index c = 0; c < out.cols(); ++c)
      out(r, c) = band.block(r * factor, c * factor, factor, factor).mean();
  return out;
}

namespace {

double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return a * (((x - 5.0) * x + 8.0) * x - 4.0);
  return 0.0;
}

struct Taps {
  std::array<Index, 4> index;
  std::array<double, 4> weight;
};

// Source taps for each destination sample along one axis.
std::vector<Taps> axis_taps(Index in, Index out) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  for (Index d = 0; d < out; ++d) {
    const double src = (static_cast<double>(d) + 0.5) / scale - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    auto& tp = taps[static_cast<std::size_t>(d)];
    for (int i = 0; i < 4; ++i) {
      tp.index[i] = std::clamp(static_cast<Index>(base) - 1 + i, Index{0}, in - 1);
      tp.weight[i] = cubic_weight(t - (i - 1));
    }
  }
  return taps;
}

}  // namespace

Image bicubic_resize(const Image& band, Index out_rows, Index out_cols) {
  if (out_rows <= 0 || out_cols <= 0) throw ArgumentError("bicubic_resize: degenerate output size");
  const auto col_taps = axis_taps(band.cols(), out_cols);
  const auto row_taps = axis_taps(band.rows(), out_rows);
  Image horiz(band.rows(), out_cols);
  for (Index r = 0; r < band.rows(); ++r)
    for (Index c = 0; c < out_cols; ++c) {
      const auto& tp = col_taps[static_cast<std::size_t>(c)];
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) acc += tp.weight[i] * band(r, tp.index[i]);
      horiz(r, c) = acc;
    }
  Image out(out_rows, out_cols);
  for (Index r = 0; r < out_rows; ++r) {
    const auto& tp = row_taps[static_cast<std::size_t>(r)];
    out.row(r) = tp.weight[0] * horiz.row(tp.index[0]) + tp.weight[1] * horiz.row(tp.index[1]) +
                 tp.weight[2] * horiz.row(tp.index[2]) + tp.weight[3] * horiz.row(tp.index[3]);
  }
  return out;
}

Image bicubic_scale(const Image& band, int num, int den) {
  if (num <= 0 || den <= 0) throw ArgumentError("bicubic scale must be positive");
  if ((band.rows() * num) % den != 0 || (band.cols() * num) % den != 0)
    throw ArgumentError("bicubic scale does not give integer output size");
  return bicubic_resize(band, band.rows() * num / den, band.cols() * num / den);
}

}  // namespace s2hsi
