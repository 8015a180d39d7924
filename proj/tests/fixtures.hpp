// Seeded synthetic scenes shared by the unit, acceptance and CLI tests.
#pragma once

#include "s2hsi/cube.hpp"
#include "s2hsi/simulate.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace s2hsi::testing {

inline BandPixelMatrix random_matrix(Index rows, Index cols, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  BandPixelMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline Image random_image(Index rows, Index cols, std::mt19937_64& rng, double lo = 0.0,
                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

/// 32 band centers: a pair bracketing each Sentinel-2 center plus eight
/// fillers, so that the box SRF has full row rank.
inline std::vector<double> toy_wavelengths_32() {
  std::vector<double> wl = {400, 600, 1000, 1200, 1400, 1800, 2000, 2400};
  for (const auto& s : default_sentinel2_bands()) {
    wl.push_back(s.center_nm - 8.0);
    wl.push_back(s.center_nm + 8.0);
  }
  std::sort(wl.begin(), wl.end());
  return wl;
}

inline std::vector<double> linear_wavelengths(Index bands, double lo = 400.0, double hi = 2450.0) {
  std::vector<double> wl(static_cast<std::size_t>(bands));
  for (Index i = 0; i < bands; ++i)
    wl[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) /
                                               static_cast<double>(std::max<Index>(bands - 1, 1));
  return wl;
}

/// Smooth endmember spectra (bands x sources): sums of broad Gaussian bumps.
inline Eigen::MatrixXd smooth_endmembers(const std::vector<double>& wl, Index sources,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> center(400.0, 2400.0), width(150.0, 600.0),
      amp(0.1, 0.5), base(0.05, 0.2);
  Eigen::MatrixXd e(static_cast<Index>(wl.size()), sources);
  for (Index k = 0; k < sources; ++k) {
    const double b = base(rng);
    double c[3], w[3], a[3];
    for (int i = 0; i < 3; ++i) {
      c[i] = center(rng);
      w[i] = width(rng);
      a[i] = amp(rng);
    }
    for (std::size_t j = 0; j < wl.size(); ++j) {
      double v = b;
      for (int i = 0; i < 3; ++i) v += a[i] * std::exp(-std::pow((wl[j] - c[i]) / w[i], 2));
      e(static_cast<Index>(j), k) = v;
    }
  }
  return e;
}

/// Periodic, spatially smooth nonnegative abundance maps (sources x pixels).
inline Eigen::MatrixXd smooth_abundances(Geometry g, Index sources, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> freq(1, 3);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi), weight(0.2, 1.0);
  Eigen::MatrixXd ab(sources, g.pixels());
  for (Index k = 0; k < sources; ++k) {
    const int fr1 = freq(rng), fc1 = freq(rng), fr2 = freq(rng), fc2 = freq(rng);
    const double p1 = phase(rng), p2 = phase(rng), w1 = weight(rng), w2 = weight(rng);
    for (Index r = 0; r < g.rows; ++r)
      for (Index c = 0; c < g.cols; ++c) {
        const double x = 2 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(g.rows);
        const double y = 2 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(g.cols);
        const double v = w1 * std::sin(fr1 * x + fc1 * y + p1) + w2 * std::cos(fr2 * x - fc2 * y + p2);
        ab(k, g.pixel(r, c)) = (v + w1 + w2) / (2 * (w1 + w2));
      }
  }
  return ab;
}

/// Low-rank linear-mixture scene. `endmember_seed` fixes the spectra so that
/// scenes sharing it come from one spectral library.
inline HsiCube mixture_scene(const std::vector<double>& wl, Geometry g, Index sources,
                             std::uint64_t endmember_seed, std::uint64_t abundance_seed) {
  const Eigen::MatrixXd e = smooth_endmembers(wl, sources, endmember_seed);
  const Eigen::MatrixXd ab = smooth_abundances(g, sources, abundance_seed);
  return HsiCube(g, e * ab / static_cast<double>(sources) * 2.0, wl);
}

}  // namespace s2hsi::testing
