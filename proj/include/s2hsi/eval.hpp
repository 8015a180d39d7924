// Reconstruction quality metrics, MDL model-order selection and abundance
// cross-correlation.
#pragma once

#include "s2hsi/cube.hpp"

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace s2hsi {

inline constexpr double kPeak = 1.0;

/// Mean over bands of 10 log10(peak^2 / MSE_b). +inf when every band matches.
double psnr(const BandPixelMatrix& ref, const BandPixelMatrix& est);
std::vector<double> psnr_per_band(const BandPixelMatrix& ref, const BandPixelMatrix& est);

/// Per-pixel spectral angle in radians; 0 where either spectrum has zero norm.
std::vector<double> spectral_angles(const BandPixelMatrix& ref, const BandPixelMatrix& est);

struct SamResult {
  double degrees = 0.0;  // mean over pixels with nonzero spectra
  Index excluded = 0;    // pixels skipped for a zero-norm spectrum
};

/// Throws DataError when every pixel is excluded.
SamResult sam(const BandPixelMatrix& ref, const BandPixelMatrix& est);

/// Per-band SSIM, 11x11 Gaussian window (sigma 1.5) over valid positions,
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2, averaged over bands.
double ssim(const HsiCube& ref, const HsiCube& est);
std::vector<double> ssim_per_band(const HsiCube& ref, const HsiCube& est);
double ssim_band(const Image& ref, const Image& est);

double rmse(const BandPixelMatrix& ref, const BandPixelMatrix& est);

/// (1 / (M L)) sum_ij alpha_j |ref_ij - est_ij| with alpha_j the spectral angle
/// of pixel j in radians.
double adaptive_l1(const BandPixelMatrix& ref, const BandPixelMatrix& est);

struct MetricReport {
  double psnr = 0.0;
  double sam = 0.0;  // degrees
  double ssim = 0.0;
  double rmse = 0.0;
  double l_g = 0.0;
  Index sam_excluded = 0;
  std::vector<double> psnr_bands;
  std::vector<double> ssim_bands;
  std::vector<double> rmse_bands;
};

MetricReport evaluate(const HsiCube& ref, const HsiCube& est);

struct MetricRow {
  std::string scene_id;
  MetricReport report;
};

/// scene_id,psnr_db,sam_deg,ssim,rmse,l_g; an infinite PSNR prints as "inf".
void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);

struct MdlResult {
  Index order = 0;
  std::vector<double> code_length;  // entry k-1 holds MDL(k), k = 1..max_k
  Eigen::VectorXd eigenvalues;      // descending
  bool floored = false;             // some eigenvalues were raised to 1e-12 * largest
};

/// Wax-Kailath MDL over the eigenvalues of the pixel covariance:
///   MDL(k) = -L (M - k) log(geo_mean / arith_mean of the M - k smallest)
///            + k (2M - k) log(L) / 2
MdlResult mdl_order(const BandPixelMatrix& x, Index max_k);

/// k (2M - k) log(L) / 2.
double mdl_penalty(Index k, Index bands, Index pixels);

void write_mdl_csv(const MdlResult& r, const std::filesystem::path& path);

/// Pearson correlation of two maps; DataError when either is constant.
double cross_correlation(const Image& a, const Image& b);

}  // namespace s2hsi
