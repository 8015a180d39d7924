// Classical stand-ins for the learned priors: the spectral prior matrix
// P ~ A A^T and the 5 m spatial prior image S_u.
#pragma once

#include "s2hsi/cube.hpp"
#include "s2hsi/simulate.hpp"

#include <filesystem>
#include <vector>

namespace s2hsi {

struct SpectralPriorMatrix {
  Eigen::MatrixXd values;  // bands x bands, exactly symmetric
  Index scale_pixels = 0;  // pixel count L the Gram magnitude is matched to

  Index size() const { return values.rows(); }
};

/// A A^T, symmetric by construction. Shared by the estimator and the solver so
/// that a prior built from a cube reproduces that cube's Gram bit-for-bit.
Eigen::MatrixXd gram_matrix(const BandPixelMatrix& a);

/// Pooled Gram matrix (L / sum_i L_i) * sum_i A_i A_i^T over the training
/// cubes, accumulated in list order.
SpectralPriorMatrix estimate_spectral_prior(const std::vector<HsiCube>& training,
                                            Index target_pixels);

struct PriorDiagnostics {
  double asymmetry = 0.0;       // ||P - P^T||_F
  double min_eigenvalue = 0.0;
  double trace = 0.0;
  bool psd = false;             // min eigenvalue >= -1e-8 * trace / bands
};

PriorDiagnostics diagnose_prior(const SpectralPriorMatrix& p);

/// SPM1: "SPM1", u32 size, u64 scale_pixels, then size*size f64, row-major.
void write_spectral_prior(const SpectralPriorMatrix& p, const std::filesystem::path& path);
SpectralPriorMatrix read_spectral_prior(const std::filesystem::path& path);

/// Per-band 2x bicubic upsample of the 10 m product onto the 5 m grid.
HsiCube spatial_prior_image(const HsiCube& product);
inline HsiCube spatial_prior_image(const SentinelProduct& s) { return spatial_prior_image(s.cube); }

}  // namespace s2hsi
