// AVIRIS-NG preprocessing and Sentinel-2 multiresolution product synthesis.
#pragma once

#include "s2hsi/cube.hpp"
#include "s2hsi/operators.hpp"

#include <filesystem>
#include <vector>

namespace s2hsi {

struct SentinelBandSpec {
  int index = 0;  // 1..12
  double center_nm = 0.0;
  double bandwidth_nm = 0.0;
  int gsd_m = 10;
  int factor = 2;  // downsampling from the 5 m grid

  bool operator==(const SentinelBandSpec&) const = default;
};

/// Degradation factors of the 12 effective Sentinel-2 bands, in band order.
inline constexpr int kSentinelFactors[12] = {12, 2, 2, 2, 4, 4, 4, 2, 4, 12, 4, 4};

/// Sentinel-2A centers and bandwidths (B1-B9, B8A, B11, B12; the cirrus band is
/// not part of the product).
std::vector<SentinelBandSpec> default_sentinel2_bands();

/// Checks count, index order, gsd/factor consistency and the factor table.
void validate_band_specs(const std::vector<SentinelBandSpec>& specs);

/// Whitespace-separated `index center_nm bandwidth_nm gsd_m factor`, one band
/// per line; `#` starts a comment.
std::vector<SentinelBandSpec> read_band_specs(const std::filesystem::path& path);
void write_band_specs(const std::vector<SentinelBandSpec>& specs, const std::filesystem::path& path);

/// Nominal AVIRIS-NG band centers for the 425-band instrument.
std::vector<double> aviris_ng_wavelengths();

/// Drops 1-indexed bands 1, 195-211 and 281-315 (425 -> 372).
HsiCube remove_water_bands(const HsiCube& cube);

/// Pairwise band averaging (2M -> M).
HsiCube spectral_downsample2(const HsiCube& cube);

/// Box SRF: row k averages the source bands within half a bandwidth of the
/// band center, or picks the nearest band when that set is empty.
SrfMatrix build_srf(const std::vector<double>& hsi_wavelengths,
                    const std::vector<SentinelBandSpec>& specs);

void write_srf(const SrfMatrix& d, const std::filesystem::path& path);
SrfMatrix read_srf(const std::filesystem::path& path);

struct SentinelProduct {
  HsiCube cube;                  // 12 bands on the 10 m grid
  std::vector<int> native_factor;  // per band, relative to 5 m
  std::vector<int> replication;    // per band, block side on the 10 m grid
};

struct Simulation {
  SentinelProduct product;
  HsiCube su_true;  // D A at 5 m
};

/// S_u = D A, per-band blur + decimation by the factor table, then block
/// replication of the 20/60 m bands onto the 10 m grid.
Simulation simulate_sentinel2(const HsiCube& a, const SrfMatrix& d,
                              const std::vector<SentinelBandSpec>& specs =
                                  default_sentinel2_bands());

struct SplitSizes {
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t val = 0;
};

/// Seeded shuffle of (path, scene id) pairs followed by a train/test/val
/// partition. Scenes beyond the requested sizes are left out.
SceneManifest make_dataset(const std::vector<std::pair<std::string, std::string>>& scenes,
                           SplitSizes sizes, std::uint64_t seed);

}  // namespace s2hsi
