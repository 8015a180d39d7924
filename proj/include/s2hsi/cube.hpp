// Hyperspectral cube data model and HSC1 file I/O.
#pragma once

#include "s2hsi/core.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace s2hsi {

/// Reflectance cube. Values are held as a bands x pixels matrix in 64-bit;
/// files store 32-bit samples band-sequentially.
class HsiCube {
 public:
  HsiCube() = default;
  HsiCube(Geometry geom, BandPixelMatrix values,
          std::optional<std::vector<double>> wavelengths = std::nullopt);

  Index bands() const { return values_.rows(); }
  Index rows() const { return geom_.rows; }
  Index cols() const { return geom_.cols; }
  Index pixels() const { return geom_.pixels(); }
  const Geometry& geometry() const { return geom_; }

  const BandPixelMatrix& values() const { return values_; }
  const std::optional<std::vector<double>>& wavelengths() const { return wavelengths_; }

  double at(Index band, Index r, Index c) const { return values_(band, geom_.pixel(r, c)); }

  /// Copy of one band as a rows x cols image.
  Image band(Index b) const;

 private:
  Geometry geom_;
  BandPixelMatrix values_;
  std::optional<std::vector<double>> wavelengths_;
};

/// Throws DataError on any non-finite value, naming the first offending index.
void check_finite(const BandPixelMatrix& m, const std::string& what);

HsiCube read_cube(const std::filesystem::path& path);
void write_cube(const HsiCube& cube, const std::filesystem::path& path);

/// Serializes to the exact HSC1 byte layout.
std::vector<std::uint8_t> encode_cube(const HsiCube& cube);
HsiCube decode_cube(const std::vector<std::uint8_t>& bytes);

BandPixelMatrix as_matrix(const HsiCube& cube);
HsiCube from_matrix(const BandPixelMatrix& m, Geometry geom,
                    std::optional<std::vector<double>> wavelengths = std::nullopt);

/// Assembles single-band images into a cube. All images must share a shape.
HsiCube from_bands(const std::vector<Image>& bands,
                   std::optional<std::vector<double>> wavelengths = std::nullopt);

struct RgbImage {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

RgbImage truecolor_composite(const HsiCube& cube, std::array<Index, 3> band_indices,
                             double gamma = 1.0);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

// Scene manifests.

enum class Split { Train, Test, Val };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string path;
  Split split = Split::Train;
  std::string scene_id;
  bool operator==(const ManifestEntry&) const = default;
};

struct SceneManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::vector<ManifestEntry> select(Split s) const;
  bool operator==(const SceneManifest&) const = default;
};

/// Plain text, one `<path>\t<split>\t<scene-id>` line per entry, preceded by
/// a `# seed <n>` comment line.
void write_manifest(const SceneManifest& manifest, const std::filesystem::path& path);
SceneManifest read_manifest(const std::filesystem::path& path);

// Little helpers shared by the binary formats.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace s2hsi
