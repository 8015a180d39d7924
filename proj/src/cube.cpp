#include "s2hsi/cube.hpp"

#include "byteio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace s2hsi {

namespace {

constexpr std::uint32_t kCubeVersion = 1;

void check_wavelengths(const std::optional<std::vector<double>>& wl, Index bands) {
  if (!wl) return;
  if (static_cast<Index>(wl->size()) != bands)
    throw ArgumentError("wavelength count " + std::to_string(wl->size()) +
                        " does not match band count " + std::to_string(bands));
  for (std::size_t i = 1; i < wl->size(); ++i)
    if (!((*wl)[i] > (*wl)[i - 1]))
      throw ArgumentError("wavelengths must be strictly increasing (index " +
                          std::to_string(i) + ")");
}

}  // namespace

HsiCube::HsiCube(Geometry geom, BandPixelMatrix values,
                 std::optional<std::vector<double>> wavelengths)
    : geom_(geom), values_(std::move(values)), wavelengths_(std::move(wavelengths)) {
  if (geom_.rows <= 0 || geom_.cols <= 0) throw ArgumentError("cube geometry must be positive");
  if (values_.cols() != geom_.pixels())
    throw ArgumentError("cube has " + std::to_string(values_.cols()) + " pixels, geometry needs " +
                        std::to_string(geom_.pixels()));
  check_wavelengths(wavelengths_, values_.rows());
  check_finite(values_, "cube");
}

Image HsiCube::band(Index b) const {
  if (b < 0 || b >= bands()) throw ArgumentError("band index out of range");
  using Strided = Eigen::Map<const Image, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  return Strided(values_.data() + b, geom_.rows, geom_.cols,
                 Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(geom_.cols * bands(), bands()));
}

void check_finite(const BandPixelMatrix& m, const std::string& what) {
  // Walk in band-sequential order so the reported index matches file order.
  for (Index b = 0; b < m.rows(); ++b)
    for (Index p = 0; p < m.cols(); ++p)
      if (!std::isfinite(m(b, p)))
        throw DataError(what + ": non-finite value at band " + std::to_string(b) + ", pixel " +
                        std::to_string(p) + " (flat index " + std::to_string(b * m.cols() + p) +
                        ")");
}

std::vector<std::uint8_t> encode_cube(const HsiCube& cube) {
  detail::ByteWriter w;
  w.magic("HSC1");
  w.u32(kCubeVersion);
  w.u32(static_cast<std::uint32_t>(cube.bands()));
  w.u32(static_cast<std::uint32_t>(cube.rows()));
  w.u32(static_cast<std::uint32_t>(cube.cols()));
  const auto& wl = cube.wavelengths();
  w.u8(wl ? 1 : 0);
  w.zeros(3);
  if (wl)
    for (double v : *wl) w.f64(v);
  const auto& m = cube.values();
  w.bytes().reserve(w.bytes().size() + static_cast<std::size_t>(m.size()) * 4);
  for (Index b = 0; b < m.rows(); ++b)
    for (Index p = 0; p < m.cols(); ++p) w.f32(static_cast<float>(m(b, p)));
  return std::move(w.bytes());
}

HsiCube decode_cube(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  if (!r.magic("HSC1")) throw FormatError("not an HSC1 cube (bad magic)");
  if (r.remaining() < 20) throw CorruptFileError("truncated HSC1 header");
  const auto version = r.u32();
  if (version != kCubeVersion)
    throw FormatError("unsupported HSC1 version " + std::to_string(version));
  const Index bands = r.u32();
  const Index rows = r.u32();
  const Index cols = r.u32();
  const auto has_wl = r.u8();
  r.skip(3);
  if (has_wl > 1) throw FormatError("wavelength flag must be 0 or 1");
  if (bands == 0 || rows == 0 || cols == 0) throw CorruptFileError("zero cube dimension");

  const auto samples = static_cast<std::size_t>(bands * rows * cols);
  const std::size_t expected = (has_wl ? static_cast<std::size_t>(bands) * 8 : 0) + samples * 4;
  if (r.remaining() != expected)
    throw CorruptFileError("payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                           std::to_string(expected));

  std::optional<std::vector<double>> wl;
  if (has_wl) {
    wl.emplace(static_cast<std::size_t>(bands));
    for (auto& v : *wl) v = r.f64();
    for (std::size_t i = 0; i < wl->size(); ++i)
      if (!std::isfinite((*wl)[i]))
        throw DataError("non-finite wavelength at index " + std::to_string(i));
  }
  BandPixelMatrix m(bands, rows * cols);
  for (Index b = 0; b < bands; ++b)
    for (Index p = 0; p < rows * cols; ++p) m(b, p) = r.f32();
  check_finite(m, "cube");
  try {
    return HsiCube({rows, cols}, std::move(m), std::move(wl));
  } catch (const ArgumentError& e) {
    throw CorruptFileError(e.what());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

HsiCube read_cube(const std::filesystem::path& path) { return decode_cube(read_file_bytes(path)); }

void write_cube(const HsiCube& cube, const std::filesystem::path& path) {
  write_file_bytes(path, encode_cube(cube));
}

BandPixelMatrix as_matrix(const HsiCube& cube) { return cube.values(); }

HsiCube from_matrix(const BandPixelMatrix& m, Geometry geom,
                    std::optional<std::vector<double>> wavelengths) {
  return HsiCube(geom, m, std::move(wavelengths));
}

HsiCube from_bands(const std::vector<Image>& bands, std::optional<std::vector<double>> wavelengths) {
  if (bands.empty()) throw ArgumentError("no bands given");
  const Geometry geom{bands.front().rows(), bands.front().cols()};
  BandPixelMatrix m(static_cast<Index>(bands.size()), geom.pixels());
  for (std::size_t b = 0; b < bands.size(); ++b) {
    if (bands[b].rows() != geom.rows || bands[b].cols() != geom.cols)
      throw ArgumentError("band images differ in shape");
    m.row(static_cast<Index>(b)) = bands[b].reshaped<Eigen::RowMajor>().transpose();
  }
  return HsiCube(geom, std::move(m), std::move(wavelengths));
}

RgbImage truecolor_composite(const HsiCube& cube, std::array<Index, 3> band_indices, double gamma) {
  if (!(gamma > 0)) throw ArgumentError("gamma must be positive");
  for (Index b : band_indices)
    if (b < 0 || b >= cube.bands())
      throw ArgumentError("composite band " + std::to_string(b) + " out of range [0, " +
                          std::to_string(cube.bands()) + ")");
  RgbImage img{cube.rows(), cube.cols(), {}};
  img.pixels.resize(static_cast<std::size_t>(cube.pixels() * 3));
  for (int ch = 0; ch < 3; ++ch) {
    const auto band = cube.values().row(band_indices[ch]);
    const double lo = band.minCoeff();
    const double hi = band.maxCoeff();
    for (Index p = 0; p < cube.pixels(); ++p) {
      double v = 0.0;
      if (hi > lo) v = 255.0 * std::pow((band(p) - lo) / (hi - lo), 1.0 / gamma);
      img.pixels[static_cast<std::size_t>(p * 3 + ch)] =
          static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  const std::string header =
      "P6\n" + std::to_string(image.cols) + " " + std::to_string(image.rows) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  write_file_bytes(path, bytes);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Val: return "val";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "val") return Split::Val;
  throw FormatError("unknown split tag '" + s + "'");
}

std::vector<ManifestEntry> SceneManifest::select(Split s) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [s](const ManifestEntry& e) { return e.split == s; });
  return out;
}

void write_manifest(const SceneManifest& manifest, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "# seed " << manifest.seed << '\n';
  for (const auto& e : manifest.entries)
    os << e.path << '\t' << to_string(e.split) << '\t' << e.scene_id << '\n';
  const auto text = os.str();
  write_file_bytes(path, {text.begin(), text.end()});
}

SceneManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  SceneManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream is(line.substr(1));
      std::string key;
      if (is >> key && key == "seed") is >> m.seed;
      continue;
    }
    ManifestEntry e;
    std::istringstream is(line);
    std::string split;
    if (!std::getline(is, e.path, '\t') || !std::getline(is, split, '\t') ||
        !std::getline(is, e.scene_id))
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected <path>\\t<split>\\t<scene-id>");
    e.split = parse_split(split);
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace s2hsi
