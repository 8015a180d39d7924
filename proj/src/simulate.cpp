#include "s2hsi/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace s2hsi {

std::vector<SentinelBandSpec> default_sentinel2_bands() {
  // index, center, bandwidth, gsd, factor
  return {
      {1, 442.7, 21.0, 60, 12},   {2, 492.4, 66.0, 10, 2},    {3, 559.8, 36.0, 10, 2},
      {4, 664.6, 31.0, 10, 2},    {5, 704.1, 15.0, 20, 4},    {6, 740.5, 15.0, 20, 4},
      {7, 782.8, 20.0, 20, 4},    {8, 832.8, 106.0, 10, 2},   {9, 864.7, 21.0, 20, 4},
      {10, 945.1, 20.0, 60, 12},  {11, 1613.7, 91.0, 20, 4},  {12, 2202.4, 175.0, 20, 4},
  };
}

void validate_band_specs(const std::vector<SentinelBandSpec>& specs) {
  if (specs.size() != 12)
    throw ArgumentError("expected 12 Sentinel-2 bands, got " + std::to_string(specs.size()));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.index != static_cast<int>(i) + 1)
      throw ArgumentError("band specs must be listed in index order 1..12");
    const int expected = s.gsd_m == 60 ? 12 : s.gsd_m == 20 ? 4 : s.gsd_m == 10 ? 2 : -1;
    if (expected < 0) throw ArgumentError("band " + std::to_string(s.index) + ": gsd must be 10, 20 or 60");
    if (s.factor != expected || s.factor != kSentinelFactors[i])
      throw ArgumentError("band " + std::to_string(s.index) + ": factor " +
                          std::to_string(s.factor) + " inconsistent with the factor table");
    if (!(s.bandwidth_nm > 0) || !(s.center_nm > 0))
      throw ArgumentError("band " + std::to_string(s.index) + ": center and bandwidth must be positive");
  }
}

std::vector<SentinelBandSpec> read_band_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open band-spec table " + path.string());
  std::vector<SentinelBandSpec> specs;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream is(line);
    SentinelBandSpec s;
    if (!(is >> s.index)) continue;
    if (!(is >> s.center_nm >> s.bandwidth_nm >> s.gsd_m >> s.factor))
      throw FormatError("malformed band-spec line: " + line);
    specs.push_back(s);
  }
  validate_band_specs(specs);
  return specs;
}

void write_band_specs(const std::vector<SentinelBandSpec>& specs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# index center_nm bandwidth_nm gsd_m factor\n";
  for (const auto& s : specs)
    out << s.index << ' ' << s.center_nm << ' ' << s.bandwidth_nm << ' ' << s.gsd_m << ' '
        << s.factor << '\n';
}

std::vector<double> aviris_ng_wavelengths() {
  std::vector<double> wl(425);
  for (std::size_t i = 0; i < wl.size(); ++i) wl[i] = 376.86 + 5.0094 * static_cast<double>(i);
  return wl;
}

HsiCube remove_water_bands(const HsiCube& cube) {
  if (cube.bands() != 425)
    throw ArgumentError("water-band removal expects 425 bands, got " +
                        std::to_string(cube.bands()));
  std::vector<Index> keep;
  for (Index b = 1; b <= 425; ++b) {
    const bool water = b == 1 || (b >= 195 && b <= 211) || (b >= 281 && b <= 315);
    if (!water) keep.push_back(b - 1);
  }
  BandPixelMatrix m(static_cast<Index>(keep.size()), cube.pixels());
  std::optional<std::vector<double>> wl;
  if (cube.wavelengths()) wl.emplace();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    m.row(static_cast<Index>(i)) = cube.values().row(keep[i]);
    if (wl) wl->push_back((*cube.wavelengths())[static_cast<std::size_t>(keep[i])]);
  }
  return HsiCube(cube.geometry(), std::move(m), std::move(wl));
}

HsiCube spectral_downsample2(const HsiCube& cube) {
  if (cube.bands() % 2 != 0)
    throw ArgumentError("spectral downsampling needs an even band count, got " +
                        std::to_string(cube.bands()));
  const Index half = cube.bands() / 2;
  BandPixelMatrix m(half, cube.pixels());
  std::optional<std::vector<double>> wl;
  if (cube.wavelengths()) wl.emplace(static_cast<std::size_t>(half));
  for (Index i = 0; i < half; ++i) {
    m.row(i) = 0.5 * (cube.values().row(2 * i) + cube.values().row(2 * i + 1));
    if (wl) {
      const auto& src = *cube.wavelengths();
      (*wl)[static_cast<std::size_t>(i)] =
          0.5 * (src[static_cast<std::size_t>(2 * i)] + src[static_cast<std::size_t>(2 * i + 1)]);
    }
  }
  return HsiCube(cube.geometry(), std::move(m), std::move(wl));
}

SrfMatrix build_srf(const std::vector<double>& wl, const std::vector<SentinelBandSpec>& specs) {
  if (wl.empty()) throw ArgumentError("build_srf: no source wavelengths");
  for (std::size_t i = 1; i < wl.size(); ++i)
    if (!(wl[i] > wl[i - 1])) throw ArgumentError("build_srf: wavelengths must increase strictly");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Index>(specs.size()),
                                            static_cast<Index>(wl.size()));
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    std::vector<Index> members;
    for (std::size_t j = 0; j < wl.size(); ++j)
      if (std::abs(wl[j] - s.center_nm) <= s.bandwidth_nm / 2.0) members.push_back(static_cast<Index>(j));
    if (members.empty()) {
      std::size_t nearest = 0;
      for (std::size_t j = 1; j < wl.size(); ++j)
        if (std::abs(wl[j] - s.center_nm) < std::abs(wl[nearest] - s.center_nm)) nearest = j;
      members.push_back(static_cast<Index>(nearest));
    }
    const double w = 1.0 / static_cast<double>(members.size());
    for (Index j : members) d(static_cast<Index>(k), j) = w;
  }
  return SrfMatrix(std::move(d));
}

void write_srf(const SrfMatrix& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "SRF1 " << d.rows() << ' ' << d.cols() << '\n';
  char buf[32];
  for (Index r = 0; r < d.rows(); ++r) {
    for (Index c = 0; c < d.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", d.values()(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

SrfMatrix read_srf(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open SRF file " + path.string());
  std::string magic;
  Index rows = 0, cols = 0;
  if (!(in >> magic >> rows >> cols) || magic != "SRF1" || rows <= 0 || cols <= 0)
    throw FormatError("not an SRF1 file: " + path.string());
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      if (!(in >> m(r, c))) throw CorruptFileError("truncated SRF file: " + path.string());
  return SrfMatrix(std::move(m));
}

Simulation simulate_sentinel2(const HsiCube& a, const SrfMatrix& d,
                              const std::vector<SentinelBandSpec>& specs) {
  validate_band_specs(specs);
  if (d.rows() != 12) throw ArgumentError("simulation needs a 12-row SRF");
  if (a.rows() % 12 != 0 || a.cols() % 12 != 0)
    throw ArgumentError("simulation needs rows and cols divisible by 12, got " +
                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  std::optional<std::vector<double>> centers(std::vector<double>{});
  for (const auto& s : specs) centers->push_back(s.center_nm);
  if (!std::is_sorted(centers->begin(), centers->end())) centers.reset();

  HsiCube su(a.geometry(), apply_srf(d, a.values()), centers);
  Simulation sim{{HsiCube{}, {}, {}}, su};
  std::vector<Image> bands;
  for (Index b = 0; b < 12; ++b) {
    const int f = specs[static_cast<std::size_t>(b)].factor;
    const Image native = circular_blur_downsample(su.band(b), f);
    bands.push_back(replicate_upsample(native, f / 2));
    sim.product.native_factor.push_back(f);
    sim.product.replication.push_back(f / 2);
  }
  sim.product.cube = from_bands(bands, centers);
  return sim;
}

SceneManifest make_dataset(const std::vector<std::pair<std::string, std::string>>& scenes,
                           SplitSizes sizes, std::uint64_t seed) {
  const std::size_t needed = sizes.train + sizes.test + sizes.val;
  if (needed > scenes.size())
    throw ArgumentError("split sizes need " + std::to_string(needed) + " scenes, only " +
                        std::to_string(scenes.size()) + " available");
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  // Explicit Fisher-Yates: std::shuffle's draw sequence is library-specific.
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  SceneManifest m;
  m.seed = seed;
  std::size_t pos = 0;
  auto take = [&](std::size_t n, Split s) {
    for (std::size_t i = 0; i < n; ++i, ++pos) {
      const auto& sc = scenes[order[pos]];
      m.entries.push_back({sc.first, s, sc.second});
    }
  };
  take(sizes.train, Split::Train);
  take(sizes.test, Split::Test);
  take(sizes.val, Split::Val);
  return m;
}

}  // namespace s2hsi
