#include "s2hsi/prior.hpp"

#include "byteio.hpp"

#include <Eigen/Eigenvalues>

namespace s2hsi {

Eigen::MatrixXd gram_matrix(const BandPixelMatrix& a) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a.rows(), a.rows());
  g.selfadjointView<Eigen::Lower>().rankUpdate(a);
  return g.selfadjointView<Eigen::Lower>();
}

SpectralPriorMatrix estimate_spectral_prior(const std::vector<HsiCube>& training,
                                            Index target_pixels) {
  if (training.empty()) throw ArgumentError("spectral prior needs at least one training cube");
  if (target_pixels <= 0) throw ArgumentError("target pixel count must be positive");
  const Index bands = training.front().bands();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(bands, bands);
  Index pooled = 0;
  for (const auto& cube : training) {
    if (cube.bands() != bands)
      throw ArgumentError("training cubes disagree in band count (" + std::to_string(bands) +
                          " vs " + std::to_string(cube.bands()) + ")");
    gram.selfadjointView<Eigen::Lower>().rankUpdate(cube.values());
    pooled += cube.pixels();
  }
  gram *= static_cast<double>(target_pixels) / static_cast<double>(pooled);
  SpectralPriorMatrix p;
  p.values = gram.selfadjointView<Eigen::Lower>();
  p.scale_pixels = target_pixels;
  return p;
}

PriorDiagnostics diagnose_prior(const SpectralPriorMatrix& p) {
  PriorDiagnostics d;
  d.asymmetry = (p.values - p.values.transpose()).norm();
  d.trace = p.values.trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.values, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  d.psd = d.min_eigenvalue >= -1e-8 * d.trace / static_cast<double>(std::max<Index>(p.size(), 1));
  return d;
}

void write_spectral_prior(const SpectralPriorMatrix& p, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("SPM1");
  w.u32(static_cast<std::uint32_t>(p.size()));
  w.u64(static_cast<std::uint64_t>(p.scale_pixels));
  for (Index r = 0; r < p.size(); ++r)
    for (Index c = 0; c < p.size(); ++c) w.f64(p.values(r, c));
  write_file_bytes(path, w.bytes());
}

SpectralPriorMatrix read_spectral_prior(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  detail::ByteReader r(bytes);
  if (!r.magic("SPM1")) throw FormatError("not an SPM1 file: " + path.string());
  const Index n = r.u32();
  SpectralPriorMatrix p;
  p.scale_pixels = static_cast<Index>(r.u64());
  if (r.remaining() != static_cast<std::size_t>(n * n) * 8)
    throw CorruptFileError("SPM1 payload size mismatch in " + path.string());
  p.values.resize(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) p.values(i, j) = r.f64();
  check_finite(p.values, "spectral prior");
  return p;
}

HsiCube spatial_prior_image(const HsiCube& product) {
  std::vector<Image> bands;
  bands.reserve(static_cast<std::size_t>(product.bands()));
  for (Index b = 0; b < product.bands(); ++b) bands.push_back(bicubic_scale(product.band(b), 2));
  return from_bands(bands, product.wavelengths());
}

}  // namespace s2hsi
