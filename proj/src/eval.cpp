#include "s2hsi/eval.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace s2hsi {

namespace {

void check_same_shape(const BandPixelMatrix& ref, const BandPixelMatrix& est) {
  if (ref.rows() != est.rows() || ref.cols() != est.cols())
    throw ArgumentError("metric inputs differ in shape: " + std::to_string(ref.rows()) + "x" +
                        std::to_string(ref.cols()) + " vs " + std::to_string(est.rows()) + "x" +
                        std::to_string(est.cols()));
}

}  // namespace

std::vector<double> psnr_per_band(const BandPixelMatrix& ref, const BandPixelMatrix& est) {
  check_same_shape(ref, est);
  std::vector<double> out;
  for (Index b = 0; b < ref.rows(); ++b) {
    const double mse = (ref.row(b) - est.row(b)).squaredNorm() / static_cast<double>(ref.cols());
    out.push_back(mse == 0 ? std::numeric_limits<double>::infinity()
                           : 10.0 * std::log10(kPeak * kPeak / mse));
  }
  return out;
}

double psnr(const BandPixelMatrix& ref, const BandPixelMatrix& est) {
  const auto bands = psnr_per_band(ref, est);
  double sum = 0.0;
  for (double v : bands) sum += v;
  return sum / static_cast<double>(bands.size());
}

std::vector<double> spectral_angles(const BandPixelMatrix& ref, const BandPixelMatrix& est) {
  check_same_shape(ref, est);
  std::vector<double> out(static_cast<std::size_t>(ref.cols()), 0.0);
  for (Index j = 0; j < ref.cols(); ++j) {
    const double na = ref.col(j).norm();
    const double nb = est.col(j).norm();
    if (na == 0 || nb == 0) continue;
    // Half-angle form stays exact near 0 and 180 degrees, unlike acos.
    const Eigen::VectorXd u = ref.col(j) / na;
    const Eigen::VectorXd v = est.col(j) / nb;
    out[static_cast<std::size_t>(j)] = 2.0 * std::atan2((u - v).norm(), (u + v).norm());
  }
  return out;
}

SamResult sam(const BandPixelMatrix& ref, const BandPixelMatrix& est) {
  const auto angles = spectral_angles(ref, est);
  SamResult r;
  double sum = 0.0;
  Index used = 0;
  for (Index j = 0; j < ref.cols(); ++j) {
    if (ref.col(j).squaredNorm() == 0 || est.col(j).squaredNorm() == 0) {
      ++r.excluded;
      continue;
    }
    sum += angles[static_cast<std::size_t>(j)];
    ++used;
  }
  if (used == 0) throw DataError("SAM undefined: every pixel has a zero spectrum");
  r.degrees = sum / static_cast<double>(used) * 180.0 / std::numbers::pi;
  return r;
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

Eigen::VectorXd ssim_taps() {
  Eigen::VectorXd t(kSsimWindow);
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    t(i) = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
  }
  return t / t.sum();
}

// Separable weighted window sums over valid positions.
Image filter_valid(const Image& x, const Eigen::VectorXd& t) {
  const Index w = t.size();
  Image h(x.rows(), x.cols() - w + 1);
  for (Index r = 0; r < h.rows(); ++r)
    for (Index c = 0; c < h.cols(); ++c) h(r, c) = x.row(r).segment(c, w).dot(t.transpose());
  Image out(x.rows() - w + 1, h.cols());
  for (Index r = 0; r < out.rows(); ++r)
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = h.col(c).segment(r, w).dot(t);
  return out;
}

}  // namespace

double ssim_band(const Image& x, const Image& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw ArgumentError("SSIM inputs differ in shape");
  if (x.rows() < kSsimWindow || x.cols() < kSsimWindow)
    throw ArgumentError("SSIM needs images of at least 11x11");
  const Eigen::VectorXd t = ssim_taps();
  const Image mx = filter_valid(x, t);
  const Image my = filter_valid(y, t);
  const Image sxx = filter_valid(x.cwiseProduct(x), t) - mx.cwiseProduct(mx);
  const Image syy = filter_valid(y.cwiseProduct(y), t) - my.cwiseProduct(my);
  const Image sxy = filter_valid(x.cwiseProduct(y), t) - mx.cwiseProduct(my);
  constexpr double c1 = (0.01 * kPeak) * (0.01 * kPeak);
  constexpr double c2 = (0.03 * kPeak) * (0.03 * kPeak);
  const auto num = (2 * mx.array() * my.array() + c1) * (2 * sxy.array() + c2);
  const auto den = (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
  return (num / den).mean();
}

std::vector<double> ssim_per_band(const HsiCube& ref, const HsiCube& est) {
  check_same_shape(ref.values(), est.values());
  if (ref.geometry() != est.geometry()) throw ArgumentError("SSIM inputs differ in geometry");
  std::vector<double> out;
  for (Index b = 0; b < ref.bands(); ++b) out.push_back(ssim_band(ref.band(b), est.band(b)));
  return out;
}

double ssim(const HsiCube& ref, const HsiCube& est) {
  const auto v = ssim_per_band(ref, est);
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double rmse(const BandPixelMatrix& ref, const BandPixelMatrix& est) {
  check_same_shape(ref, est);
  return std::sqrt((ref - est).squaredNorm() / static_cast<double>(ref.size()));
}

double adaptive_l1(const BandPixelMatrix& ref, const BandPixelMatrix& est) {
  const auto angles = spectral_angles(ref, est);
  double sum = 0.0;
  for (Index j = 0; j < ref.cols(); ++j)
    sum += angles[static_cast<std::size_t>(j)] * (ref.col(j) - est.col(j)).cwiseAbs().sum();
  return sum / static_cast<double>(ref.size());
}

MetricReport evaluate(const HsiCube& ref, const HsiCube& est) {
  MetricReport r;
  r.psnr_bands = psnr_per_band(ref.values(), est.values());
  for (double v : r.psnr_bands) r.psnr += v;
  r.psnr /= static_cast<double>(r.psnr_bands.size());
  const SamResult s = sam(ref.values(), est.values());
  r.sam = s.degrees;
  r.sam_excluded = s.excluded;
  r.ssim_bands = ssim_per_band(ref, est);
  for (double v : r.ssim_bands) r.ssim += v;
  r.ssim /= static_cast<double>(r.ssim_bands.size());
  r.rmse = rmse(ref.values(), est.values());
  for (Index b = 0; b < ref.bands(); ++b)
    r.rmse_bands.push_back(std::sqrt((ref.values().row(b) - est.values().row(b)).squaredNorm() /
                                     static_cast<double>(ref.pixels())));
  r.l_g = adaptive_l1(ref.values(), est.values());
  return r;
}

namespace {

std::string fmt_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "scene_id,psnr_db,sam_deg,ssim,rmse,l_g\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.scene_id << ',' << fmt_metric(r.psnr) << ',' << fmt_metric(r.sam) << ','
        << fmt_metric(r.ssim) << ',' << fmt_metric(r.rmse) << ',' << fmt_metric(r.l_g) << '\n';
  }
}

double mdl_penalty(Index k, Index bands, Index pixels) {
  return 0.5 * static_cast<double>(k) * static_cast<double>(2 * bands - k) *
         std::log(static_cast<double>(pixels));
}

MdlResult mdl_order(const BandPixelMatrix& x, Index max_k) {
  const Index m = x.rows();
  const Index l = x.cols();
  if (l <= m) throw ArgumentError("MDL needs more pixels than bands");
  if (max_k < 1 || max_k >= m)
    throw ArgumentError("max_k must lie in [1, " + std::to_string(m - 1) + "]");
  const BandPixelMatrix centered = x.colwise() - x.rowwise().mean();
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(l);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  MdlResult r;
  r.eigenvalues = es.eigenvalues().reverse();
  const double floor = 1e-12 * std::max(r.eigenvalues(0), 0.0);
  for (Index i = 0; i < m; ++i)
    if (!(r.eigenvalues(i) > floor)) {
      r.eigenvalues(i) = floor > 0 ? floor : 1e-300;
      r.floored = true;
    }
  Index best = 1;
  for (Index k = 1; k <= max_k; ++k) {
    const auto tail = r.eigenvalues.tail(m - k).array();
    const double log_geo = tail.log().mean();
    const double log_arith = std::log(tail.mean());
    const double len = -static_cast<double>(l) * static_cast<double>(m - k) * (log_geo - log_arith) +
                       mdl_penalty(k, m, l);
    r.code_length.push_back(len);
    if (len < r.code_length[static_cast<std::size_t>(best - 1)]) best = k;
  }
  r.order = best;
  return r;
}

void write_mdl_csv(const MdlResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "k,code_length\n";
  char buf[64];
  for (std::size_t i = 0; i < r.code_length.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, r.code_length[i]);
    out << buf;
  }
}

double cross_correlation(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError("cross-correlation inputs differ in shape");
  const Eigen::ArrayXd x = a.reshaped<Eigen::RowMajor>().array() - a.mean();
  const Eigen::ArrayXd y = b.reshaped<Eigen::RowMajor>().array() - b.mean();
  const double sx = std::sqrt((x * x).sum());
  const double sy = std::sqrt((y * y).sum());
  const double n = std::sqrt(static_cast<double>(a.size()));
  if (!(sx > 1e-12 * n * a.cwiseAbs().maxCoeff()) || !(sy > 1e-12 * n * b.cwiseAbs().maxCoeff()))
    throw DataError("cross-correlation undefined for a constant map");
  return std::clamp((x * y).sum() / (sx * sy), -1.0, 1.0);
}

}  // namespace s2hsi
