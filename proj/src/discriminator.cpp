#include "s2hsi/discriminator.hpp"

#include "byteio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

namespace s2hsi {

namespace {

constexpr int offset_dy(int o) { return o / 3 - 1; }
constexpr int offset_dx(int o) { return o % 3 - 1; }

// Column gather: out.col(p) = x.col(pixel at p + (dy, dx)), periodic.
Eigen::MatrixXd shift(const Eigen::MatrixXd& x, Geometry g, int dy, int dx) {
  if (dy == 0 && dx == 0) return x;
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Index r = 0; r < g.rows; ++r) {
    const Index sr = wrap_index(r + dy, g.rows);
    for (Index c = 0; c < g.cols; ++c)
      out.col(g.pixel(r, c)) = x.col(g.pixel(sr, wrap_index(c + dx, g.cols)));
  }
  return out;
}

Eigen::MatrixXd conv3x3(const std::array<Eigen::MatrixXd, kConvTaps>& w, const Eigen::VectorXd& b,
                        const Eigen::MatrixXd& x, Geometry g) {
  Eigen::MatrixXd z = b.replicate(1, x.cols());
  for (int o = 0; o < kConvTaps; ++o) z.noalias() += w[o] * shift(x, g, offset_dy(o), offset_dx(o));
  return z;
}

// Adjoint of conv3x3 with respect to its input.
Eigen::MatrixXd conv3x3_transpose(const std::array<Eigen::MatrixXd, kConvTaps>& w,
                                  const Eigen::MatrixXd& gz, Geometry g) {
  Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(w[0].cols(), gz.cols());
  for (int o = 0; o < kConvTaps; ++o) {
    const Eigen::MatrixXd t = w[o].transpose() * gz;
    gx += shift(t, g, -offset_dy(o), -offset_dx(o));
  }
  return gx;
}

Eigen::MatrixXd leaky(const Eigen::MatrixXd& z, double slope) {
  return z.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
}

Eigen::MatrixXd leaky_backward(const Eigen::MatrixXd& z, const Eigen::MatrixXd& g, double slope) {
  return g.binaryExpr(z, [slope](double gv, double zv) { return zv > 0 ? gv : slope * gv; });
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Grads {
  BandPixelMatrix input;
  DiscriminatorParams params;
};

Grads backward(const DiscriminatorParams& p, const ForwardTape& t, const BandPixelMatrix& v,
               bool want_params) {
  if (t.bands != p.bands || t.hidden != p.hidden)
    throw ArgumentError("forward tape does not match discriminator shape");
  if (v.rows() != t.output.rows() || v.cols() != t.output.cols())
    throw ArgumentError("cotangent shape does not match the forward output");
  const Geometry g = t.geom;
  Grads out;
  const Eigen::MatrixXd gz3 =
      v.cwiseProduct(t.output.cwiseProduct((1.0 - t.output.array()).matrix()));
  const Eigen::MatrixXd gz2 = leaky_backward(t.z2, p.w3.transpose() * gz3, p.slope);
  const Eigen::MatrixXd gz1 = leaky_backward(t.z1, conv3x3_transpose(p.w2, gz2, g), p.slope);
  out.input = conv3x3_transpose(p.w1, gz1, g);
  if (want_params) {
    auto& gp = out.params;
    gp = DiscriminatorParams::zeros(p.bands, p.hidden);
    gp.w3 = gz3 * t.h2.transpose();
    gp.b3 = gz3.rowwise().sum();
    for (int o = 0; o < kConvTaps; ++o) {
      gp.w2[o] = gz2 * shift(t.h1, g, offset_dy(o), offset_dx(o)).transpose();
      gp.w1[o] = gz1 * shift(t.input, g, offset_dy(o), offset_dx(o)).transpose();
    }
    gp.b2 = gz2.rowwise().sum();
    gp.b1 = gz1.rowwise().sum();
  }
  return out;
}

}  // namespace

DiscriminatorParams DiscriminatorParams::zeros(Index bands, Index hidden) {
  if (bands <= 0 || hidden <= 0) throw ArgumentError("discriminator dimensions must be positive");
  DiscriminatorParams p;
  p.bands = bands;
  p.hidden = hidden;
  for (auto& w : p.w1) w = Eigen::MatrixXd::Zero(hidden, bands);
  for (auto& w : p.w2) w = Eigen::MatrixXd::Zero(hidden, hidden);
  p.b1 = Eigen::VectorXd::Zero(hidden);
  p.b2 = Eigen::VectorXd::Zero(hidden);
  p.w3 = Eigen::MatrixXd::Zero(bands, hidden);
  p.b3 = Eigen::VectorXd::Zero(bands);
  return p;
}

DiscriminatorParams DiscriminatorParams::random(Index bands, Index hidden, std::uint64_t seed) {
  DiscriminatorParams p = zeros(bands, hidden);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto fill = [&](Eigen::MatrixXd& m, double fan_in) {
    const double s = std::sqrt(2.0 / fan_in);
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = s * n01(rng);
  };
  for (auto& w : p.w1) fill(w, 9.0 * static_cast<double>(bands));
  for (auto& w : p.w2) fill(w, 9.0 * static_cast<double>(hidden));
  fill(p.w3, static_cast<double>(hidden));
  return p;
}

Index DiscriminatorParams::parameter_count() const {
  return kConvTaps * hidden * bands + hidden + kConvTaps * hidden * hidden + hidden +
         bands * hidden + bands;
}

Eigen::VectorXd DiscriminatorParams::pack() const {
  Eigen::VectorXd flat(parameter_count());
  Index pos = 0;
  auto put = [&](const auto& m) {
    flat.segment(pos, m.size()) = m.reshaped();
    pos += m.size();
  };
  for (const auto& w : w1) put(w);
  put(b1);
  for (const auto& w : w2) put(w);
  put(b2);
  put(w3);
  put(b3);
  return flat;
}

void DiscriminatorParams::unpack(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw ArgumentError("packed parameter size mismatch");
  Index pos = 0;
  auto get = [&](auto& m) {
    m.reshaped() = flat.segment(pos, m.size());
    pos += m.size();
  };
  for (auto& w : w1) get(w);
  get(b1);
  for (auto& w : w2) get(w);
  get(b2);
  get(w3);
  get(b3);
}

ForwardTape disc_forward(const DiscriminatorParams& p, const BandPixelMatrix& a, Geometry g) {
  if (a.rows() != p.bands)
    throw ArgumentError("discriminator expects " + std::to_string(p.bands) + " bands, got " +
                        std::to_string(a.rows()));
  if (a.cols() != g.pixels()) throw ArgumentError("discriminator input geometry mismatch");
  if (!a.allFinite()) throw DataError("discriminator input contains non-finite values");
  ForwardTape t;
  t.geom = g;
  t.bands = p.bands;
  t.hidden = p.hidden;
  t.input = a;
  t.z1 = conv3x3(p.w1, p.b1, a, g);
  t.h1 = leaky(t.z1, p.slope);
  t.z2 = conv3x3(p.w2, p.b2, t.h1, g);
  t.h2 = leaky(t.z2, p.slope);
  Eigen::MatrixXd z3 = p.w3 * t.h2;
  z3.colwise() += p.b3;
  t.output = z3.unaryExpr(&sigmoid);
  return t;
}

BandPixelMatrix disc_vjp(const DiscriminatorParams& params, const ForwardTape& tape,
                         const BandPixelMatrix& cotangent) {
  return backward(params, tape, cotangent, false).input;
}

Eigen::VectorXd disc_param_vjp(const DiscriminatorParams& params, const ForwardTape& tape,
                               const BandPixelMatrix& cotangent) {
  return backward(params, tape, cotangent, true).params.pack();
}

double disc_loss(double p_real, double p_fake) {
  const double pr = std::clamp(p_real, kProbClamp, 1.0 - kProbClamp);
  const double pf = std::clamp(p_fake, kProbClamp, 1.0 - kProbClamp);
  return -(std::log(pr) + std::log(1.0 - pf));
}

namespace {

struct BatchPass {
  std::vector<ForwardTape> tapes;
  double mean = 0.0;
  double entries = 0.0;
};

BatchPass run_batch(const DiscriminatorParams& params, const std::vector<HsiCube>& batch) {
  BatchPass out;
  double sum = 0.0;
  for (const auto& patch : batch) {
    out.tapes.push_back(disc_forward(params, patch.values(), patch.geometry()));
    sum += out.tapes.back().output.sum();
    out.entries += static_cast<double>(patch.values().size());
  }
  out.mean = sum / out.entries;
  return out;
}

}  // namespace

BatchProbabilities batch_probabilities(const DiscriminatorParams& params,
                                       const std::vector<HsiCube>& real,
                                       const std::vector<HsiCube>& fake) {
  if (real.empty() || fake.empty()) throw ArgumentError("empty discriminator batch");
  return {run_batch(params, real).mean, run_batch(params, fake).mean};
}

DiscGradient disc_param_grad(const DiscriminatorParams& params, const std::vector<HsiCube>& real,
                             const std::vector<HsiCube>& fake) {
  if (real.empty() || fake.empty()) throw ArgumentError("empty discriminator batch");
  const BatchPass r = run_batch(params, real);
  const BatchPass f = run_batch(params, fake);
  DiscGradient out;
  out.p_real = r.mean;
  out.p_fake = f.mean;
  out.loss = disc_loss(r.mean, f.mean);
  out.grad = Eigen::VectorXd::Zero(params.parameter_count());

  // dL/dp_r = -1/p_r, dL/dp_f = 1/(1 - p_f); each mean spreads 1/N per entry.
  const double pr = std::clamp(r.mean, kProbClamp, 1.0 - kProbClamp);
  const double pf = std::clamp(f.mean, kProbClamp, 1.0 - kProbClamp);
  const double real_weight = -1.0 / pr / r.entries;
  const double fake_weight = 1.0 / (1.0 - pf) / f.entries;
  for (const auto& t : r.tapes)
    out.grad += disc_param_vjp(
        params, t, BandPixelMatrix::Constant(t.output.rows(), t.output.cols(), real_weight));
  for (const auto& t : f.tapes)
    out.grad += disc_param_vjp(
        params, t, BandPixelMatrix::Constant(t.output.rows(), t.output.cols(), fake_weight));
  return out;
}

HsiCube crop(const HsiCube& cube, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || row + rows > cube.rows() || col + cols > cube.cols())
    throw ArgumentError("crop window outside the cube");
  const Geometry g{rows, cols};
  BandPixelMatrix m(cube.bands(), g.pixels());
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      m.col(g.pixel(r, c)) = cube.values().col(cube.geometry().pixel(row + r, col + c));
  return HsiCube(g, std::move(m), cube.wavelengths());
}

namespace {

std::vector<HsiCube> sample_patches(const std::vector<HsiCube>& pool, int count, Index size,
                                    std::mt19937_64& rng) {
  std::vector<HsiCube> out;
  for (int i = 0; i < count; ++i) {
    const auto& cube = pool[rng() % pool.size()];
    const Index rows = std::min(size, cube.rows());
    const Index cols = std::min(size, cube.cols());
    const Index r0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(cube.rows() - rows + 1));
    const Index c0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(cube.cols() - cols + 1));
    out.push_back(crop(cube, r0, c0, rows, cols));
  }
  return out;
}

}  // namespace

DiscTrainResult train_discriminator(DiscriminatorParams params, const std::vector<HsiCube>& real,
                                    const std::vector<HsiCube>& fake,
                                    const DiscTrainOptions& opt) {
  if (real.empty() || fake.empty()) throw ArgumentError("discriminator training needs real and fake cubes");
  if (opt.steps < 0 || opt.batch_size < 1 || opt.patch_size < 1 || !(opt.step_size > 0))
    throw ArgumentError("invalid discriminator training options");
  DiscTrainResult result;
  std::mt19937_64 rng(opt.seed);
  Eigen::VectorXd theta = params.pack();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  double best = std::numeric_limits<double>::infinity();
  for (int step = 1; step <= opt.steps; ++step) {
    const auto real_batch = sample_patches(real, opt.batch_size, opt.patch_size, rng);
    const auto fake_batch = sample_patches(fake, opt.batch_size, opt.patch_size, rng);
    params.unpack(theta);
    const DiscGradient g = disc_param_grad(params, real_batch, fake_batch);
    m = opt.beta1 * m + (1.0 - opt.beta1) * g.grad;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opt.beta1, step);
    const double c2 = 1.0 - std::pow(opt.beta2, step);
    theta.array() -= opt.step_size * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
    best = std::min(best, g.loss);
    result.trace.push_back({step, g.loss, g.p_real, g.p_fake, best});
  }
  params.unpack(theta);
  result.params = std::move(params);
  return result;
}

void write_discriminator(const DiscriminatorParams& p, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("DSC1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(p.bands));
  w.u32(static_cast<std::uint32_t>(p.hidden));
  w.u32(3);
  w.u32(3);
  w.u32(1);
  w.f64(p.slope);
  const Eigen::VectorXd flat = p.pack();
  for (Index i = 0; i < flat.size(); ++i) w.f64(flat(i));
  write_file_bytes(path, w.bytes());
}

DiscriminatorParams read_discriminator(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  detail::ByteReader r(bytes);
  if (!r.magic("DSC1")) throw FormatError("not a DSC1 file: " + path.string());
  if (r.u32() != 1) throw FormatError("unsupported DSC1 version");
  const Index bands = r.u32();
  const Index hidden = r.u32();
  const auto k1 = r.u32(), k2 = r.u32(), k3 = r.u32();
  if (k1 != 3 || k2 != 3 || k3 != 1) throw FormatError("unsupported discriminator kernel layout");
  DiscriminatorParams p = DiscriminatorParams::zeros(bands, hidden);
  p.slope = r.f64();
  if (r.remaining() != static_cast<std::size_t>(p.parameter_count()) * 8)
    throw CorruptFileError("DSC1 payload size mismatch in " + path.string());
  Eigen::VectorXd flat(p.parameter_count());
  for (Index i = 0; i < flat.size(); ++i) flat(i) = r.f64();
  if (!flat.allFinite()) throw DataError("non-finite discriminator parameter");
  p.unpack(flat);
  return p;
}

void write_disc_trace_csv(const std::vector<DiscTraceEntry>& trace,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,L_D,p_r,p_f\n";
  char buf[128];
  for (const auto& e : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.step, e.loss, e.p_real, e.p_fake);
    out << buf;
  }
}

}  // namespace s2hsi
