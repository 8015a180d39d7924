// Element-wise real/fake probability network with hand-written backprop.
//
// Layout: 3x3 conv (bands -> hidden), leaky ReLU, 3x3 conv (hidden -> hidden),
// leaky ReLU, 1x1 conv (hidden -> bands), logistic sigmoid. Every convolution
// is circular, so the network is equivariant to circular shifts of its input.
#pragma once

#include "s2hsi/cube.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace s2hsi {

inline constexpr int kConvTaps = 9;  // 3x3 offsets, (dy, dx) in row-major order

struct DiscriminatorParams {
  Index bands = 0;
  Index hidden = 0;
  double slope = 0.2;

  std::array<Eigen::MatrixXd, kConvTaps> w1;  // hidden x bands per offset
  Eigen::VectorXd b1;
  std::array<Eigen::MatrixXd, kConvTaps> w2;  // hidden x hidden per offset
  Eigen::VectorXd b2;
  Eigen::MatrixXd w3;  // bands x hidden
  Eigen::VectorXd b3;

  static DiscriminatorParams zeros(Index bands, Index hidden = 32);
  /// He-normal weights, zero biases.
  static DiscriminatorParams random(Index bands, Index hidden, std::uint64_t seed);

  Index parameter_count() const;
  /// Flat view in file order: w1 offsets, b1, w2 offsets, b2, w3, b3.
  Eigen::VectorXd pack() const;
  void unpack(const Eigen::VectorXd& flat);
};

/// Stored activations of one forward pass.
struct ForwardTape {
  Geometry geom;
  Index bands = 0;
  Index hidden = 0;
  BandPixelMatrix input;
  Eigen::MatrixXd z1, h1, z2, h2;
  BandPixelMatrix output;  // probabilities, bands x pixels
};

ForwardTape disc_forward(const DiscriminatorParams& params, const BandPixelMatrix& a, Geometry g);

inline BandPixelMatrix disc_probabilities(const DiscriminatorParams& params,
                                          const BandPixelMatrix& a, Geometry g) {
  return disc_forward(params, a, g).output;
}

/// J^T v for the forward map recorded in `tape`.
BandPixelMatrix disc_vjp(const DiscriminatorParams& params, const ForwardTape& tape,
                         const BandPixelMatrix& cotangent);

/// Parameter gradient (packed) of sum(cotangent .* output) for one tape.
Eigen::VectorXd disc_param_vjp(const DiscriminatorParams& params, const ForwardTape& tape,
                               const BandPixelMatrix& cotangent);

inline constexpr double kProbClamp = 1e-12;

/// -(log p_r + log(1 - p_f)) with both means clamped to [1e-12, 1 - 1e-12].
double disc_loss(double p_real, double p_fake);

struct DiscGradient {
  Eigen::VectorXd grad;  // packed, same order as DiscriminatorParams::pack
  double loss = 0.0;
  double p_real = 0.0;
  double p_fake = 0.0;
};

/// Batch means of the network output over every entry of every patch.
struct BatchProbabilities {
  double p_real = 0.0;
  double p_fake = 0.0;
};

BatchProbabilities batch_probabilities(const DiscriminatorParams& params,
                                       const std::vector<HsiCube>& real,
                                       const std::vector<HsiCube>& fake);

DiscGradient disc_param_grad(const DiscriminatorParams& params, const std::vector<HsiCube>& real,
                             const std::vector<HsiCube>& fake);

struct DiscTrainOptions {
  int steps = 0;
  double step_size = 1e-5;
  Index patch_size = 16;
  int batch_size = 4;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct DiscTraceEntry {
  int step = 0;
  double loss = 0.0;
  double p_real = 0.0;
  double p_fake = 0.0;
  double best_loss = 0.0;  // running minimum of loss, monotone non-increasing
};

struct DiscTrainResult {
  DiscriminatorParams params;
  std::vector<DiscTraceEntry> trace;
};

/// Adam on L_D over randomly cropped patch batches. Deterministic in `seed`.
DiscTrainResult train_discriminator(DiscriminatorParams params, const std::vector<HsiCube>& real,
                                    const std::vector<HsiCube>& fake,
                                    const DiscTrainOptions& options);

/// Top-left aligned crop.
HsiCube crop(const HsiCube& cube, Index row, Index col, Index rows, Index cols);

void write_discriminator(const DiscriminatorParams& params, const std::filesystem::path& path);
DiscriminatorParams read_discriminator(const std::filesystem::path& path);
void write_disc_trace_csv(const std::vector<DiscTraceEntry>& trace,
                          const std::filesystem::path& path);

}  // namespace s2hsi
