// Quasi-Split-Bregman reconstruction of a fine-spectrum cube A from the
// 12-band 5 m prior image S_u.
//
// Augmented Lagrangian, with T the auxiliary copy of D_theta(A) and U the
// scaled dual:
//
//   L(A, T, U) = 1/2 ||S_u - D A B||^2 + lambda1/2 ||1 - T||^2
//              + lambda2/2 ||A A^T - P||^2 + mu/2 ||D_theta(A) - T - U||^2
//
// Each outer iteration updates T in closed form, takes a few gradient steps
// on A, then updates U.
#pragma once

#include "s2hsi/discriminator.hpp"
#include "s2hsi/operators.hpp"
#include "s2hsi/prior.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <vector>

namespace s2hsi {

struct SolverConfig {
  double lambda1 = 5e-4;
  double lambda2 = 5e-1;
  double mu = 5e-2;
  double gamma = 1e-3;
  int outer_iters = 2;
  int inner_steps = 10;
  double tol = 1e-5;
  bool clamp_output = true;
  bool use_backtracking = true;
  int max_halvings = 30;

  void validate() const;
};

/// Everything the Lagrangian depends on besides (A, T, U).
struct SolverProblem {
  BandPixelMatrix su;  // 12 x L
  Geometry geom;
  SrfMatrix srf;
  BlurKernel kernel = model_kernel();
  Eigen::MatrixXd prior;                      // bands x bands; may be empty when lambda2 = 0
  const DiscriminatorParams* disc = nullptr;  // frozen; null disables the DMR terms

  Index bands() const { return srf.cols(); }
  void validate() const;
};

struct LagrangianTerms {
  double df = 0.0;
  double dmr = 0.0;
  double spm = 0.0;
  double penalty = 0.0;

  double total() const { return df + dmr + spm + penalty; }
};

/// Minimum-norm spectral lift D^T (D D^T)^{-1} S_u, before clamping. Falls back
/// to a 1e-8 ridge when D D^T is singular and reports it through `ridged`.
BandPixelMatrix spectral_lift(const BandPixelMatrix& su, const SrfMatrix& d, bool* ridged = nullptr);

/// spectral_lift clamped to be nonnegative.
BandPixelMatrix init_a(const BandPixelMatrix& su, const SrfMatrix& d, bool* ridged = nullptr);

inline BandPixelMatrix init_u(Index bands, Index pixels) {
  return BandPixelMatrix::Zero(bands, pixels);
}

/// Evaluates every term. `disc_out` may carry a precomputed D_theta(A).
LagrangianTerms lagrangian(const SolverProblem& pb, const BandPixelMatrix& a,
                           const BandPixelMatrix& t, const BandPixelMatrix& u,
                           const SolverConfig& cfg, const BandPixelMatrix* disc_out = nullptr);

/// Closed-form T minimizer: (lambda1 * 1 + mu * (disc_out - U)) / (lambda1 + mu).
BandPixelMatrix update_t(const BandPixelMatrix& disc_out, const BandPixelMatrix& u, double lambda1,
                         double mu);

/// D^T (D A B - S_u) B^T.
BandPixelMatrix grad_g1(const BandPixelMatrix& a, const BandPixelMatrix& su, const SrfMatrix& d,
                        const BlurKernel& k, Geometry g);

/// 2 lambda2 (A A^T - P) A.
BandPixelMatrix grad_g2(const BandPixelMatrix& a, const Eigen::MatrixXd& p, double lambda2);

/// mu J^T (D_theta(A) - T - U), using the tape recorded at A.
BandPixelMatrix grad_g3(const ForwardTape& tape, const BandPixelMatrix& t, const BandPixelMatrix& u,
                        double mu, const DiscriminatorParams& disc);

/// Full gradient G1 + G2 + G3 of L with respect to A. `tape` may carry the
/// discriminator pass at A.
BandPixelMatrix lagrangian_gradient(const SolverProblem& pb, const BandPixelMatrix& a,
                                    const BandPixelMatrix& t, const BandPixelMatrix& u,
                                    const SolverConfig& cfg, const ForwardTape* tape = nullptr);

/// U - (disc_out - T), signed as in the reference iteration.
BandPixelMatrix update_u(const BandPixelMatrix& u, const BandPixelMatrix& disc_out,
                         const BandPixelMatrix& t);

struct StepRecord {
  int outer_iter = 0;
  int inner_step = 0;  // 0 is the value before any step of this outer iteration
  LagrangianTerms terms;
  double step_size = 0.0;
  bool stalled = false;
};

/// Called with every inner iterate.
using IterateObserver = std::function<void(int outer_iter, int inner_step, const BandPixelMatrix& a)>;

struct AUpdate {
  BandPixelMatrix a;
  double step_size = 0.0;  // last accepted step
  bool stalled = false;
  std::vector<StepRecord> steps;
};

/// cfg.inner_steps gradient steps on L(., T, U). With backtracking, each step
/// halves gamma until L does not increase; after cfg.max_halvings failures it
/// keeps the current A and sets `stalled`.
AUpdate update_a(const SolverProblem& pb, const BandPixelMatrix& a, const BandPixelMatrix& t,
                 const BandPixelMatrix& u, const SolverConfig& cfg, int outer_iter = 0,
                 const IterateObserver& observer = {});

struct OuterRecord {
  int iter = 0;
  LagrangianTerms terms;  // after the U update
  double relative_change = 0.0;
};

struct SolveTrace {
  std::vector<StepRecord> steps;
  std::vector<OuterRecord> outer;
  bool stalled = false;
  bool ridged_init = false;
};

struct SolveResult {
  BandPixelMatrix a;
  BandPixelMatrix a0;  // the lift the iteration started from
  SolveTrace trace;
};

/// Runs the outer loop from A0 = init_a(S_u), U0 = 0. A null discriminator
/// or lambda1 + mu = 0 disables the T/U updates and the DMR terms.
SolveResult solve_from_prior(const SolverProblem& pb, const SolverConfig& cfg,
                             const IterateObserver& observer = {});

struct Reconstruction {
  HsiCube cube;
  HsiCube init;  // clamped lift, the baseline the iteration starts from
  SolveTrace trace;
};

/// Full path from a 10 m product: S_u = spatial_prior_image(S), then
/// solve_from_prior with the model blur kernel. `prior` may be empty when
/// lambda2 = 0.
Reconstruction solve(const HsiCube& product, const SrfMatrix& srf, const Eigen::MatrixXd& prior,
                     const DiscriminatorParams* disc, const SolverConfig& cfg);

/// Forces lambda1 = mu = 0 (no discriminator).
SolverConfig without_dmr(SolverConfig cfg);
/// Forces lambda2 = 0.
SolverConfig without_spectrum_prior(SolverConfig cfg);
/// One fixed-gamma step per outer iteration.
SolverConfig unfold_faithful(SolverConfig cfg);

/// Clamped lift of S_u plus Gaussian noise of standard deviation
/// noise_rel * rms(lift); the default fake source for discriminator training.
HsiCube lifted_fake(const HsiCube& product, const SrfMatrix& d, double noise_rel,
                    std::mt19937_64& rng);

void write_trace_csv(const SolveTrace& trace, const std::filesystem::path& path);

}  // namespace s2hsi
