#include "s2hsi/solver.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace s2hsi {

void SolverConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || mu < 0) throw ArgumentError("solver weights must be >= 0");
  if (!(gamma > 0)) throw ArgumentError("gamma must be positive");
  if (lambda1 > 0 && mu == 0) throw ArgumentError("mu must be positive when lambda1 > 0");
  if (outer_iters < 0 || inner_steps < 0 || max_halvings < 0)
    throw ArgumentError("iteration counts must be >= 0");
  if (tol < 0) throw ArgumentError("tol must be >= 0");
}

void SolverProblem::validate() const {
  if (su.rows() != srf.rows())
    throw ArgumentError("S_u has " + std::to_string(su.rows()) + " bands, SRF has " +
                        std::to_string(srf.rows()) + " rows");
  if (su.cols() != geom.pixels()) throw ArgumentError("S_u does not match the geometry");
  if (prior.size() != 0 && (prior.rows() != bands() || prior.cols() != bands()))
    throw ArgumentError("spectral prior must be " + std::to_string(bands()) + "x" +
                        std::to_string(bands()));
  if (disc && disc->bands != bands())
    throw ArgumentError("discriminator band count does not match the SRF");
}

BandPixelMatrix spectral_lift(const BandPixelMatrix& su, const SrfMatrix& d, bool* ridged) {
  if (su.rows() != d.rows()) throw ArgumentError("spectral_lift: S_u / SRF band mismatch");
  const Eigen::MatrixXd& dm = d.values();
  Eigen::MatrixXd gram = dm * dm.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  // Pivot ratio decides when the normal matrix is singular.
  const Eigen::VectorXd piv = ldlt.vectorD().cwiseAbs();
  const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                        !(piv.minCoeff() > 1e-12 * piv.maxCoeff());
  if (singular) {
    gram += 1e-8 * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
    ldlt.compute(gram);
  }
  if (ridged) *ridged = singular;
  return dm.transpose() * ldlt.solve(su);
}

BandPixelMatrix init_a(const BandPixelMatrix& su, const SrfMatrix& d, bool* ridged) {
  return spectral_lift(su, d, ridged).cwiseMax(0.0);
}

namespace {

bool dmr_active(const SolverProblem& pb, const SolverConfig& cfg) {
  return pb.disc != nullptr && (cfg.lambda1 > 0 || cfg.mu > 0);
}

void check_shape(const BandPixelMatrix& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ArgumentError(std::string(what) + " has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(cols));
}

}  // namespace

LagrangianTerms lagrangian(const SolverProblem& pb, const BandPixelMatrix& a,
                           const BandPixelMatrix& t, const BandPixelMatrix& u,
                           const SolverConfig& cfg, const BandPixelMatrix* disc_out) {
  check_shape(a, pb.bands(), pb.geom.pixels(), "A");
  LagrangianTerms terms;
  terms.df = 0.5 * (pb.su - apply_blur(apply_srf(pb.srf, a), pb.geom, pb.kernel)).squaredNorm();
  if (cfg.lambda2 != 0) {
    if (pb.prior.size() == 0) throw ArgumentError("lambda2 > 0 needs a spectral prior");
    terms.spm = 0.5 * cfg.lambda2 * (gram_matrix(a) - pb.prior).squaredNorm();
  }
  if (cfg.lambda1 != 0 || cfg.mu != 0) {
    check_shape(t, a.rows(), a.cols(), "T");
    terms.dmr = 0.5 * cfg.lambda1 * (1.0 - t.array()).square().sum();
  }
  if (cfg.mu != 0) {
    if (!pb.disc) throw ArgumentError("mu > 0 needs a discriminator");
    check_shape(u, a.rows(), a.cols(), "U");
    BandPixelMatrix own;
    if (!disc_out) {
      own = disc_probabilities(*pb.disc, a, pb.geom);
      disc_out = &own;
    }
    terms.penalty = 0.5 * cfg.mu * (*disc_out - t - u).squaredNorm();
  }
  return terms;
}

BandPixelMatrix update_t(const BandPixelMatrix& disc_out, const BandPixelMatrix& u, double lambda1,
                         double mu) {
  if (!(lambda1 + mu > 0)) throw ArgumentError("update_t needs lambda1 + mu > 0");
  check_shape(u, disc_out.rows(), disc_out.cols(), "U");
  return ((lambda1 + mu * (disc_out - u).array()) / (lambda1 + mu)).matrix();
}

BandPixelMatrix grad_g1(const BandPixelMatrix& a, const BandPixelMatrix& su, const SrfMatrix& d,
                        const BlurKernel& k, Geometry g) {
  const BandPixelMatrix residual = apply_blur(apply_srf(d, a), g, k) - su;
  return apply_srf_adjoint(d, apply_blur_adjoint(residual, g, k));
}

BandPixelMatrix grad_g2(const BandPixelMatrix& a, const Eigen::MatrixXd& p, double lambda2) {
  if (lambda2 == 0) return BandPixelMatrix::Zero(a.rows(), a.cols());
  if (p.rows() != a.rows() || p.cols() != a.rows())
    throw ArgumentError("spectral prior shape does not match A");
  if ((p - p.transpose()).norm() > 1e-10) throw ArgumentError("spectral prior is not symmetric");
  return 2.0 * lambda2 * ((gram_matrix(a) - p) * a);
}

BandPixelMatrix grad_g3(const ForwardTape& tape, const BandPixelMatrix& t, const BandPixelMatrix& u,
                        double mu, const DiscriminatorParams& disc) {
  if (mu == 0) return BandPixelMatrix::Zero(tape.output.rows(), tape.output.cols());
  check_shape(t, tape.output.rows(), tape.output.cols(), "T");
  check_shape(u, tape.output.rows(), tape.output.cols(), "U");
  return mu * disc_vjp(disc, tape, tape.output - t - u);
}

BandPixelMatrix lagrangian_gradient(const SolverProblem& pb, const BandPixelMatrix& a,
                                    const BandPixelMatrix& t, const BandPixelMatrix& u,
                                    const SolverConfig& cfg, const ForwardTape* tape) {
  BandPixelMatrix g = grad_g1(a, pb.su, pb.srf, pb.kernel, pb.geom);
  if (cfg.lambda2 != 0) g += grad_g2(a, pb.prior, cfg.lambda2);
  if (cfg.mu != 0) {
    if (!pb.disc) throw ArgumentError("mu > 0 needs a discriminator");
    ForwardTape own;
    if (!tape) {
      own = disc_forward(*pb.disc, a, pb.geom);
      tape = &own;
    }
    g += grad_g3(*tape, t, u, cfg.mu, *pb.disc);
  }
  return g;
}

BandPixelMatrix update_u(const BandPixelMatrix& u, const BandPixelMatrix& disc_out,
                         const BandPixelMatrix& t) {
  check_shape(disc_out, u.rows(), u.cols(), "D(A)");
  check_shape(t, u.rows(), u.cols(), "T");
  return u - (disc_out - t);
}

namespace {

// A point together with its discriminator pass and Lagrangian value.
struct Evaluated {
  BandPixelMatrix a;
  ForwardTape tape;
  LagrangianTerms terms;
};

Evaluated evaluate(const SolverProblem& pb, BandPixelMatrix a, const BandPixelMatrix& t,
                   const BandPixelMatrix& u, const SolverConfig& cfg) {
  Evaluated e;
  e.a = std::move(a);
  if (cfg.mu != 0) e.tape = disc_forward(*pb.disc, e.a, pb.geom);
  e.terms = lagrangian(pb, e.a, t, u, cfg, cfg.mu != 0 ? &e.tape.output : nullptr);
  return e;
}

}  // namespace

AUpdate update_a(const SolverProblem& pb, const BandPixelMatrix& a, const BandPixelMatrix& t,
                 const BandPixelMatrix& u, const SolverConfig& cfg, int outer_iter,
                 const IterateObserver& observer) {
  cfg.validate();
  Evaluated cur = evaluate(pb, a, t, u, cfg);
  AUpdate out;
  out.steps.push_back({outer_iter, 0, cur.terms, 0.0, false});
  for (int step = 1; step <= cfg.inner_steps; ++step) {
    const BandPixelMatrix g =
        lagrangian_gradient(pb, cur.a, t, u, cfg, cfg.mu != 0 ? &cur.tape : nullptr);
    double gamma = cfg.gamma;
    bool accepted = false;
    if (!cfg.use_backtracking) {
      cur = evaluate(pb, cur.a - gamma * g, t, u, cfg);
      accepted = true;
    } else {
      for (int halvings = 0; halvings <= cfg.max_halvings; ++halvings, gamma *= 0.5) {
        Evaluated trial = evaluate(pb, cur.a - gamma * g, t, u, cfg);
        if (trial.terms.total() <= cur.terms.total()) {
          cur = std::move(trial);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      out.stalled = true;
      out.steps.push_back({outer_iter, step, cur.terms, 0.0, true});
      break;
    }
    out.step_size = gamma;
    out.steps.push_back({outer_iter, step, cur.terms, gamma, false});
    if (observer) observer(outer_iter, step, cur.a);
  }
  out.a = std::move(cur.a);
  return out;
}

SolveResult solve_from_prior(const SolverProblem& pb, const SolverConfig& cfg_in,
                             const IterateObserver& observer) {
  pb.validate();
  SolverConfig cfg = dmr_active(pb, cfg_in) ? cfg_in : without_dmr(cfg_in);
  cfg.validate();
  const bool dmr = cfg.lambda1 + cfg.mu > 0;

  SolveResult res;
  res.a0 = init_a(pb.su, pb.srf, &res.trace.ridged_init);
  BandPixelMatrix a = res.a0;
  BandPixelMatrix u = init_u(a.rows(), a.cols());
  BandPixelMatrix t = BandPixelMatrix::Zero(a.rows(), a.cols());

  for (int k = 1; k <= cfg.outer_iters; ++k) {
    if (dmr) t = update_t(disc_probabilities(*pb.disc, a, pb.geom), u, cfg.lambda1, cfg.mu);
    AUpdate step = update_a(pb, a, t, u, cfg, k, observer);
    res.trace.steps.insert(res.trace.steps.end(), step.steps.begin(), step.steps.end());
    BandPixelMatrix disc_new;
    if (dmr) {
      disc_new = disc_probabilities(*pb.disc, step.a, pb.geom);
      u = update_u(u, disc_new, t);
    }
    const double base = a.norm();
    const double change = (step.a - a).norm() / (base > 0 ? base : 1.0);
    a = std::move(step.a);
    res.trace.outer.push_back(
        {k, lagrangian(pb, a, t, u, cfg, cfg.mu != 0 ? &disc_new : nullptr), change});
    if (step.stalled) {
      res.trace.stalled = true;
      break;
    }
    if (change < cfg.tol) break;
  }
  if (cfg.clamp_output) a = a.cwiseMax(0.0);
  res.a = std::move(a);
  return res;
}

Reconstruction solve(const HsiCube& product, const SrfMatrix& srf, const Eigen::MatrixXd& prior,
                     const DiscriminatorParams* disc, const SolverConfig& cfg) {
  const HsiCube su = spatial_prior_image(product);
  SolverProblem pb{su.values(), su.geometry(), srf, model_kernel(), prior, disc};
  SolveResult r = solve_from_prior(pb, cfg);
  return {HsiCube(su.geometry(), std::move(r.a)), HsiCube(su.geometry(), std::move(r.a0)),
          std::move(r.trace)};
}

SolverConfig without_dmr(SolverConfig cfg) {
  cfg.lambda1 = 0;
  cfg.mu = 0;
  return cfg;
}

SolverConfig without_spectrum_prior(SolverConfig cfg) {
  cfg.lambda2 = 0;
  return cfg;
}

SolverConfig unfold_faithful(SolverConfig cfg) {
  cfg.inner_steps = 1;
  cfg.use_backtracking = false;
  return cfg;
}

HsiCube lifted_fake(const HsiCube& product, const SrfMatrix& d, double noise_rel,
                    std::mt19937_64& rng) {
  const HsiCube su = spatial_prior_image(product);
  BandPixelMatrix lift = init_a(su.values(), d);
  const double rms = std::sqrt(lift.squaredNorm() / static_cast<double>(lift.size()));
  std::normal_distribution<double> noise(0.0, noise_rel * rms);
  for (Index j = 0; j < lift.cols(); ++j)
    for (Index i = 0; i < lift.rows(); ++i) lift(i, j) += noise(rng);
  return HsiCube(su.geometry(), std::move(lift));
}

void write_trace_csv(const SolveTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "outer_iter,inner_step,total,df,dmr,spm,penalty,step_size,stalled\n";
  char buf[256];
  for (const auto& s : trace.steps) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", s.outer_iter,
                  s.inner_step, s.terms.total(), s.terms.df, s.terms.dmr, s.terms.spm,
                  s.terms.penalty, s.step_size, s.stalled ? 1 : 0);
    out << buf;
  }
}

}  // namespace s2hsi
