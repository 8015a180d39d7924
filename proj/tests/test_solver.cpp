#include "doctest.h"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "s2hsi/solver.hpp"

#include <filesystem>
#include <fstream>

using namespace s2hsi;

namespace {

// Six bands, three SRF rows with overlapping support.
SrfMatrix small_srf() {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 6);
  d.row(0) << 0.5, 0.5, 0, 0, 0, 0;
  d.row(1) << 0, 0.25, 0.25, 0.5, 0, 0;
  d.row(2) << 0, 0, 0, 0, 0.5, 0.5;
  return SrfMatrix(d);
}

struct Fixture {
  Geometry g{5, 5};
  SrfMatrix d = small_srf();
  BlurKernel k = build_gaussian_kernel(3, 0.7);
  BandPixelMatrix a_true;
  DiscriminatorParams disc = DiscriminatorParams::random(6, 4, 3);
  SolverProblem pb;

  explicit Fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    a_true = testing::random_matrix(6, g.pixels(), rng, 0.0, 1.0);
    const BandPixelMatrix su = apply_blur(apply_srf(d, a_true), g, k);
    std::mt19937_64 prior_rng(seed + 100);
    const BandPixelMatrix other = testing::random_matrix(6, g.pixels(), prior_rng, 0.0, 1.0);
    pb = SolverProblem{su, g, d, k, gram_matrix(other), &disc};
  }
};

// The Lagrangian built from dense matrices and the naive discriminator.
LagrangianTerms dense_lagrangian(const Fixture& f, const BandPixelMatrix& a, const BandPixelMatrix& t,
                                 const BandPixelMatrix& u, const SolverConfig& cfg) {
  const Eigen::MatrixXd b = oracle::dense_blur_matrix(f.g, f.k.weights);
  LagrangianTerms out;
  out.df = 0.5 * (f.pb.su - oracle::matmul(oracle::matmul(f.d.values(), a), b)).squaredNorm();
  out.spm = 0.5 * cfg.lambda2 * (oracle::matmul(a, a.transpose()) - f.pb.prior).squaredNorm();
  out.dmr = 0.5 * cfg.lambda1 * (1.0 - t.array()).square().sum();
  out.penalty = 0.5 * cfg.mu * (oracle::disc_forward(f.disc, a, f.g) - t - u).squaredNorm();
  return out;
}

}  // namespace

TEST_CASE("spectral lift") {
  SUBCASE("one-hot SRF copies the observed bands") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 4);
    d(0, 0) = 1;
    d(1, 2) = 1;
    std::mt19937_64 rng(1);
    const BandPixelMatrix su = testing::random_matrix(2, 5, rng);
    bool ridged = true;
    const BandPixelMatrix lift = spectral_lift(su, SrfMatrix(d), &ridged);
    CHECK_FALSE(ridged);
    CHECK((lift.row(0) - su.row(0)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((lift.row(2) - su.row(1)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(lift.row(1).isZero(0));
    CHECK(lift.row(3).isZero(0));
  }
  SUBCASE("reproduces S_u and matches the pseudo-inverse") {
    const SrfMatrix d = build_srf(testing::toy_wavelengths_32(), default_sentinel2_bands());
    std::mt19937_64 rng(2);
    const BandPixelMatrix su = testing::random_matrix(12, 9, rng, 0, 1);
    bool ridged = true;
    const BandPixelMatrix lift = spectral_lift(su, d, &ridged);
    CHECK_FALSE(ridged);
    CHECK((oracle::matmul(d.values(), lift) - su).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd pinv = d.values().completeOrthogonalDecomposition().pseudoInverse();
    CHECK((lift - pinv * su).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("rank-deficient SRF is ridged") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 3);
    d.row(0) << 1, 0, 0;
    d.row(1) << 1, 0, 0;
    bool ridged = false;
    const BandPixelMatrix lift = spectral_lift(BandPixelMatrix::Ones(2, 2), SrfMatrix(d), &ridged);
    CHECK(ridged);
    CHECK(lift.allFinite());
  }
  SUBCASE("init_a clamps negatives and init_u is zero") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(2, 2);
    BandPixelMatrix su(2, 1);
    su << -0.3, 0.4;
    const BandPixelMatrix a = init_a(su, SrfMatrix(d));
    CHECK(a(0, 0) == 0.0);
    CHECK(a(1, 0) == doctest::Approx(0.4));
    CHECK(init_u(3, 4).isZero(0));
    CHECK(init_u(3, 4).rows() == 3);
  }
}

TEST_CASE("Lagrangian matches the dense oracle") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Fixture f(seed);
    std::mt19937_64 rng(seed + 10);
    const BandPixelMatrix a = testing::random_matrix(6, 25, rng, 0, 1);
    const BandPixelMatrix t = testing::random_matrix(6, 25, rng, 0, 1);
    const BandPixelMatrix u = testing::random_matrix(6, 25, rng, -0.1, 0.1);
    SolverConfig cfg;
    cfg.lambda1 = 0.3;
    cfg.lambda2 = 0.7;
    cfg.mu = 0.9;
    const LagrangianTerms got = lagrangian(f.pb, a, t, u, cfg);
    const LagrangianTerms want = dense_lagrangian(f, a, t, u, cfg);
    CHECK(got.df == doctest::Approx(want.df).epsilon(1e-12));
    CHECK(got.spm == doctest::Approx(want.spm).epsilon(1e-12));
    CHECK(got.dmr == doctest::Approx(want.dmr).epsilon(1e-12));
    CHECK(got.penalty == doctest::Approx(want.penalty).epsilon(1e-12));
  }
}

TEST_CASE("Lagrangian vanishes at a consistent point") {
  const Fixture f(4);
  SolverProblem pb = f.pb;
  pb.prior = gram_matrix(f.a_true);
  const BandPixelMatrix t = BandPixelMatrix::Ones(6, 25);
  const BandPixelMatrix u = disc_probabilities(f.disc, f.a_true, f.g) - t;
  const LagrangianTerms terms = lagrangian(pb, f.a_true, t, u, SolverConfig{});
  CHECK(terms.df < 1e-28);
  CHECK(terms.spm == 0.0);
  CHECK(terms.dmr == 0.0);
  CHECK(terms.penalty == 0.0);
}

TEST_CASE("T update") {
  const double l1 = 5e-4, mu = 5e-2;
  const BandPixelMatrix zero = BandPixelMatrix::Zero(2, 3);
  CHECK((update_t(BandPixelMatrix::Ones(2, 3), zero, l1, mu).array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK(update_t(zero, zero, l1, mu)(0, 0) == doctest::Approx(0.00990099).epsilon(1e-6));
  CHECK_THROWS_AS(update_t(zero, zero, 0.0, 0.0), ArgumentError);

  std::mt19937_64 rng(5);
  const BandPixelMatrix dout = testing::random_matrix(2, 3, rng, 0, 1);
  const BandPixelMatrix u = testing::random_matrix(2, 3, rng, -0.2, 0.2);
  const BandPixelMatrix t = update_t(dout, u, l1, mu);
  auto objective = [&](const BandPixelMatrix& x) {
    return 0.5 * l1 * (1.0 - x.array()).square().sum() + 0.5 * mu * (dout - x - u).squaredNorm();
  };
  const double best = objective(t);
  for (int i = 0; i < 100; ++i)
    CHECK(objective(t + 1e-3 * testing::random_matrix(2, 3, rng)) > best);
}

TEST_CASE("U update") {
  std::mt19937_64 rng(6);
  const BandPixelMatrix u = testing::random_matrix(3, 4, rng);
  const BandPixelMatrix d = testing::random_matrix(3, 4, rng);
  const BandPixelMatrix t = testing::random_matrix(3, 4, rng);
  CHECK((update_u(u, d, t) - (u - d + t)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(update_u(u, t, t) == u);
}

TEST_CASE("gradients match finite differences") {
  const Fixture f(7);
  std::mt19937_64 rng(8);
  const BandPixelMatrix a = testing::random_matrix(6, 25, rng, 0.1, 0.9);
  const BandPixelMatrix t = testing::random_matrix(6, 25, rng, 0, 1);
  const BandPixelMatrix u = testing::random_matrix(6, 25, rng, -0.1, 0.1);
  SolverConfig cfg;
  cfg.lambda1 = 0.3;
  cfg.lambda2 = 0.7;
  cfg.mu = 0.9;
  auto term = [&](double LagrangianTerms::*field) {
    return [&, field](const Eigen::MatrixXd& x) {
      return dense_lagrangian(f, x, t, u, cfg).*field;
    };
  };

  const Eigen::MatrixXd fd1 = oracle::fd_gradient(term(&LagrangianTerms::df), a, 1e-5);
  CHECK(oracle::relative_error(grad_g1(a, f.pb.su, f.d, f.k, f.g), fd1) <= 1e-6);

  const Eigen::MatrixXd fd2 = oracle::fd_gradient(term(&LagrangianTerms::spm), a, 1e-5);
  CHECK(oracle::relative_error(grad_g2(a, f.pb.prior, cfg.lambda2), fd2) <= 1e-6);

  const Eigen::MatrixXd fd3 = oracle::fd_gradient(term(&LagrangianTerms::penalty), a, 1e-5);
  const ForwardTape tape = disc_forward(f.disc, a, f.g);
  CHECK(oracle::relative_error(grad_g3(tape, t, u, cfg.mu, f.disc), fd3) <= 1e-4);

  const Eigen::MatrixXd fd = oracle::fd_gradient(
      [&](const Eigen::MatrixXd& x) { return dense_lagrangian(f, x, t, u, cfg).total(); }, a, 1e-5);
  CHECK(oracle::relative_error(lagrangian_gradient(f.pb, a, t, u, cfg), fd) <= 1e-4);
}

TEST_CASE("gradient edge cases") {
  std::mt19937_64 rng(9);
  const BandPixelMatrix a = testing::random_matrix(3, 4, rng);
  CHECK(grad_g2(a, Eigen::MatrixXd(), 0.0).isZero(0));
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(3, 3);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(grad_g2(a, asym, 0.5), ArgumentError);
  const Fixture f(1);
  const ForwardTape tape = disc_forward(f.disc, f.a_true, f.g);
  CHECK(grad_g3(tape, f.a_true, f.a_true, 0.0, f.disc).isZero(0));
}

TEST_CASE("A update") {
  const Fixture f(10);
  SolverConfig cfg;
  const BandPixelMatrix t = BandPixelMatrix::Ones(6, 25);

  SUBCASE("zero gradient leaves A unchanged") {
    SolverProblem pb = f.pb;
    pb.prior = gram_matrix(f.a_true);
    const SolverConfig c = without_dmr(cfg);
    const AUpdate up = update_a(pb, f.a_true, t, t, c);
    CHECK((up.a - f.a_true).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("backtracking never increases the Lagrangian") {
    const BandPixelMatrix a0 = init_a(f.pb.su, f.d);
    const BandPixelMatrix u = BandPixelMatrix::Zero(6, 25);
    const AUpdate up = update_a(f.pb, a0, t, u, cfg);
    REQUIRE(up.steps.size() == static_cast<std::size_t>(cfg.inner_steps + 1));
    for (std::size_t i = 1; i < up.steps.size(); ++i)
      CHECK(up.steps[i].terms.total() <= up.steps[i - 1].terms.total());
    CHECK(up.steps.back().terms.total() < up.steps.front().terms.total());
  }
  SUBCASE("50 steps reduce the data-fidelity term by 90%") {
    SolverConfig c = without_spectrum_prior(without_dmr(cfg));
    c.gamma = 1.0;
    c.inner_steps = 50;
    const BandPixelMatrix a0 = BandPixelMatrix::Zero(6, 25);
    const AUpdate up = update_a(f.pb, a0, t, t, c);
    CHECK(up.steps.back().terms.df <= 0.1 * up.steps.front().terms.df);
    CHECK_FALSE(up.stalled);
  }
  SUBCASE("stall is reported when no step decreases the Lagrangian") {
    SolverProblem pb = f.pb;
    pb.prior = gram_matrix(f.a_true);
    SolverConfig c = without_dmr(cfg);
    c.max_halvings = 0;
    c.gamma = 1e6;
    const AUpdate up = update_a(pb, init_a(pb.su, pb.srf), t, t, c);
    CHECK(up.stalled);
    CHECK(up.steps.back().stalled);
  }
}

TEST_CASE("solver reduces to plain gradient descent without priors") {
  const Fixture f(11);
  SolverConfig cfg = without_spectrum_prior(without_dmr(SolverConfig{}));
  cfg.use_backtracking = false;
  cfg.gamma = 0.3;
  cfg.inner_steps = 8;
  cfg.outer_iters = 1;
  cfg.clamp_output = false;
  std::vector<BandPixelMatrix> iterates;
  const SolveResult r = solve_from_prior(
      f.pb, cfg, [&](int, int, const BandPixelMatrix& a) { iterates.push_back(a); });
  const Eigen::MatrixXd b = oracle::dense_blur_matrix(f.g, f.k.weights);
  const auto want = oracle::least_squares_descent(f.pb.su, f.d.values(), b, r.a0, cfg.gamma, 8);
  REQUIRE(iterates.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK((iterates[i] - want[i]).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((r.a - want.back()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("solver degenerate cases") {
  const Fixture f(12);
  SUBCASE("zero outer iterations return the clamped lift") {
    SolverConfig cfg;
    cfg.outer_iters = 0;
    const SolveResult r = solve_from_prior(f.pb, cfg);
    CHECK(r.a == init_a(f.pb.su, f.d));
    CHECK(r.trace.steps.empty());
  }
  SUBCASE("missing discriminator drops the DMR terms") {
    SolverProblem pb = f.pb;
    pb.disc = nullptr;
    const SolveResult r = solve_from_prior(pb, SolverConfig{});
    for (const auto& s : r.trace.steps) {
      CHECK(s.terms.dmr == 0.0);
      CHECK(s.terms.penalty == 0.0);
    }
  }
  SUBCASE("output is clamped") {
    const SolveResult r = solve_from_prior(f.pb, SolverConfig{});
    CHECK(r.a.minCoeff() >= 0.0);
  }
  SUBCASE("invalid configuration") {
    SolverConfig cfg;
    cfg.gamma = 0;
    CHECK_THROWS_AS(solve_from_prior(f.pb, cfg), ArgumentError);
    cfg = SolverConfig{};
    cfg.lambda2 = -1;
    CHECK_THROWS_AS(solve_from_prior(f.pb, cfg), ArgumentError);
  }
  SUBCASE("shape mismatch") {
    SolverProblem pb = f.pb;
    pb.prior = Eigen::MatrixXd::Identity(5, 5);
    CHECK_THROWS_AS(solve_from_prior(pb, SolverConfig{}), ArgumentError);
  }
}

TEST_CASE("DMR pulls the discriminator output toward one") {
  const Fixture f(13);
  SolverConfig on;
  on.lambda1 = 1.0;
  on.mu = 1.0;
  on.lambda2 = 0.0;
  on.gamma = 0.1;
  on.outer_iters = 4;
  on.clamp_output = false;
  const SolverConfig off = without_dmr(on);
  auto realness_gap = [&](const BandPixelMatrix& a) {
    return (1.0 - disc_probabilities(f.disc, a, f.g).array()).square().sum();
  };
  const SolveResult r_on = solve_from_prior(f.pb, on);
  const SolveResult r_off = solve_from_prior(f.pb, off);
  CHECK(realness_gap(r_on.a) < realness_gap(r_off.a));
  CHECK(realness_gap(r_on.a) < realness_gap(r_on.a0));
}

TEST_CASE("config helpers") {
  const SolverConfig base;
  CHECK(without_dmr(base).lambda1 == 0.0);
  CHECK(without_dmr(base).mu == 0.0);
  CHECK(without_spectrum_prior(base).lambda2 == 0.0);
  CHECK(unfold_faithful(base).inner_steps == 1);
  CHECK_FALSE(unfold_faithful(base).use_backtracking);
  CHECK(base.lambda1 == 5e-4);
  CHECK(base.lambda2 == 0.5);
  CHECK(base.mu == 5e-2);
  CHECK(base.gamma == 1e-3);
  CHECK(base.outer_iters == 2);
  CHECK(base.inner_steps == 10);
  CHECK(base.tol == 1e-5);
}

TEST_CASE("lifted fake and trace CSV") {
  const SrfMatrix d = build_srf(testing::toy_wavelengths_32(), default_sentinel2_bands());
  const HsiCube product({6, 6}, BandPixelMatrix::Constant(12, 36, 0.3));
  std::mt19937_64 rng(1), rng2(1);
  const HsiCube fake = lifted_fake(product, d, 0.01, rng);
  CHECK(fake.bands() == 32);
  CHECK(fake.rows() == 12);
  CHECK(lifted_fake(product, d, 0.01, rng2).values() == fake.values());

  const Fixture f(14);
  const SolveResult r = solve_from_prior(f.pb, SolverConfig{});
  const auto path = std::filesystem::temp_directory_path() / "s2hsi_trace.csv";
  write_trace_csv(r.trace, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "outer_iter,inner_step,total,df,dmr,spm,penalty,step_size,stalled");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == r.trace.steps.size());
}
