#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cli_harness.hpp"
#include "oracles.hpp"
#include "s2hsi/discriminator.hpp"
#include "s2hsi/prior.hpp"
#include "s2hsi/simulate.hpp"

using namespace s2hsi;
using namespace s2hsi::testing;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "s2hsi_cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  const fs::path dir = scratch("usage");
  CHECK(run_cli({}, dir).code == 2);
  CHECK(run_cli({"frobnicate"}, dir).code == 2);
  CHECK(run_cli({"mdl", "--input", "x.hsc"}, dir).code == 2);  // --out missing
  CHECK(run_cli({"simulate", "--out", dir.string(), "--workers", "0"}, dir).code == 2);
  CHECK(run_cli({"--help"}, dir).code == 0);
}

TEST_CASE("simulate") {
  const fs::path dir = scratch("simulate");
  const auto scenes = write_toy_scenes(dir / "in", 2);

  SUBCASE("missing band-spec table exits with 2 and usage text") {
    const CliResult r = run_cli({"simulate", "--input", scenes[0], "--band-spec", (dir / "none.txt").string(),
                                 "--out", (dir / "o").string()},
                                dir);
    CHECK(r.code == 2);
    CHECK(read_text(dir / "stderr.txt").find("--band-spec") != std::string::npos);
  }
  SUBCASE("outputs and determinism") {
    const fs::path a = dir / "a", b = dir / "b";
    for (const auto& o : {a, b})
      REQUIRE(run_cli({"simulate", "--input", scenes[0], "--input", scenes[1], "--seed", "3", "--out", o.string()},
                      dir)
                  .code == 0);
    CHECK(same_outputs(a, b));
    const HsiCube s = read_cube(a / "scene0.S.hsc");
    CHECK(s.bands() == 12);
    CHECK(s.rows() == 24);
    CHECK(read_cube(a / "scene0.ref.hsc").bands() == 32);
    CHECK(read_cube(a / "scene0.Su_true.hsc").rows() == 48);
    CHECK(read_manifest(a / "manifest.tsv").select(Split::Train).size() == 2);
    CHECK(fs::exists(a / "simulate.ini"));
  }
  SUBCASE("corrupt input exits with 1") {
    auto bytes = read_file_bytes(scenes[0]);
    bytes.resize(bytes.size() - 8);
    write_file_bytes(dir / "bad.hsc", bytes);
    CHECK(run_cli({"simulate", "--input", (dir / "bad.hsc").string(), "--out", (dir / "c").string()}, dir).code == 1);
  }
}

TEST_CASE("build-prior matches the pooled-Gram oracle") {
  const fs::path dir = scratch("prior");
  const auto scenes = write_toy_scenes(dir / "in", 3);
  std::vector<std::string> args = {"simulate", "--out", (dir / "sim").string()};
  for (const auto& s : scenes) args.insert(args.end(), {"--input", s});
  REQUIRE(run_cli(args, dir).code == 0);
  REQUIRE(run_cli({"build-prior", "--manifest", (dir / "sim" / "manifest.tsv").string(), "--out",
                   (dir / "p").string()},
                  dir)
              .code == 0);
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(32, 32);
  for (int i = 0; i < 3; ++i) {
    const HsiCube c = read_cube(dir / "sim" / ("scene" + std::to_string(i) + ".ref.hsc"));
    want += oracle::matmul(c.values(), c.values().transpose());
  }
  want /= 3.0;  // three cubes of equal size, scaled to one cube's pixel count
  const SpectralPriorMatrix p = read_spectral_prior(dir / "p" / "prior.spm");
  CHECK((p.values - want).cwiseAbs().maxCoeff() <= 1e-10 * want.cwiseAbs().maxCoeff());

  SUBCASE("empty split exits with 2") {
    CHECK(run_cli({"build-prior", "--manifest", (dir / "sim" / "manifest.tsv").string(), "--split", "val",
                   "--out", (dir / "q").string()},
                  dir)
              .code == 2);
  }
}

TEST_CASE("train-disc with zero steps writes the initialization") {
  const fs::path dir = scratch("disc");
  const auto scenes = write_toy_scenes(dir / "in", 1);
  REQUIRE(run_cli({"simulate", "--input", scenes[0], "--out", (dir / "sim").string()}, dir).code == 0);
  REQUIRE(run_cli({"train-disc", "--manifest", (dir / "sim" / "manifest.tsv").string(), "--srf",
                   (dir / "sim" / "srf.txt").string(), "--steps", "0", "--hidden", "4", "--seed", "9", "--out",
                   (dir / "d").string()},
                  dir)
              .code == 0);
  CHECK(read_discriminator(dir / "d" / "disc.dsc").pack() == DiscriminatorParams::random(32, 4, 9).pack());
}

TEST_CASE("reconstruct and eval") {
  const fs::path dir = scratch("rec");
  const auto scenes = write_toy_scenes(dir / "in", 1);
  REQUIRE(run_cli({"simulate", "--input", scenes[0], "--out", (dir / "sim").string()}, dir).code == 0);
  const std::string product = (dir / "sim" / "scene0.S.hsc").string();
  const std::string srf = (dir / "sim" / "srf.txt").string();

  SUBCASE("prior-free path") {
    REQUIRE(run_cli({"reconstruct", "--input", product, "--srf", srf, "--no-dmr", "--no-spectrum-prior",
                     "--out", (dir / "r").string()},
                    dir)
                .code == 0);
    const HsiCube rec = read_cube(dir / "r" / "scene0.rec.hsc");
    CHECK(rec.bands() == 32);
    CHECK(rec.rows() == 48);
    CHECK(fs::exists(dir / "r" / "scene0.trace.csv"));
    CHECK(read_text(dir / "r" / "reconstruct.ini").find("reconstruct.no-dmr=true") != std::string::npos);

    const std::string ref = (dir / "sim" / "scene0.ref.hsc").string();
    REQUIRE(run_cli({"eval", "--ref", ref, "--est", ref, "--composite", "25,12,8", "--out", (dir / "e").string()},
                    dir)
                .code == 0);
    const std::string csv = read_text(dir / "e" / "metrics.csv");
    CHECK(csv.find("scene0,inf,0,1,0,0") != std::string::npos);
    const auto ppm = read_file_bytes(dir / "e" / "scene0.rgb.ppm");
    CHECK(std::string(ppm.begin(), ppm.begin() + 2) == "P6");

    CHECK(run_cli({"eval", "--ref", ref, "--est", product, "--out", (dir / "e2").string()}, dir).code == 2);
    CHECK(run_cli({"eval", "--ref", ref, "--est", ref, "--composite", "25,12", "--out", (dir / "e3").string()}, dir)
              .code == 2);
  }
  SUBCASE("missing prior or discriminator exits with 2") {
    CHECK(run_cli({"reconstruct", "--input", product, "--srf", srf, "--no-dmr", "--out", (dir / "r2").string()}, dir)
              .code == 2);
    CHECK(run_cli({"reconstruct", "--input", product, "--srf", srf, "--no-spectrum-prior", "--out",
                   (dir / "r3").string()},
                  dir)
              .code == 2);
  }
}

TEST_CASE("mdl") {
  const fs::path dir = scratch("mdl");
  std::mt19937_64 rng(1);
  const Eigen::VectorXd e = random_matrix(8, 1, rng, 0.2, 1);
  BandPixelMatrix x = e * random_matrix(1, 400, rng, 0, 1);
  x += 1e-4 * random_matrix(8, 400, rng);
  write_cube(HsiCube({20, 20}, x), dir / "rank1.hsc");
  const CliResult r = run_cli({"mdl", "--input", (dir / "rank1.hsc").string(), "--max-k", "5", "--out",
                               (dir / "m").string()},
                              dir);
  REQUIRE(r.code == 0);
  CHECK(r.out == "1\n");
  std::ifstream in(dir / "m" / "mdl.csv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 6);
  CHECK(run_cli({"mdl", "--input", (dir / "rank1.hsc").string(), "--max-k", "8", "--out", (dir / "m2").string()},
                dir)
            .code == 2);
}

TEST_CASE("reruns from the config echo are byte-identical for any worker count") {
  const fs::path dir = scratch("rerun");
  const auto scenes = write_toy_scenes(dir / "in", 3);
  const PipelineRun first = run_pipeline(scenes, dir / "w1", 1);
  REQUIRE_MESSAGE(first.ok, first.failure);
  for (const auto& stage : pipeline_stages()) {
    for (int workers : {1, 3}) {
      const fs::path out = dir / ("rerun" + std::to_string(workers)) / stage;
      const CliResult r = run_cli({"--config", (dir / "w1" / stage / (stage + ".ini")).string(), stage, "--out",
                                   out.string(), "--workers", std::to_string(workers)},
                                  out);
      CHECK(r.code == 0);
      CHECK_MESSAGE(same_outputs(dir / "w1" / stage, out), stage << " with " << workers << " workers");
    }
  }
}
