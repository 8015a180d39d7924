// s2hsi: Sentinel-2 to hyperspectral reconstruction pipeline.

#include "s2hsi/discriminator.hpp"
#include "s2hsi/eval.hpp"
#include "s2hsi/prior.hpp"
#include "s2hsi/simulate.hpp"
#include "s2hsi/solver.hpp"
#include "worker_pool.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace s2hsi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  std::string config_echo;  // defaults to <out>/<command>.ini

  std::vector<std::string> inputs;
  std::string band_spec;
  std::string manifest;
  std::string split;
  std::string srf;
  std::string prior;
  std::string disc;
  std::vector<std::string> refs;
  std::vector<std::string> ests;

  int train = -1, test = 0, val = 0;
  Index target_pixels = 0;

  int steps = 200;
  double step_size = 1e-5;
  Index hidden = 32;
  Index patch_size = 16;
  int batch_size = 4;
  double fake_noise = 0.01;

  SolverConfig solver;
  bool no_dmr = false;
  bool no_spectrum_prior = false;
  bool unfold = false;
  bool no_clamp = false;

  std::string composite;
  Index max_k = 0;
};

void log(const std::string& msg) { std::cerr << "s2hsi: " << msg << '\n'; }

std::string scene_of(const fs::path& p) {
  std::string name = p.filename().string();
  for (const char* suffix : {".ref.hsc", ".S.hsc", ".rec.hsc", ".hsc"}) {
    const std::string s = suffix;
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0)
      return name.substr(0, name.size() - s.size());
  }
  return p.stem().string();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ArgumentError(what + " is required");
  if (!fs::exists(path)) throw ArgumentError(what + " not found: " + path);
}

// Brings an AVIRIS-NG cube to the reconstruction band set. Other band counts
// pass through and must carry their own wavelengths.
HsiCube prepare_reference(const HsiCube& raw) {
  if (raw.bands() == 425) {
    const HsiCube c = raw.wavelengths() ? raw : HsiCube(raw.geometry(), raw.values(), aviris_ng_wavelengths());
    return spectral_downsample2(remove_water_bands(c));
  }
  if (raw.bands() == 372 && !raw.wavelengths()) {
    const HsiCube full({1, 1}, BandPixelMatrix::Zero(425, 1), aviris_ng_wavelengths());
    return spectral_downsample2(HsiCube(raw.geometry(), raw.values(), remove_water_bands(full).wavelengths()));
  }
  if (raw.bands() == 372) return spectral_downsample2(raw);
  if (raw.bands() == 186 && !raw.wavelengths()) {
    const HsiCube full({1, 1}, BandPixelMatrix::Zero(425, 1), aviris_ng_wavelengths());
    return HsiCube(raw.geometry(), raw.values(),
                   spectral_downsample2(remove_water_bands(full)).wavelengths());
  }
  if (!raw.wavelengths())
    throw ArgumentError("a " + std::to_string(raw.bands()) + "-band cube needs stored wavelengths");
  return raw;
}

std::vector<HsiCube> load_split(const RunConfig& rc, Split split, std::vector<std::string>* ids = nullptr) {
  require_file(rc.manifest, "--manifest");
  const SceneManifest m = read_manifest(rc.manifest);
  const auto entries = m.select(split);
  if (entries.empty()) throw ArgumentError("manifest has no " + to_string(split) + " scenes");
  const fs::path base = fs::path(rc.manifest).parent_path();
  std::vector<HsiCube> cubes(entries.size(), HsiCube({1, 1}, BandPixelMatrix::Zero(1, 1)));
  cli::parallel_for(entries.size(), rc.workers,
                    [&](std::size_t i) { cubes[i] = read_cube(resolve(base, entries[i].path)); });
  if (ids)
    for (const auto& e : entries) ids->push_back(e.scene_id);
  return cubes;
}

int cmd_simulate(const RunConfig& rc) {
  std::vector<SentinelBandSpec> specs = default_sentinel2_bands();
  if (!rc.band_spec.empty()) specs = read_band_specs(rc.band_spec);
  if (rc.inputs.empty()) throw ArgumentError("--input is required");
  const fs::path out(rc.out);

  const std::size_t n = rc.inputs.size();
  std::vector<std::optional<HsiCube>> refs(n);
  cli::parallel_for(n, rc.workers, [&](std::size_t i) { refs[i] = prepare_reference(read_cube(rc.inputs[i])); });
  for (std::size_t i = 1; i < n; ++i)
    if (refs[i]->wavelengths() != refs[0]->wavelengths())
      throw ArgumentError("input cubes do not share one wavelength grid");
  const SrfMatrix d = build_srf(*refs[0]->wavelengths(), specs);
  write_srf(d, out / "srf.txt");

  std::vector<std::pair<std::string, std::string>> scenes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = scene_of(rc.inputs[i]);
    scenes.push_back({id + ".ref.hsc", id});
  }
  cli::parallel_for(n, rc.workers, [&](std::size_t i) {
    const std::string& id = scenes[i].second;
    const Simulation sim = simulate_sentinel2(*refs[i], d, specs);
    write_cube(*refs[i], out / (id + ".ref.hsc"));
    write_cube(sim.product.cube, out / (id + ".S.hsc"));
    write_cube(sim.su_true, out / (id + ".Su_true.hsc"));
  });

  const SplitSizes sizes{rc.train < 0 ? n - static_cast<std::size_t>(rc.test + rc.val)
                                      : static_cast<std::size_t>(rc.train),
                         static_cast<std::size_t>(rc.test), static_cast<std::size_t>(rc.val)};
  write_manifest(make_dataset(scenes, sizes, rc.seed), out / "manifest.tsv");
  log("simulated " + std::to_string(n) + " scene(s)");
  return kExitOk;
}

int cmd_build_prior(const RunConfig& rc) {
  const auto cubes = load_split(rc, parse_split(rc.split));
  const Index target = rc.target_pixels > 0 ? rc.target_pixels : cubes.front().pixels();
  const SpectralPriorMatrix p = estimate_spectral_prior(cubes, target);
  const PriorDiagnostics diag = diagnose_prior(p);
  char buf[160];
  std::snprintf(buf, sizeof buf, "prior %lldx%lld: asymmetry %.3g, min eigenvalue %.6g, trace %.6g, %s",
                static_cast<long long>(p.size()), static_cast<long long>(p.size()), diag.asymmetry,
                diag.min_eigenvalue, diag.trace, diag.psd ? "PSD" : "not PSD");
  log(buf);
  write_spectral_prior(p, fs::path(rc.out) / "prior.spm");
  return kExitOk;
}

int cmd_train_disc(const RunConfig& rc) {
  std::vector<std::string> ids;
  const auto real = load_split(rc, parse_split(rc.split), &ids);
  require_file(rc.srf, "--srf");
  const SrfMatrix d = read_srf(rc.srf);
  const fs::path base = fs::path(rc.manifest).parent_path();

  // Each scene draws its noise from its own stream so the fakes do not depend on scheduling.
  std::vector<HsiCube> fake(real.size(), HsiCube({1, 1}, BandPixelMatrix::Zero(1, 1)));
  cli::parallel_for(real.size(), rc.workers, [&](std::size_t i) {
    const HsiCube product = read_cube(base / (ids[i] + ".S.hsc"));
    std::mt19937_64 rng(rc.seed + 0x9e3779b97f4a7c15ULL * (i + 1));
    fake[i] = lifted_fake(product, d, rc.fake_noise, rng);
  });

  DiscTrainOptions opt;
  opt.steps = rc.steps;
  opt.step_size = rc.step_size;
  opt.patch_size = rc.patch_size;
  opt.batch_size = rc.batch_size;
  opt.seed = rc.seed;
  const auto init = DiscriminatorParams::random(real.front().bands(), rc.hidden, rc.seed);
  const DiscTrainResult r = train_discriminator(init, real, fake, opt);
  write_discriminator(r.params, fs::path(rc.out) / "disc.dsc");
  write_disc_trace_csv(r.trace, fs::path(rc.out) / "disc_trace.csv");
  if (!r.trace.empty()) {
    const auto& last = r.trace.back();
    char buf[128];
    std::snprintf(buf, sizeof buf, "final L_D %.6g, p_r %.6g, p_f %.6g", last.loss, last.p_real, last.p_fake);
    log(buf);
  }
  return kExitOk;
}

int cmd_reconstruct(const RunConfig& rc) {
  if (rc.inputs.empty()) throw ArgumentError("--input is required");
  require_file(rc.srf, "--srf");
  const SrfMatrix d = read_srf(rc.srf);

  SolverConfig cfg = rc.solver;
  if (rc.no_dmr) cfg = without_dmr(cfg);
  if (rc.no_spectrum_prior) cfg = without_spectrum_prior(cfg);
  if (rc.unfold) cfg = unfold_faithful(cfg);
  if (rc.no_clamp) cfg.clamp_output = false;
  cfg.validate();

  Eigen::MatrixXd prior;
  if (cfg.lambda2 != 0) {
    require_file(rc.prior, "--prior (or --no-spectrum-prior)");
    prior = read_spectral_prior(rc.prior).values;
  }
  std::optional<DiscriminatorParams> disc;
  if (cfg.lambda1 != 0 || cfg.mu != 0) {
    require_file(rc.disc, "--disc (or --no-dmr)");
    disc = read_discriminator(rc.disc);
  }

  const fs::path out(rc.out);
  std::vector<char> stalled(rc.inputs.size(), 0);
  cli::parallel_for(rc.inputs.size(), rc.workers, [&](std::size_t i) {
    const HsiCube product = read_cube(rc.inputs[i]);
    const std::string id = scene_of(rc.inputs[i]);
    const Reconstruction r = solve(product, d, prior, disc ? &*disc : nullptr, cfg);
    write_cube(r.cube, out / (id + ".rec.hsc"));
    write_trace_csv(r.trace, out / (id + ".trace.csv"));
    stalled[i] = r.trace.stalled;
  });
  for (std::size_t i = 0; i < stalled.size(); ++i)
    if (stalled[i]) log("warning: line search stalled on " + scene_of(rc.inputs[i]) + "; result written");
  return kExitOk;
}

std::array<Index, 3> parse_composite(const std::string& s) {
  std::array<Index, 3> bands{};
  std::stringstream ss(s);
  std::string tok;
  std::size_t n = 0;
  while (std::getline(ss, tok, ',')) {
    if (n == 3) throw ArgumentError("--composite takes three band indices");
    try {
      std::size_t used = 0;
      bands[n++] = std::stoll(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ArgumentError("bad band index in --composite: " + tok);
    }
  }
  if (n != 3) throw ArgumentError("--composite takes three band indices");
  return bands;
}

int cmd_eval(const RunConfig& rc) {
  if (rc.refs.empty() || rc.refs.size() != rc.ests.size())
    throw ArgumentError("--ref and --est must be given in equal numbers");
  std::optional<std::array<Index, 3>> rgb;
  if (!rc.composite.empty()) rgb = parse_composite(rc.composite);

  const fs::path out(rc.out);
  std::vector<MetricRow> rows(rc.refs.size());
  cli::parallel_for(rows.size(), rc.workers, [&](std::size_t i) {
    const HsiCube ref = read_cube(rc.refs[i]);
    const HsiCube est = read_cube(rc.ests[i]);
    if (ref.bands() != est.bands() || ref.geometry() != est.geometry())
      throw ArgumentError("reference and estimate differ in shape for " + rc.ests[i]);
    rows[i] = {scene_of(rc.ests[i]), evaluate(ref, est)};
    if (rgb) write_ppm(truecolor_composite(est, *rgb), out / (rows[i].scene_id + ".rgb.ppm"));
  });
  write_metric_csv(rows, out / "metrics.csv");
  return kExitOk;
}

int cmd_mdl(const RunConfig& rc) {
  if (rc.inputs.size() != 1) throw ArgumentError("mdl takes exactly one --input cube");
  const HsiCube cube = read_cube(rc.inputs.front());
  const Index max_k = rc.max_k > 0 ? rc.max_k : std::min<Index>(cube.bands() - 1, 20);
  const MdlResult r = mdl_order(cube.values(), max_k);
  if (r.floored) log("warning: eigenvalues floored at 1e-12 of the largest");
  write_mdl_csv(r, fs::path(rc.out) / "mdl.csv");
  std::cout << r.order << '\n';
  return kExitOk;
}

// Keeps only the chosen subcommand's lines from the full config dump.
std::string config_echo(const CLI::App& app, const std::string& command) {
  std::stringstream in(app.config_to_str(true, false));
  std::string out, line;
  const std::string prefix = command + ".";
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) out += line + '\n';
  return out;
}

void add_solver_flags(CLI::App* sub, RunConfig& rc) {
  sub->add_option("--lambda1", rc.solver.lambda1, "DMR weight");
  sub->add_option("--lambda2", rc.solver.lambda2, "spectrum-prior weight");
  sub->add_option("--mu", rc.solver.mu, "penalty parameter");
  sub->add_option("--gamma", rc.solver.gamma, "initial step size");
  sub->add_option("--outer-iters", rc.solver.outer_iters, "outer iterations");
  sub->add_option("--inner-steps", rc.solver.inner_steps, "gradient steps per A update");
  sub->add_option("--tol", rc.solver.tol, "relative-change stopping tolerance");
  sub->add_flag("--no-dmr", rc.no_dmr, "set lambda1 = mu = 0");
  sub->add_flag("--no-spectrum-prior", rc.no_spectrum_prior, "set lambda2 = 0");
  sub->add_flag("--unfold-faithful", rc.unfold, "one fixed-step gradient update per iteration");
  sub->add_flag("--no-clamp", rc.no_clamp, "keep negative reflectance in the output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentinel-2 to hyperspectral reconstruction"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "rerun from a config echo file");
  app.require_subcommand(1);

  RunConfig rc;
  auto shared = [&](CLI::App* sub) {
    sub->add_option("--seed", rc.seed, "random seed");
    sub->add_option("--workers", rc.workers, "scene-level worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", rc.out, "output directory")->required();
    sub->add_option("--config-echo", rc.config_echo, "config echo path (default <out>/<command>.ini)");
  };

  auto* sim = app.add_subcommand("simulate", "simulate Sentinel-2 products from hyperspectral cubes");
  shared(sim);
  sim->add_option("--input", rc.inputs, "HSC1 reference cubes");
  sim->add_option("--band-spec", rc.band_spec, "Sentinel-2 band table");
  sim->add_option("--train", rc.train, "training scenes (default: all remaining)");
  sim->add_option("--test", rc.test, "test scenes");
  sim->add_option("--val", rc.val, "validation scenes");

  auto* prior = app.add_subcommand("build-prior", "estimate the spectral prior matrix");
  shared(prior);
  prior->add_option("--manifest", rc.manifest, "scene manifest");
  prior->add_option("--split", rc.split, "manifest split")->default_val("train");
  prior->add_option("--target-pixels", rc.target_pixels, "pixel count P is scaled to (default: first cube)");

  auto* train = app.add_subcommand("train-disc", "train the band-wise discriminator");
  shared(train);
  train->add_option("--manifest", rc.manifest, "scene manifest");
  train->add_option("--split", rc.split, "manifest split")->default_val("train");
  train->add_option("--srf", rc.srf, "SRF file");
  train->add_option("--steps", rc.steps, "Adam steps");
  train->add_option("--step-size", rc.step_size, "Adam step size");
  train->add_option("--hidden", rc.hidden, "hidden channels");
  train->add_option("--patch-size", rc.patch_size, "training patch side");
  train->add_option("--batch-size", rc.batch_size, "patches per class and step");
  train->add_option("--fake-noise", rc.fake_noise, "fake-sample noise relative to the lift RMS");

  auto* rec = app.add_subcommand("reconstruct", "reconstruct hyperspectral cubes");
  shared(rec);
  rec->add_option("--input", rc.inputs, "HSC1 Sentinel-2 products");
  rec->add_option("--srf", rc.srf, "SRF file");
  rec->add_option("--prior", rc.prior, "SPM1 spectral prior");
  rec->add_option("--disc", rc.disc, "DSC1 discriminator");
  add_solver_flags(rec, rc);

  auto* ev = app.add_subcommand("eval", "score estimates against references");
  shared(ev);
  ev->add_option("--ref", rc.refs, "reference cubes");
  ev->add_option("--est", rc.ests, "estimated cubes, paired with --ref in order");
  ev->add_option("--composite", rc.composite, "write R,G,B band composites, e.g. 25,12,8");

  auto* mdl = app.add_subcommand("mdl", "estimate the number of sources");
  shared(mdl);
  mdl->add_option("--input", rc.inputs, "HSC1 cube");
  mdl->add_option("--max-k", rc.max_k, "largest order tried (default min(bands - 1, 20))");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  rc.command = chosen->get_name();
  try {
    fs::create_directories(rc.out);
    const fs::path echo = rc.config_echo.empty() ? fs::path(rc.out) / (rc.command + ".ini") : fs::path(rc.config_echo);
    {
      std::ofstream f(echo);
      if (!f) throw IoError("cannot write " + echo.string());
      f << config_echo(app, rc.command);
    }
    if (rc.command == "simulate") return cmd_simulate(rc);
    if (rc.command == "build-prior") return cmd_build_prior(rc);
    if (rc.command == "train-disc") return cmd_train_disc(rc);
    if (rc.command == "reconstruct") return cmd_reconstruct(rc);
    if (rc.command == "eval") return cmd_eval(rc);
    if (rc.command == "mdl") return cmd_mdl(rc);
  } catch (const ArgumentError& e) {
    log(std::string("error: ") + e.what());
    std::cerr << chosen->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kExitError;
  }
  return kExitError;
}
