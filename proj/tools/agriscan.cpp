// agriscan command line: simulate, solve, georef, calibrate, evaluate, bake,
// autoexpose, e2e. Artifacts go to --out, log lines to stderr.

#include "agriscan/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON pipeline config (defaults are used when absent)");
  app->add_option("--out", c.out, "output directory (overrides output_dir)");
  app->add_option("--seed", c.seed, "master seed (overrides seed)");
  app->add_option("--threads", c.threads, "worker threads (overrides threads)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace agriscan;
  CLI::App app{"agriscan: kinematic laser scanning pipeline"};
  app.require_subcommand(1);

  const char* names[] = {"simulate", "solve", "georef", "calibrate", "evaluate", "bake", "autoexpose", "e2e"};
  const char* help[] = {"synthesize a scene and simulate laser, IMU and GNSS streams",
                        "estimate the trajectory from IMU, GNSS and heading",
                        "georeference the laser profiles into a point cloud",
                        "recover scanner mountings from a plane scene",
                        "compare a cloud to a reference (ICP, M3C2, leaf areas)",
                        "render views of the scene and bake a texture",
                        "run the exposure controller",
                        "run every stage in order"};
  Common common;
  std::string ref;
  std::string cmp;
  std::string histograms;
  std::vector<CLI::App*> subs;
  for (int i = 0; i < 8; ++i) {
    CLI::App* s = app.add_subcommand(names[i], help[i]);
    add_common(s, common);
    subs.push_back(s);
  }
  subs[4]->add_option("--ref", ref, "reference PLY");
  subs[4]->add_option("--cmp", cmp, "compared PLY");
  subs[6]->add_option("--histograms", histograms, "CSV of 8-bin histograms to replay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string sub;
  for (CLI::App* s : subs) {
    if (s->parsed()) sub = s->get_name();
  }

  try {
    PipelineConfig cfg = common.config.empty() ? PipelineConfig{} : load_config(common.config);
    CLI::App* chosen = app.get_subcommand(sub);
    if (chosen->count("--seed")) cfg.seed = common.seed;
    if (chosen->count("--threads")) cfg.threads = common.threads;
    if (chosen->count("--out")) cfg.output_dir = common.out;
    cfg.finalize();
    const std::filesystem::path out = cfg.output_dir;
    std::filesystem::create_directories(out);

    StageOutput result;
    if (sub == "simulate") {
      result = run_simulate(cfg, out);
    } else if (sub == "solve") {
      result = run_solve(cfg, out);
    } else if (sub == "georef") {
      result = run_georef(cfg, out);
    } else if (sub == "calibrate") {
      result = run_calibrate(cfg, out);
    } else if (sub == "evaluate") {
      EvaluateInputs in;
      if (!ref.empty()) in.reference = ref;
      if (!cmp.empty()) in.compared = cmp;
      result = run_evaluate(cfg, out, in);
    } else if (sub == "bake") {
      result = run_bake(cfg, out);
    } else if (sub == "autoexpose") {
      result = run_autoexpose(cfg, out, histograms.empty() ? std::nullopt : std::optional<std::filesystem::path>(histograms));
    } else {
      result = run_e2e(cfg, out);
    }
    write_manifest(out, sub, cfg, result);
    std::clog << "[" << sub << "] done, manifest_" << sub << ".json written to " << out.string() << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return is_numerical(e.code()) ? 3 : 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [Io]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
