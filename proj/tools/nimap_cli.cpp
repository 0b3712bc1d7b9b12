#include "nimap/binary_io.hpp"
#include "nimap/config.hpp"
#include "nimap/pipeline.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

namespace {

// Failures are reported as a single line "error: <kind>: <message>" on stderr.
int fail(const char* kind, const std::string& message) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << kind << ": " << flat << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural implicit RGB-D mapping with submaps"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir, poses_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  int resolution = 128;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Render ground-truth RGB-D frames and trajectories");
  simulate->add_option("--config", config_path, "Run config (JSON)")->required();
  add_common(simulate);

  CLI::App* run = app.add_subcommand("run", "Map a simulated sequence and save a checkpoint");
  run->add_option("--config", config_path, "Run config (JSON)")->required();
  add_common(run);

  CLI::App* render = app.add_subcommand("render", "Render fused views from a checkpoint");
  render->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  render->add_option("--poses", poses_path, "Pose list, one 'timestamp tx ty tz qx qy qz qw' per line")->required();
  add_common(render);

  CLI::App* mesh = app.add_subcommand("mesh", "Extract the occupancy 0.5 surface as PLY");
  mesh->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  mesh->add_option("--resolution", resolution, "Lattice cells along the longest side")->check(CLI::Range(1, 4096));
  add_common(mesh);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint against the scene oracle");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--config", config_path, "Run config with the matching scene")->required();
  add_common(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    auto load = [&]() {
      nimap::RunConfig cfg = nimap::load_config(config_path);
      if (seed) nimap::apply_seed(cfg, *seed);
      if (threads) nimap::apply_threads(cfg, *threads);
      cfg.validate();
      if (out_dir.empty()) out_dir = cfg.output_dir;
      return cfg;
    };
    const std::string here = out_dir.empty() ? std::string(".") : out_dir;

    nimap::Json summary;
    if (*simulate) {
      const auto cfg = load();
      summary = nimap::cmd_simulate(cfg, out_dir);
    } else if (*run) {
      const auto cfg = load();
      summary = nimap::cmd_run(cfg, out_dir);
    } else if (*render) {
      summary = nimap::cmd_render(checkpoint, poses_path, here);
    } else if (*mesh) {
      summary = nimap::cmd_mesh(checkpoint, resolution, here);
    } else if (*eval) {
      const auto cfg = load();
      summary = nimap::cmd_eval(checkpoint, cfg, out_dir);
    }
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const nimap::io::FormatError& e) {
    return fail("format", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid", e.what());
  } catch (const std::out_of_range& e) {
    return fail("invalid", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
}
