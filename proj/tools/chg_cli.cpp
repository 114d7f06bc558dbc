// chg <mode> --config <path> [--out <dir>] [--seed <u64>] [--preset <name>]
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "chg/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cahn-Hilliard tumour model: forward runs and initial-state reconstruction"};
  std::string mode, config, out, preset;
  std::uint64_t seed = 0;
  app.add_option("mode", mode, "forward | make-target | reconstruct | grad-check")->required();
  auto* config_opt = app.add_option("--config", config, "configuration file");
  auto* out_opt = app.add_option("--out", out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
  auto* preset_opt = app.add_option("--preset", preset, "named preset applied before the file");
  app.footer("Presets: test_case_1 .. test_case_6, each also with a _desk suffix.");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : chg::exit_config;
  }

  // Assembly and the solvers run on one thread; the variable is only validated.
  if (const char* t = std::getenv("CHG_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(t, &end, 10);
    if (*t == '\0' || *end != '\0' || n < 0) {
      std::cerr << "error: CHG_THREADS must be a non-negative integer\n";
      return chg::exit_config;
    }
  }

  try {
    chg::ConfigOverrides ov;
    ov.mode = chg::parse_mode(mode);
    if (*preset_opt) ov.preset = preset;
    if (*seed_opt) ov.seed = seed;
    if (*out_opt) ov.output = out;
    const chg::RunConfig cfg = *config_opt ? chg::parse_config(config, ov) : chg::parse_config_text("", ov);
    return chg::run_mode(cfg, std::cout);
  } catch (const chg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return chg::exit_code_for(e.kind());
  }
}
