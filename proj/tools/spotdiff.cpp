// spotdiff: generate, compare, calibrate and serve-check entry points.

#include <iostream>

#include <CLI11.hpp>

#include "spotdiff/experiment.hpp"

namespace {

void add_common(CLI::App* cmd, spotdiff::CommandOptions& opts, std::string& out, int& seeds,
                std::string& denoiser) {
  cmd->add_option("--config", opts.config_path, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.sets, "Override, section.key=value (repeatable)");
  cmd->add_option("--out", out, "Output directory");
  cmd->add_option("--seeds", seeds, "Number of consecutive seeds");
  cmd->add_option("--denoiser", denoiser, "mrf, replay or external:<cmd>");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiled panorama diffusion sampler"};
  app.require_subcommand(1);

  spotdiff::CommandOptions opts;
  std::string out;
  int seeds = -1;
  std::string denoiser;
  int requests = 8;
  std::string expect = "any";

  auto* generate = app.add_subcommand("generate", "Sample panoramas and write images, latents and metrics");
  auto* compare = app.add_subcommand("compare", "Run several strategies from the same seeds");
  auto* calibrate = app.add_subcommand("calibrate", "Derive seam thresholds from reference runs");
  auto* serve = app.add_subcommand("serve-check", "Exercise an external denoiser over the stdio protocol");
  for (auto* cmd : {generate, compare, calibrate, serve}) add_common(cmd, opts, out, seeds, denoiser);
  serve->add_option("--requests", requests, "Number of request/response cycles");
  serve->add_option("--expect", expect, "any, echo, zero or analytic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (!out.empty()) opts.out = out;
  if (seeds != -1) opts.seeds = seeds;
  if (!denoiser.empty()) opts.denoiser = denoiser;

  if (*generate) return spotdiff::cmd_generate(opts, std::cerr);
  if (*compare) return spotdiff::cmd_compare(opts, std::cerr);
  if (*calibrate) return spotdiff::cmd_calibrate(opts, std::cerr);
  try {
    const auto mode = spotdiff::parse_expectation(expect);
    return spotdiff::cmd_serve_check(opts, requests, mode, std::cerr);
  } catch (const spotdiff::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
