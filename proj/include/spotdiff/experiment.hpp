#pragma once

// Experiment runner behind the command-line tool: config loading, denoiser
// selection, file emission, and the four subcommands.
//
// Config is INI-style (`[section]` headers, `key = value` lines, `#` or `;`
// comments). Every key can be overridden with `section.key=value`. Unknown
// sections or keys are rejected.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spotdiff/analytic_denoiser.hpp"
#include "spotdiff/compare.hpp"
#include "spotdiff/denoiser.hpp"
#include "spotdiff/samplers.hpp"
#include "spotdiff/schedule.hpp"

namespace spotdiff {

/// Raised for anything wrong with the configuration; maps to exit status 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config: " + what) {}
};

struct CompareEntry {
  Strategy strategy = Strategy::spotdiffusion;
  int stride = 0;  // multidiffusion only
};

struct ExperimentConfig {
  SamplerConfig sampler;
  ScheduleKind schedule = ScheduleKind::linear;
  std::string shift_file;

  struct Prior {
    double sigma = 1.0;
    double length_scale = 8.0;
    double mean_amplitude = 0.5;
    int mean_periods = 2;
  } prior;

  struct DenoiserChoice {
    std::string kind = "mrf";  // mrf | replay | external
    std::string fixture;       // replay input
    std::string command;       // external
    std::string record;        // optional fixture output
    int timeout_ms = 30000;
  } denoiser;

  struct Output {
    std::string dir = "out";
    std::string name;  // default derived from strategy, seed and digest
    bool pgm = true;
    bool raw = true;
    bool csv = true;
    int repeat = 1;
  } output;

  std::vector<CompareEntry> compare = {{Strategy::spotdiffusion, 0},
                                       {Strategy::multidiffusion, 16},
                                       {Strategy::multidiffusion, 64}};

  struct Calibrate {
    int seeds = 100;
    std::uint64_t master_seed = 0;
  } calibrate;

  /// Sorted `section.key = value` lines covering every setting.
  std::string canonical() const;
  /// 16 hex digits of FNV-1a over canonical(), output locations left out.
  std::string digest() const;

  GaussianPrior make_prior(int panorama_width) const;
};

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Applies one `section.key=value` assignment.
void apply_setting(ExperimentConfig& cfg, const std::string& assignment);

/// Parses `mrf`, `replay`, or `external:<cmd>` into the denoiser section.
void apply_denoiser_flag(ExperimentConfig& cfg, const std::string& flag);

/// Builds the configured predictor. `window_width` sizes the external HELLO.
std::unique_ptr<Denoiser> make_denoiser(const ExperimentConfig& cfg, const NoiseSchedule& schedule);

/// P5 greyscale, min-max normalized; channel pages stacked vertically.
void write_pgm(const std::string& path, const PanoramaLatent& p, const std::string& comment);
/// Panels side by side with a 4-pixel black gutter, each normalized alone.
void write_montage(const std::string& path, const std::vector<PanoramaLatent>& panels,
                   const std::string& comment);

/// Header of metrics.csv.
std::string metrics_csv_header();
std::string metrics_csv_row(const RunRecord& record, const RunMetrics& metrics,
                            const std::string& config_digest);

struct CommandOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> out;
  std::optional<int> seeds;
  std::optional<std::string> denoiser;
};

/// Exit status: 0 success, 1 runtime failure, 2 configuration failure.
int cmd_generate(const CommandOptions& opts, std::ostream& log);
int cmd_compare(const CommandOptions& opts, std::ostream& log);
int cmd_calibrate(const CommandOptions& opts, std::ostream& log);

enum class ServeExpectation { any, echo, zero, analytic };
ServeExpectation parse_expectation(const std::string& name);

/// Handshake plus `requests` request/response cycles against the configured
/// external denoiser, checking each response against `expect`.
int cmd_serve_check(const CommandOptions& opts, int requests, ServeExpectation expect,
                    std::ostream& log);

}  // namespace spotdiff
