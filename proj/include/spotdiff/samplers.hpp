#pragma once

// End-to-end reverse diffusion over a panorama with three strategies:
//
//   plain           one window covering the whole panorama (W' == W)
//   multidiffusion  static overlapping windows; epsilon predictions are
//                   averaged per pixel, then one reverse step is taken
//   spotdiffusion   per step: draw s, translate by s, step n = W'/W disjoint
//                   windows independently, concatenate, translate by -s
//
// Random draw order for a run seeded with `seed` (one mt19937_64 stream):
//   1. J_T: W'*H*C standard normals in latent layout order.
//   2. For each step k = 0 .. T-1 (timestep t = T-1-k):
//        a. one integer in [0, W-1] for the shift (drawn by every strategy);
//        b. if the rule is stochastic and t > 0, W'*H*C standard normals for
//           the whole panorama, in source coordinates.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spotdiff/denoiser.hpp"
#include "spotdiff/planner.hpp"
#include "spotdiff/schedule.hpp"

namespace spotdiff {

enum class Strategy { plain, multidiffusion, spotdiffusion };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

struct SamplerConfig {
  Strategy strategy = Strategy::spotdiffusion;
  int panorama_width = 256;
  int window_width = 64;
  int stride = 16;  // multidiffusion only
  int height = 16;
  int channels = 4;
  int steps = 50;
  StepRule rule = StepRule::ddpm();
  std::uint64_t seed = 0;
  ShiftSampler::Law shift_law = ShiftSampler::Law::uniform_integer;  // spotdiffusion only
  std::vector<int> fixed_shifts;
  ConditionId condition;
  /// Window predictions within a step may run on this many threads. The
  /// combine stage is always a sequential reduction in window order.
  int workers = 1;

  /// Throws InvalidConfig / InvalidGeometry when the strategy's geometry
  /// rules are not met.
  void validate() const;
  /// Effective stride: W for plain and spotdiffusion.
  int effective_stride() const;
  /// Windows per step.
  int views() const;
};

struct RunRecord {
  SamplerConfig config;
  PanoramaLatent initial;  // J_T
  PanoramaLatent final;    // J_0
  std::vector<int> calls_per_step;
  std::vector<int> shifts;  // one per step, as drawn (0 unless spotdiffusion)
  std::vector<double> wall_ms_per_step;

  long long total_calls() const;
  double total_wall_ms() const;
};

/// Observation points for tests and extensions. All default to no-ops.
struct SamplerHooks {
  /// Runs on every window before it is handed to the predictor. This is where
  /// a gradient-based synchronization step would attach; nothing ships here.
  std::function<void(WindowLatent&, const WindowContext&)> pre_window;
  /// Fused epsilon over the whole panorama for one step (multidiffusion and
  /// plain), given the state it was predicted from.
  std::function<void(int t, const PanoramaLatent& state, const PanoramaLatent& eps)> on_fused_eps;
  /// State after each step.
  std::function<void(int t, const PanoramaLatent& next)> on_step;
};

RunRecord run_plain(const SamplerConfig& cfg, Denoiser& denoiser, const NoiseSchedule& schedule,
                    const SamplerHooks& hooks = {});
RunRecord run_multidiffusion(const SamplerConfig& cfg, Denoiser& denoiser,
                             const NoiseSchedule& schedule, const SamplerHooks& hooks = {});
RunRecord run_spotdiffusion(const SamplerConfig& cfg, Denoiser& denoiser,
                            const NoiseSchedule& schedule, const SamplerHooks& hooks = {});

/// Dispatches on cfg.strategy.
RunRecord run(const SamplerConfig& cfg, Denoiser& denoiser, const NoiseSchedule& schedule,
              const SamplerHooks& hooks = {});

/// Standard normal panorama drawn from `rng` in layout order.
PanoramaLatent gaussian_latent(int width, int height, int channels, RunRng& rng);

}  // namespace spotdiff
