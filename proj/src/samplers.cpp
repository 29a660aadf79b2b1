#include "spotdiff/samplers.hpp"

#include <chrono>
#include <future>
#include <numeric>

namespace spotdiff {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::plain: return "plain";
    case Strategy::multidiffusion: return "multidiffusion";
    case Strategy::spotdiffusion: return "spotdiffusion";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "plain") return Strategy::plain;
  if (name == "multidiffusion") return Strategy::multidiffusion;
  if (name == "spotdiffusion") return Strategy::spotdiffusion;
  throw InvalidConfig("unknown strategy '" + name +
                      "' (expected plain, multidiffusion or spotdiffusion)");
}

void SamplerConfig::validate() const {
  if (height < 1 || channels < 1) throw InvalidConfig("height and channels must be >= 1");
  if (steps < 1) throw InvalidConfig("steps must be >= 1");
  if (workers < 1) throw InvalidConfig("workers must be >= 1");
  if (rule.eta < 0.0 || rule.eta > 1.0) throw InvalidConfig("eta must lie in [0, 1]");
  switch (strategy) {
    case Strategy::plain:
      if (panorama_width != window_width || panorama_width < 1) {
        throw InvalidConfig("plain sampling requires panorama width == window width (got " +
                            std::to_string(panorama_width) + " and " +
                            std::to_string(window_width) + ")");
      }
      break;
    case Strategy::multidiffusion:
      plan_static(panorama_width, window_width, stride);
      break;
    case Strategy::spotdiffusion:
      plan_shifted(panorama_width, window_width, 0);
      break;
  }
}

int SamplerConfig::effective_stride() const {
  return strategy == Strategy::multidiffusion ? stride : window_width;
}

int SamplerConfig::views() const {
  switch (strategy) {
    case Strategy::plain: return 1;
    case Strategy::multidiffusion: return plan_static(panorama_width, window_width, stride).count();
    case Strategy::spotdiffusion: return panorama_width / window_width;
  }
  return 0;
}

long long RunRecord::total_calls() const {
  return std::accumulate(calls_per_step.begin(), calls_per_step.end(), 0LL);
}

double RunRecord::total_wall_ms() const {
  return std::accumulate(wall_ms_per_step.begin(), wall_ms_per_step.end(), 0.0);
}

PanoramaLatent gaussian_latent(int width, int height, int channels, RunRng& rng) {
  PanoramaLatent out(width, height, channels);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.values()[i] = normal(rng);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct StepInputs {
  int t = 0;
  int shift = 0;
  std::optional<PanoramaLatent> noise;
};

/// Shared driver: seeds the stream, draws J_T, then for each step draws the
/// shift and the step noise in the documented order and hands them to
/// `advance`, which returns the next state and the number of predictor calls.
template <typename Advance>
RunRecord drive(const SamplerConfig& cfg, const NoiseSchedule& schedule, Strategy expected,
                const ShiftSampler& shifts, Advance&& advance) {
  if (cfg.strategy != expected) {
    throw InvalidConfig("config strategy " + to_string(cfg.strategy) + " passed to " +
                        to_string(expected) + " sampler");
  }
  cfg.validate();
  if (cfg.steps != schedule.steps()) {
    throw InvalidConfig("config has " + std::to_string(cfg.steps) + " steps but schedule has " +
                        std::to_string(schedule.steps()));
  }

  RunRng rng(cfg.seed);
  RunRecord record;
  record.config = cfg;
  PanoramaLatent state = gaussian_latent(cfg.panorama_width, cfg.height, cfg.channels, rng);
  state.timestep_tag = cfg.steps - 1;
  record.initial = state;

  for (int k = 0; k < cfg.steps; ++k) {
    const auto start = Clock::now();
    StepInputs in;
    in.t = cfg.steps - 1 - k;
    in.shift = shifts.sample(rng, k);
    if (cfg.rule.stochastic() && in.t > 0) {
      in.noise = gaussian_latent(cfg.panorama_width, cfg.height, cfg.channels, rng);
    }
    int calls = 0;
    state = advance(state, in, calls);
    state.timestep_tag = in.t - 1;
    record.calls_per_step.push_back(calls);
    record.shifts.push_back(in.shift);
    record.wall_ms_per_step.push_back(
        std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  record.final = std::move(state);
  return record;
}

/// Predicts every window, optionally on several threads. Results are
/// returned in window order so downstream reductions stay deterministic.
std::vector<WindowLatent> predict_windows(Denoiser& denoiser, std::vector<WindowLatent>& windows,
                                          const std::vector<WindowContext>& contexts,
                                          const SamplerHooks& hooks, int workers) {
  const std::size_t n = windows.size();
  std::vector<WindowLatent> eps(n);
  auto one = [&](std::size_t i) {
    if (hooks.pre_window) hooks.pre_window(windows[i], contexts[i]);
    eps[i] = denoiser.predict_eps(windows[i], contexts[i]);
    if (!eps[i].same_shape(windows[i])) {
      throw ShapeMismatch("predictor returned " + eps[i].shape_string() + " for window " +
                          windows[i].shape_string());
    }
  };
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) one(i);
    return eps;
  }
  std::vector<std::future<void>> pending;
  const std::size_t lanes = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    pending.push_back(std::async(std::launch::async, [&, lane] {
      for (std::size_t i = lane; i < n; i += lanes) one(i);
    }));
  }
  for (auto& f : pending) f.get();
  return eps;
}

WindowContext make_context(const SamplerConfig& cfg, int t, int offset, int index) {
  WindowContext ctx;
  ctx.timestep = t;
  ctx.offset = offset;
  ctx.window_index = index;
  ctx.panorama_width = cfg.panorama_width;
  ctx.condition = cfg.condition;
  return ctx;
}

const PanoramaLatent* noise_ptr(const StepInputs& in) {
  return in.noise ? &*in.noise : nullptr;
}

}  // namespace

RunRecord run_plain(const SamplerConfig& cfg, Denoiser& denoiser, const NoiseSchedule& schedule,
                    const SamplerHooks& hooks) {
  const auto shifts = ShiftSampler::forced_zero(cfg.window_width);
  return drive(cfg, schedule, Strategy::plain, shifts,
               [&](const PanoramaLatent& state, const StepInputs& in, int& calls) {
                 std::vector<WindowLatent> windows{state};
                 const std::vector<WindowContext> ctx{make_context(cfg, in.t, 0, 0)};
                 auto eps = predict_windows(denoiser, windows, ctx, hooks, 1);
                 calls = 1;
                 if (hooks.on_fused_eps) hooks.on_fused_eps(in.t, state, eps[0]);
                 auto next = reverse_step(schedule, windows[0], eps[0], in.t, cfg.rule, noise_ptr(in));
                 if (hooks.on_step) hooks.on_step(in.t, next);
                 return next;
               });
}

RunRecord run_multidiffusion(const SamplerConfig& cfg, Denoiser& denoiser,
                             const NoiseSchedule& schedule, const SamplerHooks& hooks) {
  const auto shifts = ShiftSampler::forced_zero(cfg.window_width);
  return drive(
      cfg, schedule, Strategy::multidiffusion, shifts,
      [&](const PanoramaLatent& state, const StepInputs& in, int& calls) {
        const WindowPlan plan = plan_static(cfg.panorama_width, cfg.window_width, cfg.stride);
        std::vector<WindowLatent> windows;
        std::vector<WindowContext> ctx;
        for (int i = 0; i < plan.count(); ++i) {
          windows.push_back(crop_window(state, plan.offsets[i], plan.window_width));
          ctx.push_back(make_context(cfg, in.t, plan.offsets[i], i));
        }
        const auto eps = predict_windows(denoiser, windows, ctx, hooks, cfg.workers);
        calls = plan.count();

        // Scatter-add in ascending offset order, then divide by coverage.
        PanoramaLatent sum(state.width(), state.height(), state.channels());
        std::vector<int> coverage(static_cast<std::size_t>(state.width()), 0);
        for (int i = 0; i < plan.count(); ++i) {
          const int o = plan.offsets[i];
          for (int x = 0; x < plan.window_width; ++x) ++coverage[o + x];
          for (int y = 0; y < state.height(); ++y) {
            for (int x = 0; x < plan.window_width; ++x) {
              for (int c = 0; c < state.channels(); ++c) sum(o + x, y, c) += eps[i](x, y, c);
            }
          }
        }
        PanoramaLatent fused(state.width(), state.height(), state.channels());
        for (int y = 0; y < state.height(); ++y) {
          for (int x = 0; x < state.width(); ++x) {
            for (int c = 0; c < state.channels(); ++c) fused(x, y, c) = sum(x, y, c) / coverage[x];
          }
        }
        if (hooks.on_fused_eps) hooks.on_fused_eps(in.t, state, fused);
        auto next = reverse_step(schedule, state, fused, in.t, cfg.rule, noise_ptr(in));
        if (hooks.on_step) hooks.on_step(in.t, next);
        return next;
      });
}

namespace {

ShiftSampler spot_shifts(const SamplerConfig& cfg) {
  switch (cfg.shift_law) {
    case ShiftSampler::Law::uniform_integer: return ShiftSampler::uniform(cfg.window_width);
    case ShiftSampler::Law::forced_zero: return ShiftSampler::forced_zero(cfg.window_width);
    case ShiftSampler::Law::fixed_sequence:
      return ShiftSampler::fixed(cfg.window_width, cfg.fixed_shifts);
  }
  return ShiftSampler::uniform(cfg.window_width);
}

}  // namespace

RunRecord run_spotdiffusion(const SamplerConfig& cfg, Denoiser& denoiser,
                            const NoiseSchedule& schedule, const SamplerHooks& hooks) {
  return drive(
      cfg, schedule, Strategy::spotdiffusion, spot_shifts(cfg),
      [&](const PanoramaLatent& state, const StepInputs& in, int& calls) {
        const WindowPlan plan = plan_shifted(cfg.panorama_width, cfg.window_width, in.shift);
        const PanoramaLatent shifted = translate(state, in.shift);
        std::optional<PanoramaLatent> shifted_noise;
        if (in.noise) shifted_noise = translate(*in.noise, in.shift);

        std::vector<WindowLatent> windows;
        std::vector<WindowContext> ctx;
        for (int i = 0; i < plan.count(); ++i) {
          windows.push_back(crop_window(shifted, plan.offsets[i], plan.window_width));
          ctx.push_back(make_context(cfg, in.t, plan.source_offset(i), i));
        }
        const auto eps = predict_windows(denoiser, windows, ctx, hooks, cfg.workers);
        calls = plan.count();

        std::vector<WindowLatent> stepped;
        stepped.reserve(windows.size());
        for (int i = 0; i < plan.count(); ++i) {
          std::optional<WindowLatent> noise;
          if (shifted_noise) noise = crop_window(*shifted_noise, plan.offsets[i], plan.window_width);
          stepped.push_back(reverse_step(schedule, windows[i], eps[i], in.t, cfg.rule,
                                         noise ? &*noise : nullptr));
        }
        auto next = translate(concat_windows(stepped), -static_cast<long long>(in.shift));
        if (hooks.on_step) hooks.on_step(in.t, next);
        return next;
      });
}

RunRecord run(const SamplerConfig& cfg, Denoiser& denoiser, const NoiseSchedule& schedule,
              const SamplerHooks& hooks) {
  switch (cfg.strategy) {
    case Strategy::plain: return run_plain(cfg, denoiser, schedule, hooks);
    case Strategy::multidiffusion: return run_multidiffusion(cfg, denoiser, schedule, hooks);
    case Strategy::spotdiffusion: return run_spotdiffusion(cfg, denoiser, schedule, hooks);
  }
  throw InvalidConfig("unknown strategy");
}

}  // namespace spotdiff
