#pragma once

// Noise schedules and the single-step reverse update. Together with an
// epsilon predictor, reverse_step realizes one denoising transition.
//
// Timestep convention: schedule tables are indexed t = 0 .. T-1. A state "at
// t" has signal level alpha_bar(t). A reverse step at t produces the state at
// t-1, where the state at -1 is the clean sample (alpha_bar(-1) == 1). A full
// chain therefore runs t = T-1 down to 0 and makes T predictor calls.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spotdiff/grid.hpp"

namespace spotdiff {

enum class ScheduleKind : std::uint8_t { linear = 0, cosine = 1 };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);

class NoiseSchedule {
 public:
  /// Linear betas from 0.1 / T to 20 / T (the usual 1e-4 .. 0.02 range over
  /// 1000 training steps, rescaled to T sampling steps). The upper end is
  /// capped at 0.999 so schedules shorter than 20 steps stay valid.
  static NoiseSchedule linear(int steps);
  /// Cosine alpha_bar with offset 0.008, betas clipped to 0.999.
  static NoiseSchedule cosine(int steps);
  static NoiseSchedule make(ScheduleKind kind, int steps);
  /// Arbitrary betas in (0, 1); alpha_bar must come out strictly decreasing.
  static NoiseSchedule from_betas(std::vector<double> betas, ScheduleKind kind = ScheduleKind::linear);

  int steps() const { return static_cast<int>(beta_.size()); }
  ScheduleKind kind() const { return kind_; }

  double beta(int t) const { return beta_.at(t); }
  double alpha(int t) const { return alpha_.at(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(t); }
  /// alpha_bar(t - 1), with 1 for t == 0.
  double alpha_bar_prev(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  NoiseSchedule(std::vector<double> betas, ScheduleKind kind);

  ScheduleKind kind_ = ScheduleKind::linear;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

struct StepRule {
  enum class Kind { ddpm, ddim };

  Kind kind = Kind::ddpm;
  double eta = 0.0;  // ddim only; 0 is deterministic

  static StepRule ddpm() { return {Kind::ddpm, 1.0}; }
  static StepRule ddim(double eta) { return {Kind::ddim, eta}; }
  static StepRule ddim_deterministic() { return {Kind::ddim, 0.0}; }

  /// True when the step draws fresh Gaussian noise for t > 0.
  bool stochastic() const { return kind == Kind::ddpm || eta > 0.0; }
};

std::string to_string(StepRule rule);

/// sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * noise.
WindowLatent forward_sample(const WindowLatent& x0, const WindowLatent& noise, double alpha_bar);
WindowLatent forward_sample(const NoiseSchedule& schedule, const WindowLatent& x0, int t,
                            const WindowLatent& noise);

/// Clean-sample estimate implied by an epsilon prediction at t.
WindowLatent predicted_x0(const NoiseSchedule& schedule, const WindowLatent& xt,
                          const WindowLatent& eps_hat, int t);

/// One reverse transition x_t -> x_{t-1}. `noise` is only read when the rule
/// is stochastic and t > 0; it may be null otherwise.
WindowLatent reverse_step(const NoiseSchedule& schedule, const WindowLatent& xt,
                          const WindowLatent& eps_hat, int t, const StepRule& rule,
                          const WindowLatent* noise = nullptr);

}  // namespace spotdiff
