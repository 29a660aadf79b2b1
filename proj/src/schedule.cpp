#include "spotdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spotdiff {

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::cosine ? "cosine" : "linear";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw InvalidConfig("unknown schedule kind '" + name + "' (expected linear or cosine)");
}

std::string to_string(StepRule rule) {
  if (rule.kind == StepRule::Kind::ddpm) return "ddpm";
  return "ddim(eta=" + std::to_string(rule.eta) + ")";
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas, ScheduleKind kind)
    : kind_(kind), beta_(std::move(betas)) {
  if (beta_.empty()) throw InvalidArgument("noise schedule needs at least one step");
  alpha_.resize(beta_.size());
  alpha_bar_.resize(beta_.size());
  double running = 1.0;
  for (std::size_t t = 0; t < beta_.size(); ++t) {
    if (!(beta_[t] > 0.0 && beta_[t] < 1.0)) {
      throw InvalidArgument("beta[" + std::to_string(t) + "] = " + std::to_string(beta_[t]) +
                            " outside (0, 1)");
    }
    alpha_[t] = 1.0 - beta_[t];
    running *= alpha_[t];
    alpha_bar_[t] = running;
    if (t > 0 && !(alpha_bar_[t] < alpha_bar_[t - 1])) {
      throw InvalidArgument("alpha_bar not strictly decreasing at t = " + std::to_string(t));
    }
  }
}

NoiseSchedule NoiseSchedule::linear(int steps) {
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  const double lo = 0.1 / steps;
  const double hi = std::min(20.0 / steps, 0.999);
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    betas[t] = steps == 1 ? lo : lo + (hi - lo) * t / (steps - 1);
  }
  return NoiseSchedule(std::move(betas), ScheduleKind::linear);
}

NoiseSchedule NoiseSchedule::cosine(int steps) {
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  constexpr double offset = 0.008;
  auto f = [&](double u) {
    const double c = std::cos((u + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const double prev = f(double(t) / steps);
    const double next = f(double(t + 1) / steps);
    betas[t] = std::min(1.0 - next / prev, 0.999);
  }
  return NoiseSchedule(std::move(betas), ScheduleKind::cosine);
}

NoiseSchedule NoiseSchedule::make(ScheduleKind kind, int steps) {
  return kind == ScheduleKind::cosine ? cosine(steps) : linear(steps);
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, ScheduleKind kind) {
  return NoiseSchedule(std::move(betas), kind);
}

namespace {

void require_same_shape(const WindowLatent& a, const WindowLatent& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

void require_timestep(const NoiseSchedule& schedule, int t) {
  if (t < 0 || t >= schedule.steps()) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(schedule.steps()) + ")");
  }
}

WindowLatent finite_or_throw(WindowLatent x, const char* what, int t) {
  if (!x.all_finite()) {
    throw NumericalFailure(std::string(what) + " produced non-finite values at t = " + std::to_string(t));
  }
  return x;
}

}  // namespace

WindowLatent forward_sample(const WindowLatent& x0, const WindowLatent& noise, double alpha_bar) {
  require_same_shape(x0, noise, "forward_sample");
  WindowLatent out(x0.width(), x0.height(), x0.channels());
  out.values() = std::sqrt(alpha_bar) * x0.values() + std::sqrt(1.0 - alpha_bar) * noise.values();
  return out;
}

WindowLatent forward_sample(const NoiseSchedule& schedule, const WindowLatent& x0, int t,
                            const WindowLatent& noise) {
  require_timestep(schedule, t);
  auto out = forward_sample(x0, noise, schedule.alpha_bar(t));
  out.timestep_tag = t;
  return out;
}

WindowLatent predicted_x0(const NoiseSchedule& schedule, const WindowLatent& xt,
                          const WindowLatent& eps_hat, int t) {
  require_same_shape(xt, eps_hat, "predicted_x0");
  require_timestep(schedule, t);
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar(t));
  WindowLatent x0(xt.width(), xt.height(), xt.channels());
  x0.values() = (xt.values() - b * eps_hat.values()) / a;
  return x0;
}

WindowLatent reverse_step(const NoiseSchedule& schedule, const WindowLatent& xt,
                          const WindowLatent& eps_hat, int t, const StepRule& rule,
                          const WindowLatent* noise) {
  const WindowLatent x0 = predicted_x0(schedule, xt, eps_hat, t);
  const bool inject = rule.stochastic() && t > 0;
  if (inject) {
    if (noise == nullptr) throw InvalidArgument("stochastic reverse step needs a noise sample");
    require_same_shape(xt, *noise, "reverse_step noise");
  }

  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar_prev(t);
  WindowLatent out(xt.width(), xt.height(), xt.channels());
  out.timestep_tag = t - 1;

  if (rule.kind == StepRule::Kind::ddpm) {
    // Gaussian posterior q(x_{t-1} | x_t, x0_hat).
    const double beta = schedule.beta(t);
    const double c_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double c_xt = std::sqrt(schedule.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
    out.values() = c_x0 * x0.values() + c_xt * xt.values();
    if (inject) {
      const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
      out.values() += sigma * noise->values();
    }
  } else {
    const double sigma =
        rule.eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double c_eps = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    out.values() = std::sqrt(ab_prev) * x0.values() + c_eps * eps_hat.values();
    if (inject && sigma > 0.0) out.values() += sigma * noise->values();
  }
  return finite_or_throw(std::move(out), "reverse_step", t);
}

}  // namespace spotdiff
