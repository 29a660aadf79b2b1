#include "spotdiff/analytic_denoiser.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "spotdiff/byteio.hpp"

namespace spotdiff {

GaussianPrior GaussianPrior::sinusoid(int panorama_width, double amplitude, int periods,
                                      double marginal_std, double correlation_length) {
  if (panorama_width < 1) throw InvalidArgument("prior needs a positive panorama width");
  if (!(marginal_std > 0.0)) throw InvalidArgument("marginal std must be positive");
  if (!(correlation_length >= 0.0)) throw InvalidArgument("correlation length must be >= 0");
  GaussianPrior prior;
  prior.mean_profile.resize(panorama_width);
  for (int x = 0; x < panorama_width; ++x) {
    prior.mean_profile[x] =
        amplitude * std::sin(2.0 * std::numbers::pi * periods * x / panorama_width);
  }
  prior.marginal_std = marginal_std;
  prior.correlation_length = correlation_length;
  return prior;
}

double GaussianPrior::covariance(int d) const {
  const int period = panorama_width();
  const double var = marginal_std * marginal_std;
  if (correlation_length == 0.0) {
    return wrap_column(d, period) == 0 ? var : 0.0;
  }
  const int images = static_cast<int>(std::ceil(10.0 * correlation_length / period)) + 1;
  const double denom = 2.0 * correlation_length * correlation_length;
  double sum = 0.0;
  for (int m = -images; m <= images; ++m) {
    const double dist = static_cast<double>(d) + static_cast<double>(m) * period;
    sum += std::exp(-dist * dist / denom);
  }
  return var * sum;
}

Eigen::MatrixXd GaussianPrior::window_covariance(int width) const {
  if (width < 1 || width > panorama_width()) {
    throw InvalidWindow("window width " + std::to_string(width) + " outside [1, " +
                        std::to_string(panorama_width()) + "]");
  }
  Eigen::VectorXd row(width);
  for (int d = 0; d < width; ++d) row[d] = covariance(d);
  Eigen::MatrixXd cov(width, width);
  for (int i = 0; i < width; ++i) {
    for (int j = 0; j < width; ++j) cov(i, j) = row[std::abs(i - j)];
  }
  cov.diagonal().array() += kJitter;
  return cov;
}

Eigen::VectorXd GaussianPrior::window_mean(int offset, int width) const {
  Eigen::VectorXd mu(width);
  for (int i = 0; i < width; ++i) {
    mu[i] = mean_profile[wrap_column(static_cast<long long>(offset) + i, panorama_width())];
  }
  return mu;
}

PanoramaLatent GaussianPrior::sample(int height, int channels, std::uint64_t seed) const {
  const int w = panorama_width();
  Eigen::LLT<Eigen::MatrixXd> llt(window_covariance(w));
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure("prior covariance is not positive definite");
  }
  const Eigen::MatrixXd lower = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  PanoramaLatent out(w, height, channels);
  Eigen::VectorXd z(w);
  for (int y = 0; y < height; ++y) {
    for (int c = 0; c < channels; ++c) {
      for (int x = 0; x < w; ++x) z[x] = normal(rng);
      const Eigen::VectorXd col = mean_profile + lower * z;
      for (int x = 0; x < w; ++x) out(x, y, c) = col[x];
    }
  }
  return out;
}

std::string GaussianPrior::descriptor() const {
  byteio::Fnv1a h;
  for (Eigen::Index i = 0; i < mean_profile.size(); ++i) {
    h.update_u64(std::bit_cast<std::uint64_t>(mean_profile[i]));
  }
  std::ostringstream out;
  out << "sigma=" << marginal_std << ",ell=" << correlation_length << ",width="
      << panorama_width() << ",mean=" << std::hex << h.value();
  return out.str();
}

Eigen::MatrixXd posterior_gain(const Eigen::MatrixXd& window_cov, double alpha_bar) {
  const double a = std::sqrt(alpha_bar);
  const double b2 = 1.0 - alpha_bar;
  Eigen::MatrixXd system = (a * a) * window_cov;
  system.diagonal().array() += b2;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure("posterior system not positive definite (alpha_bar = " +
                           std::to_string(alpha_bar) + ")");
  }
  // Sigma and the system matrix commute, so the gain is symmetric-compatible:
  // gain = a Sigma M^{-1} = (M^{-1} a Sigma)^T.
  const Eigen::MatrixXd solved = llt.solve(a * window_cov);
  if (!solved.allFinite()) throw NumericalFailure("posterior solve produced non-finite values");
  return solved.transpose();
}

namespace {

WindowLatent apply_gain(const Eigen::MatrixXd& gain, const Eigen::VectorXd& mu,
                        const WindowLatent& window, double alpha_bar) {
  const int w = window.width();
  const int cols = window.height() * window.channels();
  const int channels = window.channels();
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);

  // Column j of the work matrix is the (row, channel) pair j.
  Eigen::MatrixXd residual(w, cols);
  for (int y = 0; y < window.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        residual(x, y * channels + c) = window(x, y, c) - a * mu[x];
      }
    }
  }
  const Eigen::MatrixXd x0 = (gain * residual).colwise() + mu;

  WindowLatent eps(w, window.height(), channels);
  eps.timestep_tag = window.timestep_tag;
  for (int y = 0; y < window.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        eps(x, y, c) = (window(x, y, c) - a * x0(x, y * channels + c)) / b;
      }
    }
  }
  if (!eps.all_finite()) throw NumericalFailure("analytic prediction is not finite");
  return eps;
}

void check_window(const GaussianPrior& prior, const WindowLatent& window, int t,
                  const NoiseSchedule& schedule) {
  if (window.width() > prior.panorama_width()) {
    throw InvalidWindow("window width " + std::to_string(window.width()) +
                        " exceeds prior width " + std::to_string(prior.panorama_width()));
  }
  if (t < 0 || t >= schedule.steps()) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside schedule");
  }
}

}  // namespace

WindowLatent analytic_predict_eps(const GaussianPrior& prior, const WindowLatent& window,
                                  int window_offset, int t, const NoiseSchedule& schedule) {
  check_window(prior, window, t, schedule);
  const Eigen::MatrixXd gain =
      posterior_gain(prior.window_covariance(window.width()), schedule.alpha_bar(t));
  return apply_gain(gain, prior.window_mean(window_offset, window.width()), window,
                    schedule.alpha_bar(t));
}

AnalyticDenoiser::AnalyticDenoiser(GaussianPrior prior, NoiseSchedule schedule)
    : prior_(std::move(prior)), schedule_(std::move(schedule)) {}

std::shared_ptr<const Eigen::MatrixXd> AnalyticDenoiser::gain(int t, int width) {
  std::lock_guard lock(mutex_);
  auto& slot = gains_[{t, width}];
  if (!slot) {
    slot = std::make_shared<const Eigen::MatrixXd>(
        posterior_gain(prior_.window_covariance(width), schedule_.alpha_bar(t)));
  }
  return slot;
}

WindowLatent AnalyticDenoiser::predict_eps(const WindowLatent& window, const WindowContext& ctx) {
  check_window(prior_, window, ctx.timestep, schedule_);
  const auto g = gain(ctx.timestep, window.width());
  return apply_gain(*g, prior_.window_mean(ctx.offset, window.width()), window,
                    schedule_.alpha_bar(ctx.timestep));
}

std::string AnalyticDenoiser::descriptor() const {
  return "mrf(" + prior_.descriptor() + ",schedule=" + to_string(schedule_.kind()) +
         ",T=" + std::to_string(schedule_.steps()) + ")";
}

}  // namespace spotdiff
