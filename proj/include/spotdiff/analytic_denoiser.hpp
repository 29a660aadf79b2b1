#pragma once

// Exact Bayes epsilon-predictor for a stationary Gaussian prior on the
// panorama. Along the width the prior is a wrapped squared-exponential
// process; rows and channels are independent. The mean profile is indexed by
// global column, but a prediction only ever sees the window's own values, so
// disjoint windows disagree at their borders exactly like a tiled network.

#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include <Eigen/Dense>

#include "spotdiff/denoiser.hpp"
#include "spotdiff/schedule.hpp"

namespace spotdiff {

struct GaussianPrior {
  Eigen::VectorXd mean_profile;      // one entry per panorama column
  double marginal_std = 1.0;         // sigma0
  double correlation_length = 8.0;   // ell in columns; 0 means independent pixels

  static constexpr double kJitter = 1e-8;

  /// mean(x) = amplitude * sin(2 pi periods x / W').
  static GaussianPrior sinusoid(int panorama_width, double amplitude = 0.5, int periods = 2,
                                double marginal_std = 1.0, double correlation_length = 8.0);

  int panorama_width() const { return static_cast<int>(mean_profile.size()); }

  /// Covariance between columns `d` apart on the cyclic panorama: the
  /// squared-exponential kernel summed over all periodic images, so the
  /// matrix is positive semi-definite for every window width.
  double covariance(int d) const;

  /// Window-restricted covariance plus jitter on the diagonal. Depends only
  /// on the width because the prior is stationary.
  Eigen::MatrixXd window_covariance(int width) const;

  /// Mean profile for `width` columns starting at `offset`, wrapping.
  Eigen::VectorXd window_mean(int offset, int width) const;

  /// Draws one panorama from the prior.
  PanoramaLatent sample(int height, int channels, std::uint64_t seed) const;

  std::string descriptor() const;
};

/// Posterior-mean operator for one timestep:
///   gain = a Sigma (a^2 Sigma + b^2 I)^{-1},  a = sqrt(abar), b = sqrt(1 - abar).
/// Then E[x0 | x_t] = mu + gain (x_t - a mu) per row and channel.
Eigen::MatrixXd posterior_gain(const Eigen::MatrixXd& window_cov, double alpha_bar);

/// E[eps | x_t] for one window, computed from scratch.
WindowLatent analytic_predict_eps(const GaussianPrior& prior, const WindowLatent& window,
                                  int window_offset, int t, const NoiseSchedule& schedule);

/// Same math as analytic_predict_eps with the gain cached per (t, width).
class AnalyticDenoiser final : public Denoiser {
 public:
  AnalyticDenoiser(GaussianPrior prior, NoiseSchedule schedule);

  WindowLatent predict_eps(const WindowLatent& window, const WindowContext& ctx) override;
  std::string descriptor() const override;

  const GaussianPrior& prior() const { return prior_; }
  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  std::shared_ptr<const Eigen::MatrixXd> gain(int t, int width);

  GaussianPrior prior_;
  NoiseSchedule schedule_;
  std::mutex mutex_;
  std::map<std::pair<int, int>, std::shared_ptr<const Eigen::MatrixXd>> gains_;
};

}  // namespace spotdiff
