#include <doctest.h>

#include <cmath>
#include <numbers>
#include <thread>

#include "analytic_oracle.hpp"
#include "spotdiff/analytic_denoiser.hpp"
#include "test_support.hpp"

using namespace spotdiff;
using namespace spotdiff::test;

namespace {

WindowContext ctx_at(int t, int offset, int pw) {
  WindowContext ctx;
  ctx.timestep = t;
  ctx.offset = offset;
  ctx.panorama_width = pw;
  return ctx;
}

}  // namespace

TEST_CASE("sinusoid prior mean profile") {
  const auto p = GaussianPrior::sinusoid(256);
  CHECK(p.panorama_width() == 256);
  CHECK(p.mean_profile[0] == doctest::Approx(0.0));
  CHECK(p.mean_profile[32] == doctest::Approx(0.5));
  CHECK(p.mean_profile[96] == doctest::Approx(-0.5));
  CHECK_THROWS_AS(GaussianPrior::sinusoid(256, 0.5, 2, 0.0), InvalidArgument);
}

TEST_CASE("covariance follows the wrapped kernel") {
  const auto p = GaussianPrior::sinusoid(64, 0.5, 2, 1.3, 4.0);
  for (int d : {0, 1, 5, 31, 32, 63}) {
    CHECK(p.covariance(d) == doctest::Approx(wrapped_kernel(d, 64, 1.3, 4.0)).epsilon(1e-12));
  }
  CHECK(p.covariance(3) == doctest::Approx(p.covariance(61)));
  const auto cov = p.window_covariance(64);
  CHECK(cov.isApprox(cov.transpose()));
  CHECK(Eigen::LLT<Eigen::MatrixXd>(cov).info() == Eigen::Success);
}

TEST_CASE("independent pixels reduce to the scalar conjugate posterior") {
  const double sigma = 1.7;
  const auto prior = GaussianPrior::sinusoid(32, 0.5, 2, sigma, 0.0);
  const auto schedule = NoiseSchedule::linear(50);
  const auto x = random_latent(16, 3, 2, 3);
  for (int t : {0, 7, 25, 49}) {
    const double ab = schedule.alpha_bar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1 - ab);
    const auto eps = analytic_predict_eps(prior, x, 8, t, schedule);
    for (int y = 0; y < 3; ++y)
      for (int i = 0; i < 16; ++i)
        for (int c = 0; c < 2; ++c) {
          const double mu = prior.mean_profile[8 + i];
          const double s2 = sigma * sigma;
          const double x0 = (s2 * a * x(i, y, c) + b * b * mu) / (a * a * s2 + b * b);
          const double want = (x(i, y, c) - a * x0) / b;
          CHECK(std::abs(eps(i, y, c) - want) <= 1e-8 * std::max(1.0, std::abs(want)));
        }
  }
}

TEST_CASE("the prior mean is a fixed point") {
  const auto prior = GaussianPrior::sinusoid(128);
  const auto schedule = NoiseSchedule::linear(50);
  for (int t : {0, 10, 49}) {
    const double a = std::sqrt(schedule.alpha_bar(t));
    WindowLatent x(64, 2, 3);
    for (int y = 0; y < 2; ++y)
      for (int i = 0; i < 64; ++i)
        for (int c = 0; c < 3; ++c) x(i, y, c) = a * prior.mean_profile[(40 + i) % 128];
    const auto eps = analytic_predict_eps(prior, x, 40, t, schedule);
    CHECK(eps.values().abs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("matches the dense oracle on an 8-wide window with ell = 4") {
  const auto prior = GaussianPrior::sinusoid(64, 0.5, 2, 1.0, 4.0);
  const auto schedule = NoiseSchedule::linear(50);
  const auto cov = oracle_cov(8, 64, 1.0, 4.0);
  for (int t : {0, 12, 30, 49}) {
    const auto x = random_latent(8, 2, 2, 100 + t);
    const auto got = analytic_predict_eps(prior, x, 20, t, schedule);
    const auto want = oracle_eps(x, prior.window_mean(20, 8), cov, schedule.alpha_bar(t));
    CHECK(max_rel_error(got, want) < 1e-8);
  }
}

TEST_CASE("predictions only see the window and its mean slice") {
  const auto prior = GaussianPrior::sinusoid(256);
  const auto schedule = NoiseSchedule::linear(50);
  const auto x = random_latent(64, 2, 1, 5);
  const auto at0 = analytic_predict_eps(prior, x, 0, 20, schedule);
  const auto at256 = analytic_predict_eps(prior, x, 256, 20, schedule);
  const auto at64 = analytic_predict_eps(prior, x, 64, 20, schedule);
  CHECK(at0 == at256);
  CHECK_FALSE(at0 == at64);
}

TEST_CASE("cached predictor is bitwise equal to the uncached one") {
  const auto prior = GaussianPrior::sinusoid(256);
  const auto schedule = NoiseSchedule::linear(50);
  AnalyticDenoiser d(prior, schedule);
  for (int t : {49, 3, 49}) {
    for (int offset : {0, 13, 200}) {
      const auto x = random_latent(64, 4, 4, 1000 + offset + t);
      CHECK(d.predict_eps(x, ctx_at(t, offset, 256)) == analytic_predict_eps(prior, x, offset, t, schedule));
    }
  }
  CHECK(d.descriptor().rfind("mrf(", 0) == 0);
}

TEST_CASE("concurrent calls agree with sequential ones") {
  const auto prior = GaussianPrior::sinusoid(256);
  const auto schedule = NoiseSchedule::linear(50);
  AnalyticDenoiser d(prior, schedule);
  std::vector<WindowLatent> inputs, seq(8), par(8);
  for (int i = 0; i < 8; ++i) inputs.push_back(random_latent(64, 4, 4, 50 + i));
  for (int i = 0; i < 8; ++i) seq[i] = analytic_predict_eps(prior, inputs[i], 16 * i, 10 + i, schedule);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { par[i] = d.predict_eps(inputs[i], ctx_at(10 + i, 16 * i, 256)); });
  }
  for (auto& th : threads) th.join();
  for (int i = 0; i < 8; ++i) CHECK(par[i] == seq[i]);
}

TEST_CASE("posterior gain rejects indefinite covariance") {
  Eigen::MatrixXd bad = -2.0 * Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(posterior_gain(bad, 0.5), NumericalFailure);
}

TEST_CASE("prior samples have the prior covariance") {
  const auto prior = GaussianPrior::sinusoid(32, 0.0, 0, 1.0, 3.0);
  const auto p = prior.sample(2000, 1, 77);
  for (int d : {0, 1, 3, 8}) {
    double acc = 0.0;
    for (int y = 0; y < 2000; ++y)
      for (int x = 0; x < 32; ++x) acc += p(x, y, 0) * p((x + d) % 32, y, 0);
    const double est = acc / (2000.0 * 32);
    CHECK(std::abs(est - prior.covariance(d)) < 0.06);
  }
}
