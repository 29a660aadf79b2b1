#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "spotdiff/analytic_denoiser.hpp"
#include "spotdiff/compare.hpp"
#include "spotdiff/metrics.hpp"
#include "test_support.hpp"

using namespace spotdiff;

TEST_CASE("constant panorama has no applicable ratio") {
  const auto p = PanoramaLatent::constant(32, 2, 2, 3.0);
  const std::vector<int> b{8, 16};
  const auto r = seam_energy(p, b);
  CHECK(r.boundary_energy == 0.0);
  CHECK(r.interior_energy == 0.0);
  CHECK_FALSE(r.ratio.has_value());
}

TEST_CASE("single step discontinuity") {
  const double h = 1.5;
  PanoramaLatent p(32, 3, 2);
  for (int y = 0; y < 3; ++y)
    for (int x = 10; x < 32; ++x)
      for (int c = 0; c < 2; ++c) p(x, y, c) = h;
  // The wrap from column 31 back to 0 is the other jump; leave it out.
  const std::vector<int> boundaries{10, 20};
  const std::vector<int> excluded{0};
  const auto r = seam_energy(p, boundaries, excluded);
  CHECK(r.boundary_energy == doctest::Approx(h * h / 2));
  CHECK(r.interior_energy == 0.0);
  CHECK(r.boundaries == boundaries);
}

TEST_CASE("seam boundaries must be a strict non-empty subset") {
  const auto p = spotdiff::test::random_latent(8, 1, 1, 0);
  std::vector<int> none;
  CHECK_THROWS_AS(seam_energy(p, none), InvalidArgument);
  std::vector<int> all{0, 1, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_AS(seam_energy(p, all), InvalidArgument);
  std::vector<int> b{1};
  std::vector<int> rest{0, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_AS(seam_energy(p, b, rest), InvalidArgument);
}

TEST_CASE("smooth fields show no seam at random columns") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  std::uniform_int_distribution<int> column(0, 255);
  for (int draw = 0; draw < 100; ++draw) {
    PanoramaLatent p(256, 16, 4);
    for (int y = 0; y < 16; ++y)
      for (int c = 0; c < 4; ++c) {
        const double ph = phase(rng);
        for (int x = 0; x < 256; ++x) p(x, y, c) = std::sin(2 * std::numbers::pi * 2 * x / 256 + ph);
      }
    std::set<int> cols;
    while (cols.size() < 4) cols.insert(column(rng));
    const std::vector<int> b(cols.begin(), cols.end());
    const auto r = seam_energy(p, b);
    REQUIRE(r.ratio.has_value());
    CHECK(*r.ratio >= 0.5);
    CHECK(*r.ratio <= 2.0);
  }
}

TEST_CASE("seam energy is exactly translation covariant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = spotdiff::test::random_latent(64, 3, 2, trial);
    const int s = static_cast<int>(rng() % 200) - 100;
    const std::vector<int> b{16, 32, 48}, e{0};
    std::vector<int> bs, es;
    for (int x : b) bs.push_back(wrap_column(x + s, 64));
    for (int x : e) es.push_back(wrap_column(x + s, 64));
    const auto r0 = seam_energy(p, b, e);
    const auto r1 = seam_energy(translate(p, s), bs, es);
    CHECK(r0.boundary_energy == r1.boundary_energy);
    CHECK(r0.interior_energy == r1.interior_energy);
    CHECK(r0.ratio == r1.ratio);
  }
}

TEST_CASE("coverage of all-zero shifts is degenerate") {
  const std::vector<int> zeros(100, 0);
  const auto r = coverage_report(zeros, 256, 64);
  for (int x = 0; x < 256; ++x) CHECK(r.column_hits[x] == (x % 64 == 0 ? 100 : 0));
  CHECK(r.p_value < 1e-10);
}

TEST_CASE("evenly cycling shifts hit every column equally") {
  std::vector<int> shifts;
  for (int k = 0; k < 640; ++k) shifts.push_back(k % 64);
  const auto r = coverage_report(shifts, 256, 64);
  for (auto h : r.column_hits) CHECK(h == 10);
  CHECK(r.chi_square == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("coverage counts sum to T times n") {
  std::mt19937_64 rng(1);
  std::vector<int> shifts;
  for (int k = 0; k < 333; ++k) shifts.push_back(static_cast<int>(rng() % 32));
  const auto r = coverage_report(shifts, 128, 32);
  long long total = 0;
  for (auto h : r.column_hits) total += h;
  CHECK(total == 333 * 4);
  CHECK(r.degrees_of_freedom == 31);
}

TEST_CASE("chi-square tail matches closed forms") {
  for (double x : {0.5, 2.0, 10.0}) CHECK(chi_square_sf(x, 2) == doctest::Approx(std::exp(-x / 2)));
  CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_square_sf(0.0, 5) == 1.0);
  CHECK_THROWS_AS(chi_square_sf(1.0, 0), InvalidArgument);
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3.0, 1.0, 2.0}, 50.0) == 2.0);
  CHECK(percentile({0.0, 10.0}, 99.0) == doctest::Approx(9.9));
  CHECK(percentile({4.0}, 1.0) == 4.0);
  CHECK_THROWS_AS(percentile({}, 50.0), InvalidArgument);
}

namespace {

SamplerConfig tiny(Strategy s, std::uint64_t seed) {
  SamplerConfig c;
  c.strategy = s;
  c.panorama_width = 32;
  c.window_width = s == Strategy::plain ? 32 : 8;
  c.stride = 8;
  c.height = 2;
  c.channels = 1;
  c.steps = 10;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("calibration needs a prior with spatial correlation") {
  const auto schedule = NoiseSchedule::linear(10);
  AnalyticDenoiser flat(GaussianPrior::sinusoid(32, 0.5, 2, 1.0, 0.0), schedule);
  std::vector<RunRecord> ref, dis;
  for (std::uint64_t s = 0; s < 100; ++s) {
    ref.push_back(run(tiny(Strategy::plain, s), flat, schedule));
    dis.push_back(run(tiny(Strategy::multidiffusion, s), flat, schedule));
  }
  const auto b = disjoint_boundaries(32, 8);
  const auto e = panorama_edge();
  CHECK_THROWS_AS(threshold_calibration(ref, dis, b, e), CalibrationFailed);
  CHECK_THROWS_AS(threshold_calibration(std::span(ref).first(50), dis, b, e), InvalidArgument);

  AnalyticDenoiser smooth(GaussianPrior::sinusoid(32, 0.5, 2, 1.0, 4.0), schedule);
  ref.clear();
  dis.clear();
  for (std::uint64_t s = 0; s < 100; ++s) {
    ref.push_back(run(tiny(Strategy::plain, s), smooth, schedule));
    dis.push_back(run(tiny(Strategy::multidiffusion, s), smooth, schedule));
  }
  const auto t = threshold_calibration(ref, dis, b, e);
  CHECK(t.no_seam < t.seam);
}

TEST_CASE("measure reconciles with sampler counters") {
  const auto schedule = NoiseSchedule::linear(10);
  AnalyticDenoiser d(GaussianPrior::sinusoid(32, 0.5, 2, 1.0, 4.0), schedule);
  const SamplerConfig cfgs[] = {tiny(Strategy::spotdiffusion, 3), tiny(Strategy::multidiffusion, 3)};
  const auto res = run_compare(cfgs, d, schedule);
  REQUIRE(res.metrics.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& m = res.metrics[i];
    CHECK(m.compute.total_calls == res.runs[i].total_calls());
    CHECK(m.compute.total_calls == 10LL * m.compute.calls_per_step);
    CHECK(m.compute.total_wall_ms == doctest::Approx(10 * m.compute.wall_ms_per_step));
    REQUIRE(m.seam.has_value());
    CHECK(m.seam->boundaries == std::vector<int>{8, 16, 24});
  }
  CHECK(res.metrics[0].coverage.has_value());
  CHECK_FALSE(res.metrics[1].coverage.has_value());
  CHECK(res.runs[0].initial == res.runs[1].initial);

  CHECK_FALSE(measure(run(tiny(Strategy::plain, 0), d, schedule)).seam.has_value());
  const SamplerConfig mixed[] = {tiny(Strategy::spotdiffusion, 3), tiny(Strategy::multidiffusion, 4)};
  CHECK_THROWS_AS(run_compare(mixed, d, schedule), InvalidConfig);
}
