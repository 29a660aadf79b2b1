#include "spotdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace spotdiff {

namespace {

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0);
}

}  // namespace

SeamReport seam_energy(const PanoramaLatent& p, std::span<const int> boundaries,
                       std::span<const int> excluded) {
  const int w = p.width();
  std::vector<char> role(static_cast<std::size_t>(w), 0);  // 0 interior, 1 boundary, 2 excluded
  for (int e : excluded) role[wrap_column(e, w)] = 2;
  std::size_t nb = 0;
  for (int b : boundaries) {
    auto& r = role[wrap_column(b, w)];
    if (r == 0) {
      r = 1;
      ++nb;
    }
  }
  const auto ni = static_cast<std::size_t>(std::count(role.begin(), role.end(), 0));
  if (nb == 0 || ni == 0) {
    throw InvalidArgument("seam boundaries must be a non-empty strict subset of the columns");
  }

  std::vector<double> boundary_cols;
  std::vector<double> interior_cols;
  for (int x = 0; x < w; ++x) {
    if (role[x] == 2) continue;
    const int left = wrap_column(x - 1, w);
    double acc = 0.0;
    for (int y = 0; y < p.height(); ++y) {
      for (int c = 0; c < p.channels(); ++c) {
        const double d = p(x, y, c) - p(left, y, c);
        acc += d * d;
      }
    }
    (role[x] == 1 ? boundary_cols : interior_cols).push_back(acc);
  }

  const double per_col = static_cast<double>(p.height()) * p.channels();
  SeamReport report;
  report.boundary_energy = sorted_sum(boundary_cols) / (per_col * nb);
  report.interior_energy = sorted_sum(interior_cols) / (per_col * ni);
  if (report.interior_energy > 1e-12) report.ratio = report.boundary_energy / report.interior_energy;
  for (int x = 0; x < w; ++x) {
    if (role[x] == 1) report.boundaries.push_back(x);
  }
  return report;
}

std::vector<int> disjoint_boundaries(int panorama_width, int window_width) {
  std::vector<int> out;
  for (int x = window_width; x < panorama_width; x += window_width) out.push_back(x);
  return out;
}

double chi_square_sf(double statistic, int degrees_of_freedom) {
  if (degrees_of_freedom < 1) throw InvalidArgument("chi-square needs >= 1 degree of freedom");
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * degrees_of_freedom, 0.5 * statistic);
}

CoverageReport coverage_report(std::span<const int> shifts, int panorama_width, int window_width) {
  CoverageReport report;
  report.column_hits.assign(static_cast<std::size_t>(panorama_width), 0);
  std::vector<long long> residue_hits(static_cast<std::size_t>(window_width), 0);
  for (int s : shifts) {
    const WindowPlan plan = plan_shifted(panorama_width, window_width, s);
    for (int col : boundary_positions(plan)) ++report.column_hits[col];
    ++residue_hits[wrap_column(-static_cast<long long>(s), window_width)];
  }
  const double expected = static_cast<double>(shifts.size()) / window_width;
  report.degrees_of_freedom = window_width - 1;
  if (expected > 0.0 && window_width > 1) {
    for (long long h : residue_hits) {
      const double d = static_cast<double>(h) - expected;
      report.chi_square += d * d / expected;
    }
    report.p_value = chi_square_sf(report.chi_square, report.degrees_of_freedom);
  }
  return report;
}

ComputeReport compute_report(const RunRecord& record) {
  ComputeReport r;
  r.calls_per_step = record.calls_per_step.empty() ? 0 : record.calls_per_step.front();
  r.total_calls = record.total_calls();
  r.total_wall_ms = record.total_wall_ms();
  r.wall_ms_per_step =
      record.wall_ms_per_step.empty() ? 0.0 : r.total_wall_ms / record.wall_ms_per_step.size();
  return r;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SeamThresholds threshold_calibration(std::span<const RunRecord> reference,
                                     std::span<const RunRecord> disjoint,
                                     std::span<const int> boundaries,
                                     std::span<const int> excluded, std::size_t min_runs) {
  if (reference.size() < min_runs || disjoint.size() < min_runs) {
    throw InvalidArgument("calibration needs at least " + std::to_string(min_runs) +
                          " runs of each kind");
  }
  auto ratios = [&](std::span<const RunRecord> runs) {
    std::vector<double> out;
    for (const auto& r : runs) {
      const auto report = seam_energy(r.final, boundaries, excluded);
      if (!report.ratio) throw CalibrationFailed("seam ratio undefined (flat panorama)");
      out.push_back(*report.ratio);
    }
    return out;
  };
  SeamThresholds t;
  t.no_seam = percentile(ratios(reference), 99.0);
  t.seam = percentile(ratios(disjoint), 1.0);
  if (!(t.no_seam < t.seam)) {
    throw CalibrationFailed("no-seam threshold " + std::to_string(t.no_seam) +
                            " is not below seam threshold " + std::to_string(t.seam) +
                            "; the prior carries no seam signal");
  }
  return t;
}

}  // namespace spotdiff
