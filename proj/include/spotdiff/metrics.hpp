#pragma once

// Seam, coverage and compute statistics over completed runs.

#include <optional>
#include <span>
#include <vector>

#include "spotdiff/grid.hpp"
#include "spotdiff/samplers.hpp"

namespace spotdiff {

/// Mean squared first-order column difference (p[b] - p[b-1 mod W']) over
/// rows and channels, split into boundary and interior columns.
struct SeamReport {
  double boundary_energy = 0.0;
  double interior_energy = 0.0;
  /// boundary / interior; empty (not applicable) when interior <= 1e-12.
  std::optional<double> ratio;
  std::vector<int> boundaries;
};

/// `excluded` columns take part in neither statistic. Boundaries must be a
/// non-empty strict subset of the remaining columns. The result depends only
/// on the multiset of per-column energies, so it is exactly covariant under
/// translate(p, s) with boundaries and exclusions shifted by s.
SeamReport seam_energy(const PanoramaLatent& p, std::span<const int> boundaries,
                       std::span<const int> excluded = {});

/// Interior window junctions of the disjoint tiling, {W, 2W, ..., W' - W}.
/// Column 0 is the panorama's outer edge and is reported separately by
/// `panorama_edge()`.
std::vector<int> disjoint_boundaries(int panorama_width, int window_width);
inline std::vector<int> panorama_edge() { return {0}; }

struct CoverageReport {
  /// Boundary hits per source column; sums to T * n.
  std::vector<long long> column_hits;
  /// Pearson statistic over the W shift residues (column mod W). Every hit
  /// at column c is replicated at c + kW, so residues are the independent
  /// cells.
  double chi_square = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
};

/// Accumulates boundary_positions of the shifted plan for every step.
CoverageReport coverage_report(std::span<const int> shifts, int panorama_width, int window_width);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, int degrees_of_freedom);

struct ComputeReport {
  int calls_per_step = 0;
  long long total_calls = 0;
  double wall_ms_per_step = 0.0;
  double total_wall_ms = 0.0;
};

ComputeReport compute_report(const RunRecord& record);

struct SeamThresholds {
  double no_seam = 0.0;
  double seam = 0.0;
};

/// no_seam = 99th percentile of the reference ratios, seam = 1st percentile
/// of the disjoint-tiling ratios, both measured on `boundaries` with
/// `excluded` columns dropped. Throws CalibrationFailed unless no_seam < seam.
SeamThresholds threshold_calibration(std::span<const RunRecord> reference,
                                     std::span<const RunRecord> disjoint,
                                     std::span<const int> boundaries,
                                     std::span<const int> excluded, std::size_t min_runs = 100);

/// Linear-interpolated percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

}  // namespace spotdiff
