#pragma once

// Runs several strategies from the same seed and attaches metrics.

#include <optional>
#include <span>
#include <vector>

#include "spotdiff/metrics.hpp"
#include "spotdiff/samplers.hpp"

namespace spotdiff {

struct RunMetrics {
  /// Seam statistics at the disjoint-tiling junctions, panorama edge
  /// excluded. Empty when the panorama is a single window.
  std::optional<SeamReport> seam;
  ComputeReport compute;
  /// Boundary coverage of the shift sequence (spotdiffusion only).
  std::optional<CoverageReport> coverage;
};

RunMetrics measure(const RunRecord& record);

struct CompareResult {
  std::vector<RunRecord> runs;
  std::vector<RunMetrics> metrics;
};

/// All configs must share seed, panorama width, height, channels, steps and
/// window width; otherwise InvalidConfig.
CompareResult run_compare(std::span<const SamplerConfig> cfgs, Denoiser& denoiser,
                          const NoiseSchedule& schedule);

}  // namespace spotdiff
