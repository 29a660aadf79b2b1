#include "spotdiff/compare.hpp"

namespace spotdiff {

RunMetrics measure(const RunRecord& record) {
  const auto& cfg = record.config;
  RunMetrics m;
  const auto boundaries = disjoint_boundaries(cfg.panorama_width, cfg.window_width);
  if (!boundaries.empty()) m.seam = seam_energy(record.final, boundaries, panorama_edge());
  m.compute = compute_report(record);
  if (cfg.strategy == Strategy::spotdiffusion) {
    m.coverage = coverage_report(record.shifts, cfg.panorama_width, cfg.window_width);
  }
  return m;
}

CompareResult run_compare(std::span<const SamplerConfig> cfgs, Denoiser& denoiser,
                          const NoiseSchedule& schedule) {
  if (cfgs.empty()) throw InvalidConfig("compare needs at least one strategy");
  const auto& first = cfgs.front();
  for (const auto& c : cfgs) {
    if (c.seed != first.seed || c.panorama_width != first.panorama_width ||
        c.window_width != first.window_width || c.height != first.height ||
        c.channels != first.channels || c.steps != first.steps) {
      throw InvalidConfig("compared strategies must share seed and geometry");
    }
  }
  CompareResult out;
  for (const auto& c : cfgs) {
    out.runs.push_back(run(c, denoiser, schedule));
    out.metrics.push_back(measure(out.runs.back()));
  }
  return out;
}

}  // namespace spotdiff
