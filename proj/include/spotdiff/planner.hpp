#pragma once

// Window layouts. Static plans tile a flat panorama with overlapping windows
// at a fixed stride; shifted plans tile a cyclic panorama with disjoint
// windows after a global translation by the step's shift.

#include <random>
#include <string>
#include <vector>

namespace spotdiff {

/// The run's single random stream. Draw order is fixed by the samplers.
using RunRng = std::mt19937_64;

struct WindowPlan {
  int panorama_width = 0;
  int window_width = 0;
  int stride = 0;
  /// Window left edges. For shifted plans these index the translated
  /// panorama; the shift maps them back to source columns.
  std::vector<int> offsets;
  int shift = 0;
  bool wraparound = false;

  int count() const { return static_cast<int>(offsets.size()); }
  /// Source column of window i's left edge.
  int source_offset(int i) const;
};

/// Offsets {0, stride, ..., W' - W}. Requires 1 <= stride <= W <= W' and
/// (W' - W) divisible by stride.
WindowPlan plan_static(int panorama_width, int window_width, int stride);

/// W'/W disjoint windows over the panorama translated by `shift`.
WindowPlan plan_shifted(int panorama_width, int window_width, int shift);

/// Sorted left-edge source columns: {(k W - s) mod W'} for shifted plans,
/// the offsets for static ones.
std::vector<int> boundary_positions(const WindowPlan& plan);

/// Per-step shift law. Every call consumes exactly one integer draw from the
/// run stream regardless of the law, so toggling laws or strategies keeps the
/// remaining randomness aligned.
class ShiftSampler {
 public:
  enum class Law { uniform_integer, forced_zero, fixed_sequence };

  static ShiftSampler uniform(int window_width);
  static ShiftSampler forced_zero(int window_width);
  static ShiftSampler fixed(int window_width, std::vector<int> sequence);

  Law law() const { return law_; }
  int window_width() const { return window_width_; }

  /// Shift for the step with ordinal `step` (0 for the first reverse step).
  int sample(RunRng& rng, int step) const;

 private:
  ShiftSampler(Law law, int window_width, std::vector<int> sequence);

  Law law_;
  int window_width_;
  std::vector<int> sequence_;
};

std::string to_string(ShiftSampler::Law law);
ShiftSampler::Law parse_shift_law(const std::string& name);

/// One integer per line; blank lines and '#' comments are skipped.
std::vector<int> load_shift_sequence(const std::string& path);
void save_shift_sequence(const std::string& path, const std::vector<int>& shifts);

}  // namespace spotdiff
