#pragma once

#include <cstdint>
#include <string>

#include "spotdiff/grid.hpp"

namespace spotdiff {

/// Opaque per-window condition label.
struct ConditionId {
  std::uint32_t value = 0;
  friend bool operator==(ConditionId, ConditionId) = default;
};

/// Everything a predictor may know about the window it is asked about.
struct WindowContext {
  int timestep = 0;
  /// Source column of the window's left edge in the panorama.
  int offset = 0;
  /// Position of the call within its timestep (ascending offset order).
  int window_index = 0;
  int panorama_width = 0;
  ConditionId condition;
};

/// Epsilon-prediction contract. Implementations must return the input's
/// shape, be deterministic in (window values, context), and tolerate
/// concurrent calls.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual WindowLatent predict_eps(const WindowLatent& window, const WindowContext& ctx) = 0;
  /// Name plus a digest of the parameters.
  virtual std::string descriptor() const = 0;
};

}  // namespace spotdiff
