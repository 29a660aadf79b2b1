#pragma once

// Record / replay of predictor calls for bit-exact regression runs.
//
// Fixture file: the protocol HELLO header, then records of
//   t u32 | call_index u32 | input digest u64 | W*H*C f32 payload
// in call order.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "spotdiff/denoiser.hpp"
#include "spotdiff/protocol.hpp"

namespace spotdiff {

struct FixtureRecord {
  std::uint32_t timestep = 0;
  std::uint32_t call_index = 0;
  std::uint64_t input_digest = 0;
  std::vector<float> payload;
};

struct Fixture {
  protocol::Hello header;
  std::vector<FixtureRecord> records;

  void save(const std::string& path) const;
  static Fixture load(const std::string& path);
};

/// Wraps a predictor, rounds its output to f32 and logs every call. The
/// rounded value is what the caller sees, so a replay of the log reproduces
/// the recorded run bit for bit.
class RecordingDenoiser final : public Denoiser {
 public:
  RecordingDenoiser(Denoiser& inner, protocol::Hello header);

  WindowLatent predict_eps(const WindowLatent& window, const WindowContext& ctx) override;
  std::string descriptor() const override;

  /// Records sorted by (t descending, call index), i.e. in run order.
  Fixture fixture() const;

 private:
  Denoiser& inner_;
  protocol::Hello header_;
  mutable std::mutex mutex_;
  std::vector<FixtureRecord> records_;
};

class ReplayDenoiser final : public Denoiser {
 public:
  explicit ReplayDenoiser(Fixture fixture);

  /// Throws FixtureExhausted when (t, window_index) was never recorded and
  /// FixtureDiverged when the input digest differs from the recorded one.
  WindowLatent predict_eps(const WindowLatent& window, const WindowContext& ctx) override;
  std::string descriptor() const override;

 private:
  protocol::Hello header_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, FixtureRecord> entries_;
  std::uint64_t fixture_digest_ = 0;
};

}  // namespace spotdiff
