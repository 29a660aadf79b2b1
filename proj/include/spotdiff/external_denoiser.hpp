#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include "spotdiff/denoiser.hpp"
#include "spotdiff/protocol.hpp"

namespace spotdiff {

/// Client for a predictor running as a child process that speaks protocol v1
/// over its stdin/stdout. Requests are serialized over the single pipe pair.
class ExternalDenoiser final : public Denoiser {
 public:
  struct Options {
    std::string command;  // run through /bin/sh -c
    protocol::Hello hello;
    std::chrono::milliseconds timeout{30000};
  };

  /// Spawns the process and sends HELLO.
  explicit ExternalDenoiser(Options options);
  ~ExternalDenoiser() override;

  ExternalDenoiser(const ExternalDenoiser&) = delete;
  ExternalDenoiser& operator=(const ExternalDenoiser&) = delete;

  /// Payload crosses the pipe as f32; the result is widened back to double.
  WindowLatent predict_eps(const WindowLatent& window, const WindowContext& ctx) override;
  std::string descriptor() const override;

  /// Raw f32 round trip, used by serve-check.
  protocol::Response exchange(const protocol::Request& request);

  /// Sends Shutdown and reaps the child. Returns its exit status (or -1 when
  /// it was killed by a signal). Idempotent.
  int shutdown();

  const protocol::Hello& hello() const { return options_.hello; }

 private:
  struct Process;

  void send(std::span<const std::uint8_t> bytes);
  void receive(std::uint8_t* dst, std::size_t n);

  Options options_;
  std::unique_ptr<Process> process_;
  std::mutex mutex_;
  std::uint64_t requests_ = 0;
};

}  // namespace spotdiff
