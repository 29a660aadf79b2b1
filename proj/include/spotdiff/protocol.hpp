#pragma once

// External denoiser protocol v1 (binary, little-endian).
//
//   HELLO     "SPDX" | version u16 = 1 | W u32 | H u32 | C u32 | T u32 | schedule u8
//   Request   tag u8 = 1 | t u32 | window_index u32 | condition u32 | W*H*C f32
//   Response  tag u8 = 2 | W u32 | H u32 | C u32 | W*H*C f32
//   Shutdown  tag u8 = 0
//
// The engine writes HELLO once, then alternates Request / Response, and ends
// with Shutdown. Payloads use the latent layout from grid.hpp.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "spotdiff/byteio.hpp"
#include "spotdiff/errors.hpp"
#include "spotdiff/schedule.hpp"

namespace spotdiff::protocol {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'P', 'D', 'X'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHelloSize = 4 + 2 + 4 * 4 + 1;

enum class Tag : std::uint8_t { shutdown = 0, request = 1, response = 2 };

struct Hello {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::uint32_t steps = 0;
  ScheduleKind schedule = ScheduleKind::linear;

  std::size_t payload_count() const { return std::size_t(width) * height * channels; }
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct Request {
  std::uint32_t timestep = 0;
  std::uint32_t window_index = 0;
  std::uint32_t condition = 0;
  std::vector<float> payload;
};

struct Response {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> payload;
};

std::vector<std::uint8_t> encode_hello(const Hello& hello);
Hello decode_hello(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_request(const Request& request);
std::vector<std::uint8_t> encode_response(const Response& response);
std::vector<std::uint8_t> encode_shutdown();

std::vector<float> decode_payload(std::span<const std::uint8_t> bytes);

// Frame readers over any `read(std::uint8_t* dst, std::size_t n)` callable
// that fills exactly n bytes or throws.

template <typename ReadExact>
Hello read_hello(ReadExact&& read) {
  std::array<std::uint8_t, kHelloSize> buf{};
  read(buf.data(), buf.size());
  return decode_hello(buf);
}

template <typename ReadExact>
Tag read_tag(ReadExact&& read) {
  std::uint8_t tag = 0;
  read(&tag, 1);
  if (tag > 2) throw ProtocolError("unknown frame tag " + std::to_string(tag));
  return static_cast<Tag>(tag);
}

/// Body of a Request frame (after its tag).
template <typename ReadExact>
Request read_request_body(ReadExact&& read, const Hello& hello) {
  std::array<std::uint8_t, 12> head{};
  read(head.data(), head.size());
  Request r;
  r.timestep = byteio::get_u32(head.data());
  r.window_index = byteio::get_u32(head.data() + 4);
  r.condition = byteio::get_u32(head.data() + 8);
  std::vector<std::uint8_t> body(hello.payload_count() * 4);
  read(body.data(), body.size());
  r.payload = decode_payload(body);
  return r;
}

/// Body of a Response frame (after its tag). The echoed dims must match.
template <typename ReadExact>
Response read_response_body(ReadExact&& read, const Hello& hello) {
  std::array<std::uint8_t, 12> head{};
  read(head.data(), head.size());
  Response r;
  r.width = byteio::get_u32(head.data());
  r.height = byteio::get_u32(head.data() + 4);
  r.channels = byteio::get_u32(head.data() + 8);
  if (r.width != hello.width || r.height != hello.height || r.channels != hello.channels) {
    throw ShapeMismatch("response dims " + std::to_string(r.width) + "x" +
                        std::to_string(r.height) + "x" + std::to_string(r.channels) +
                        " differ from negotiated " + std::to_string(hello.width) + "x" +
                        std::to_string(hello.height) + "x" + std::to_string(hello.channels));
  }
  std::vector<std::uint8_t> body(hello.payload_count() * 4);
  read(body.data(), body.size());
  r.payload = decode_payload(body);
  return r;
}

}  // namespace spotdiff::protocol
