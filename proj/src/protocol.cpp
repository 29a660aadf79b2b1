#include "spotdiff/protocol.hpp"

#include <algorithm>

namespace spotdiff::protocol {

std::vector<std::uint8_t> encode_hello(const Hello& hello) {
  std::vector<std::uint8_t> buf(kMagic.begin(), kMagic.end());
  byteio::put_u16(buf, kVersion);
  byteio::put_u32(buf, hello.width);
  byteio::put_u32(buf, hello.height);
  byteio::put_u32(buf, hello.channels);
  byteio::put_u32(buf, hello.steps);
  byteio::put_u8(buf, static_cast<std::uint8_t>(hello.schedule));
  return buf;
}

Hello decode_hello(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHelloSize) throw ProtocolError("HELLO frame truncated");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw ProtocolError("bad HELLO magic");
  }
  const auto version = byteio::get_u16(bytes.data() + 4);
  if (version != kVersion) {
    throw ProtocolError("unsupported protocol version " + std::to_string(version));
  }
  Hello h;
  h.width = byteio::get_u32(bytes.data() + 6);
  h.height = byteio::get_u32(bytes.data() + 10);
  h.channels = byteio::get_u32(bytes.data() + 14);
  h.steps = byteio::get_u32(bytes.data() + 18);
  const auto kind = bytes[22];
  if (kind > 1) throw ProtocolError("unknown schedule kind " + std::to_string(kind));
  h.schedule = static_cast<ScheduleKind>(kind);
  if (h.width == 0 || h.height == 0 || h.channels == 0 || h.steps == 0) {
    throw ProtocolError("HELLO with zero dimension");
  }
  return h;
}

std::vector<std::uint8_t> encode_request(const Request& request) {
  std::vector<std::uint8_t> buf;
  buf.reserve(13 + request.payload.size() * 4);
  byteio::put_u8(buf, static_cast<std::uint8_t>(Tag::request));
  byteio::put_u32(buf, request.timestep);
  byteio::put_u32(buf, request.window_index);
  byteio::put_u32(buf, request.condition);
  for (float v : request.payload) byteio::put_f32(buf, v);
  return buf;
}

std::vector<std::uint8_t> encode_response(const Response& response) {
  std::vector<std::uint8_t> buf;
  buf.reserve(13 + response.payload.size() * 4);
  byteio::put_u8(buf, static_cast<std::uint8_t>(Tag::response));
  byteio::put_u32(buf, response.width);
  byteio::put_u32(buf, response.height);
  byteio::put_u32(buf, response.channels);
  for (float v : response.payload) byteio::put_f32(buf, v);
  return buf;
}

std::vector<std::uint8_t> encode_shutdown() {
  return {static_cast<std::uint8_t>(Tag::shutdown)};
}

std::vector<float> decode_payload(std::span<const std::uint8_t> bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = byteio::get_f32(bytes.data() + 4 * i);
  return out;
}

}  // namespace spotdiff::protocol
