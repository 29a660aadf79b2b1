#include "spotdiff/replay_denoiser.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace spotdiff {

void Fixture::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open fixture " + path + " for writing");
  byteio::write_all(out, protocol::encode_hello(header));
  std::vector<std::uint8_t> buf;
  for (const auto& r : records) {
    if (r.payload.size() != header.payload_count()) {
      throw ShapeMismatch("fixture record payload does not match header dims");
    }
    buf.clear();
    byteio::put_u32(buf, r.timestep);
    byteio::put_u32(buf, r.call_index);
    byteio::put_u64(buf, r.input_digest);
    for (float v : r.payload) byteio::put_f32(buf, v);
    byteio::write_all(out, buf);
  }
  if (!out) throw IoError("failed writing fixture " + path);
}

Fixture Fixture::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open fixture " + path);
  Fixture f;
  f.header = protocol::decode_hello(byteio::read_exact(in, protocol::kHelloSize, "fixture header"));
  const std::size_t record_size = 16 + f.header.payload_count() * 4;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto bytes = byteio::read_exact(in, record_size, "fixture record");
    FixtureRecord r;
    r.timestep = byteio::get_u32(bytes.data());
    r.call_index = byteio::get_u32(bytes.data() + 4);
    r.input_digest = byteio::get_u64(bytes.data() + 8);
    r.payload = protocol::decode_payload(std::span(bytes).subspan(16));
    f.records.push_back(std::move(r));
  }
  return f;
}

RecordingDenoiser::RecordingDenoiser(Denoiser& inner, protocol::Hello header)
    : inner_(inner), header_(header) {}

WindowLatent RecordingDenoiser::predict_eps(const WindowLatent& window, const WindowContext& ctx) {
  WindowLatent eps = inner_.predict_eps(window, ctx);
  FixtureRecord r;
  r.timestep = static_cast<std::uint32_t>(ctx.timestep);
  r.call_index = static_cast<std::uint32_t>(ctx.window_index);
  r.input_digest = digest(window);
  r.payload.resize(static_cast<std::size_t>(eps.size()));
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    r.payload[i] = static_cast<float>(eps.values()[i]);
    eps.values()[i] = r.payload[i];
  }
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(r));
  return eps;
}

std::string RecordingDenoiser::descriptor() const {
  return "record(" + inner_.descriptor() + ")";
}

Fixture RecordingDenoiser::fixture() const {
  std::lock_guard lock(mutex_);
  Fixture f{header_, records_};
  std::stable_sort(f.records.begin(), f.records.end(), [](const auto& a, const auto& b) {
    if (a.timestep != b.timestep) return a.timestep > b.timestep;
    return a.call_index < b.call_index;
  });
  return f;
}

ReplayDenoiser::ReplayDenoiser(Fixture fixture) : header_(fixture.header) {
  byteio::Fnv1a h;
  h.update(protocol::encode_hello(header_));
  for (auto& r : fixture.records) {
    h.update_u64(r.input_digest);
    const auto key = std::make_pair(r.timestep, r.call_index);
    entries_.insert_or_assign(key, std::move(r));
  }
  fixture_digest_ = h.value();
}

WindowLatent ReplayDenoiser::predict_eps(const WindowLatent& window, const WindowContext& ctx) {
  if (static_cast<std::uint32_t>(window.width()) != header_.width ||
      static_cast<std::uint32_t>(window.height()) != header_.height ||
      static_cast<std::uint32_t>(window.channels()) != header_.channels) {
    throw ShapeMismatch("window " + window.shape_string() + " does not match fixture dims");
  }
  const auto key = std::make_pair(static_cast<std::uint32_t>(ctx.timestep),
                                  static_cast<std::uint32_t>(ctx.window_index));
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw FixtureExhausted("no recorded call for t = " + std::to_string(ctx.timestep) +
                           ", call " + std::to_string(ctx.window_index));
  }
  if (it->second.input_digest != digest(window)) {
    throw FixtureDiverged("input for t = " + std::to_string(ctx.timestep) + ", call " +
                          std::to_string(ctx.window_index) + " differs from the recording");
  }
  WindowLatent eps(window.width(), window.height(), window.channels());
  eps.timestep_tag = window.timestep_tag;
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.values()[i] = it->second.payload[i];
  return eps;
}

std::string ReplayDenoiser::descriptor() const {
  std::ostringstream out;
  out << "replay(" << std::hex << fixture_digest_ << ")";
  return out.str();
}

}  // namespace spotdiff
