// Scriptable external denoiser for protocol tests.
//
//   mock_denoiser_server zero|echo|diagonal|bad-tag|wrong-shape|stall
//   mock_denoiser_server die-after N
//
// diagonal answers with the posterior noise estimate of a zero-mean,
// unit-variance, independent-pixel prior.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <thread>

#include "spotdiff/protocol.hpp"

using namespace spotdiff;

namespace {

void read_exact(std::uint8_t* dst, std::size_t n) {
  if (std::fread(dst, 1, n, stdin) != n) std::exit(3);
}

void write_bytes(const std::vector<std::uint8_t>& bytes) {
  std::fwrite(bytes.data(), 1, bytes.size(), stdout);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return 64;
  const std::string mode = argv[1];
  const int die_after = argc > 2 ? std::atoi(argv[2]) : -1;

  const auto hello = protocol::read_hello(read_exact);
  const auto schedule = NoiseSchedule::make(hello.schedule, static_cast<int>(hello.steps));

  int answered = 0;
  for (;;) {
    const auto tag = protocol::read_tag(read_exact);
    if (tag == protocol::Tag::shutdown) return 0;
    if (tag != protocol::Tag::request) return 4;
    auto req = protocol::read_request_body(read_exact, hello);
    if (mode == "die-after" && answered >= die_after) return 5;
    if (mode == "stall") std::this_thread::sleep_for(std::chrono::hours(1));

    protocol::Response resp{hello.width, hello.height, hello.channels, {}};
    if (mode == "echo") {
      resp.payload = req.payload;
    } else if (mode == "diagonal") {
      const double ab = schedule.alpha_bar(static_cast<int>(req.timestep));
      const double a = std::sqrt(ab);
      const double b = std::sqrt(1.0 - ab);
      const double var = 1.0 + 1e-8;
      const double gain = a * var / (a * a * var + b * b);
      for (float x : req.payload) {
        resp.payload.push_back(static_cast<float>((x - a * gain * x) / b));
      }
    } else {
      resp.payload.assign(req.payload.size(), 0.0f);
    }
    if (mode == "wrong-shape") resp.width += 1;
    auto bytes = protocol::encode_response(resp);
    if (mode == "bad-tag") bytes[0] = 7;
    if (mode == "wrong-shape") bytes.resize(1 + 12);  // header is enough to fail
    write_bytes(bytes);
    ++answered;
  }
}
