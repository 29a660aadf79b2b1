#include "spotdiff/grid.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "spotdiff/byteio.hpp"

namespace spotdiff {

void write_plat(std::ostream& out, const PanoramaLatent& p, const std::string& tag) {
  if (tag.find_first_of(" \t\r\n") != std::string::npos) {
    throw InvalidArgument("PLAT tag must be a single token");
  }
  std::string header = "PLAT v1 " + std::to_string(p.width()) + " " +
                       std::to_string(p.height()) + " " + std::to_string(p.channels());
  if (!tag.empty()) header += " " + tag;
  header += "\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<std::uint8_t> payload;
  payload.reserve(static_cast<std::size_t>(p.size()) * 4);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    byteio::put_f32(payload, static_cast<float>(p.values()[i]));
  }
  byteio::write_all(out, payload);
  if (!out) throw IoError("failed writing latent dump");
}

void write_plat(const std::string& path, const PanoramaLatent& p, const std::string& tag) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_plat(out, p, tag);
}

PanoramaLatent read_plat(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing PLAT header");
  std::istringstream header(line);
  std::string magic, version;
  int w = 0, h = 0, c = 0;
  header >> magic >> version >> w >> h >> c;
  if (!header || magic != "PLAT" || version != "v1") {
    throw IoError("bad PLAT header '" + line + "'");
  }
  std::string tag, extra;
  header >> tag;
  if (header >> extra) throw IoError("bad PLAT header '" + line + "'");
  PanoramaLatent p(w, h, c);
  const auto bytes = byteio::read_exact(in, static_cast<std::size_t>(p.size()) * 4, "PLAT payload");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p.values()[i] = byteio::get_f32(bytes.data() + 4 * i);
  }
  return p;
}

PanoramaLatent read_plat(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_plat(in);
}

std::uint64_t digest(const PanoramaLatent& p) {
  byteio::Fnv1a h;
  h.update_u64(static_cast<std::uint64_t>(p.width()));
  h.update_u64(static_cast<std::uint64_t>(p.height()));
  h.update_u64(static_cast<std::uint64_t>(p.channels()));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    h.update_u64(std::bit_cast<std::uint64_t>(p.values()[i]));
  }
  return h.value();
}

}  // namespace spotdiff
