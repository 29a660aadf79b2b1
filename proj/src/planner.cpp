#include "spotdiff/planner.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "spotdiff/errors.hpp"
#include "spotdiff/grid.hpp"

namespace spotdiff {

int WindowPlan::source_offset(int i) const {
  return wrap_column(static_cast<long long>(offsets.at(i)) - shift, panorama_width);
}

WindowPlan plan_static(int panorama_width, int window_width, int stride) {
  if (window_width < 1 || window_width > panorama_width) {
    throw InvalidGeometry("window width " + std::to_string(window_width) +
                          " must lie in [1, panorama width " + std::to_string(panorama_width) + "]");
  }
  if (stride < 1 || stride > window_width) {
    throw InvalidGeometry("stride " + std::to_string(stride) + " must lie in [1, window width " +
                          std::to_string(window_width) + "] so every column is covered");
  }
  if ((panorama_width - window_width) % stride != 0) {
    throw InvalidGeometry("panorama width minus window width (" +
                          std::to_string(panorama_width - window_width) +
                          ") must be divisible by the stride " + std::to_string(stride));
  }
  WindowPlan plan;
  plan.panorama_width = panorama_width;
  plan.window_width = window_width;
  plan.stride = stride;
  for (int o = 0; o <= panorama_width - window_width; o += stride) plan.offsets.push_back(o);
  return plan;
}

WindowPlan plan_shifted(int panorama_width, int window_width, int shift) {
  if (window_width < 1 || window_width > panorama_width) {
    throw InvalidGeometry("window width " + std::to_string(window_width) +
                          " must lie in [1, panorama width " + std::to_string(panorama_width) + "]");
  }
  if (panorama_width % window_width != 0) {
    throw InvalidGeometry("panorama width " + std::to_string(panorama_width) +
                          " must be divisible by the window width " + std::to_string(window_width));
  }
  if (shift < 0 || shift >= window_width) {
    throw InvalidArgument("shift " + std::to_string(shift) + " outside [0, " +
                          std::to_string(window_width) + ")");
  }
  WindowPlan plan;
  plan.panorama_width = panorama_width;
  plan.window_width = window_width;
  plan.stride = window_width;
  plan.shift = shift;
  plan.wraparound = true;
  for (int o = 0; o < panorama_width; o += window_width) plan.offsets.push_back(o);
  return plan;
}

std::vector<int> boundary_positions(const WindowPlan& plan) {
  std::vector<int> cols;
  cols.reserve(plan.offsets.size());
  // Window i of a shifted plan reads translated columns starting at
  // offsets[i], i.e. source columns starting at offsets[i] - shift.
  for (int i = 0; i < plan.count(); ++i) cols.push_back(plan.source_offset(i));
  std::sort(cols.begin(), cols.end());
  return cols;
}

ShiftSampler::ShiftSampler(Law law, int window_width, std::vector<int> sequence)
    : law_(law), window_width_(window_width), sequence_(std::move(sequence)) {
  if (window_width_ < 1) throw InvalidArgument("shift sampler needs a positive window width");
  for (int s : sequence_) {
    if (s < 0 || s >= window_width_) {
      throw InvalidArgument("fixed shift " + std::to_string(s) + " outside [0, " +
                            std::to_string(window_width_) + ")");
    }
  }
}

ShiftSampler ShiftSampler::uniform(int window_width) {
  return ShiftSampler(Law::uniform_integer, window_width, {});
}

ShiftSampler ShiftSampler::forced_zero(int window_width) {
  return ShiftSampler(Law::forced_zero, window_width, {});
}

ShiftSampler ShiftSampler::fixed(int window_width, std::vector<int> sequence) {
  return ShiftSampler(Law::fixed_sequence, window_width, std::move(sequence));
}

int ShiftSampler::sample(RunRng& rng, int step) const {
  std::uniform_int_distribution<int> dist(0, window_width_ - 1);
  const int drawn = dist(rng);
  switch (law_) {
    case Law::uniform_integer:
      return drawn;
    case Law::forced_zero:
      return 0;
    case Law::fixed_sequence:
      if (step < 0 || static_cast<std::size_t>(step) >= sequence_.size()) {
        throw FixtureExhausted("fixed shift sequence has " + std::to_string(sequence_.size()) +
                               " entries, step " + std::to_string(step) + " requested");
      }
      return sequence_[static_cast<std::size_t>(step)];
  }
  return 0;
}

std::string to_string(ShiftSampler::Law law) {
  switch (law) {
    case ShiftSampler::Law::uniform_integer: return "uniform";
    case ShiftSampler::Law::forced_zero: return "zero";
    case ShiftSampler::Law::fixed_sequence: return "fixed";
  }
  return "?";
}

ShiftSampler::Law parse_shift_law(const std::string& name) {
  if (name == "uniform") return ShiftSampler::Law::uniform_integer;
  if (name == "zero") return ShiftSampler::Law::forced_zero;
  if (name == "fixed") return ShiftSampler::Law::fixed_sequence;
  throw InvalidConfig("unknown shift law '" + name + "' (expected uniform, zero or fixed)");
}

std::vector<int> load_shift_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open shift sequence " + path);
  std::vector<int> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int v;
    if (!(ss >> v)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": not an integer");
    }
    std::string rest;
    if (ss >> rest) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": trailing text");
    out.push_back(v);
  }
  return out;
}

void save_shift_sequence(const std::string& path, const std::vector<int>& shifts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (int s : shifts) out << s << '\n';
}

}  // namespace spotdiff
