#pragma once

// Latent grids and the cyclic translate / crop / concat primitives.
//
// Layout: row-major with interleaved channels. The value for column x,
// row y, channel c lives at index (y * width + x) * channels + c. Each row is
// therefore one contiguous block of width * channels values, and a column
// shift is a rotation of every row block by whole pixels.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spotdiff/errors.hpp"

namespace spotdiff {

template <typename Scalar>
class Latent {
 public:
  using Values = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Latent() = default;

  Latent(int width, int height, int channels)
      : width_(width), height_(height), channels_(channels) {
    check_dims();
    values_ = Values::Zero(size());
  }

  Latent(int width, int height, int channels, Values values)
      : width_(width), height_(height), channels_(channels),
        values_(std::move(values)) {
    check_dims();
    if (values_.size() != size()) {
      throw ShapeMismatch("value count " + std::to_string(values_.size()) +
                          " does not match " + shape_string());
    }
  }

  static Latent constant(int width, int height, int channels, Scalar value) {
    return Latent(width, height, channels, Values::Constant(Eigen::Index(width) * height * channels, value));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  Eigen::Index size() const { return Eigen::Index(width_) * height_ * channels_; }
  Eigen::Index row_stride() const { return Eigen::Index(width_) * channels_; }

  Eigen::Index index(int x, int y, int c) const {
    return (Eigen::Index(y) * width_ + x) * channels_ + c;
  }
  Scalar operator()(int x, int y, int c) const { return values_[index(x, y, c)]; }
  Scalar& operator()(int x, int y, int c) { return values_[index(x, y, c)]; }

  const Values& values() const { return values_; }
  Values& values() { return values_; }

  // Bookkeeping only; never affects arithmetic.
  int timestep_tag = -1;

  bool same_shape(const Latent& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool all_finite() const { return values_.allFinite(); }

  std::string shape_string() const {
    return std::to_string(width_) + "x" + std::to_string(height_) + "x" + std::to_string(channels_);
  }

  template <typename Other>
  Latent<Other> cast() const {
    return Latent<Other>(width_, height_, channels_, values_.template cast<Other>());
  }

  /// Bitwise equality of shape and values.
  friend bool operator==(const Latent& a, const Latent& b) {
    return a.same_shape(b) &&
           std::equal(a.values_.data(), a.values_.data() + a.values_.size(), b.values_.data(),
                      [](Scalar l, Scalar r) { return std::memcmp(&l, &r, sizeof(Scalar)) == 0; });
  }

 private:
  void check_dims() const {
    if (width_ < 1 || height_ < 1 || channels_ < 1) {
      throw ShapeMismatch("latent dimensions must be positive, got " + shape_string());
    }
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  Values values_;
};

using PanoramaLatent = Latent<double>;
using WindowLatent = Latent<double>;

inline int wrap_column(long long x, int width) {
  long long r = x % width;
  return static_cast<int>(r < 0 ? r + width : r);
}

/// Cyclic shift along the width: output column x is input column (x - s) mod width.
template <typename Scalar>
Latent<Scalar> translate(const Latent<Scalar>& p, long long s) {
  const int w = p.width();
  const int shift = wrap_column(s, w);
  Latent<Scalar> out(p.width(), p.height(), p.channels());
  out.timestep_tag = p.timestep_tag;
  const Eigen::Index stride = p.row_stride();
  const Eigen::Index split = Eigen::Index(w - shift) * p.channels();
  for (int y = 0; y < p.height(); ++y) {
    const Scalar* row = p.values().data() + y * stride;
    std::rotate_copy(row, row + split, row + stride, out.values().data() + y * stride);
  }
  return out;
}

/// Copies columns offset .. offset + window_width - 1, wrapping mod p.width().
template <typename Scalar>
Latent<Scalar> crop_window(const Latent<Scalar>& p, int offset, int window_width) {
  if (window_width < 1 || window_width > p.width()) {
    throw InvalidWindow("window width " + std::to_string(window_width) +
                        " outside [1, " + std::to_string(p.width()) + "]");
  }
  if (offset < 0) {
    throw InvalidWindow("negative window offset " + std::to_string(offset));
  }
  const int c = p.channels();
  Latent<Scalar> out(window_width, p.height(), c);
  out.timestep_tag = p.timestep_tag;
  const int start = wrap_column(offset, p.width());
  const int first = std::min(window_width, p.width() - start);
  for (int y = 0; y < p.height(); ++y) {
    const Scalar* row = p.values().data() + y * p.row_stride();
    Scalar* dst = out.values().data() + y * out.row_stride();
    dst = std::copy(row + Eigen::Index(start) * c, row + Eigen::Index(start + first) * c, dst);
    std::copy(row, row + Eigen::Index(window_width - first) * c, dst);
  }
  return out;
}

/// Abuts windows left to right. Heights and channel counts must agree.
template <typename Scalar>
Latent<Scalar> concat_windows(std::span<const Latent<Scalar>> ws) {
  if (ws.empty()) {
    throw InvalidArgument("concat_windows needs at least one window");
  }
  int total = 0;
  for (const auto& w : ws) {
    if (w.height() != ws.front().height() || w.channels() != ws.front().channels()) {
      throw ShapeMismatch("window " + w.shape_string() + " cannot abut " +
                          ws.front().shape_string());
    }
    total += w.width();
  }
  Latent<Scalar> out(total, ws.front().height(), ws.front().channels());
  out.timestep_tag = ws.front().timestep_tag;
  for (int y = 0; y < out.height(); ++y) {
    Scalar* dst = out.values().data() + y * out.row_stride();
    for (const auto& w : ws) {
      const Scalar* row = w.values().data() + y * w.row_stride();
      dst = std::copy(row, row + w.row_stride(), dst);
    }
  }
  return out;
}

template <typename Scalar>
Latent<Scalar> concat_windows(const std::vector<Latent<Scalar>>& ws) {
  return concat_windows(std::span<const Latent<Scalar>>(ws));
}

// Raw latent dump: "PLAT v1 <width> <height> <channels> [tag]\n" then
// little-endian f32 values in the layout above. The optional tag is a single
// token (the tool writes the config digest there); readers skip it.
void write_plat(std::ostream& out, const PanoramaLatent& p, const std::string& tag = {});
void write_plat(const std::string& path, const PanoramaLatent& p, const std::string& tag = {});
PanoramaLatent read_plat(std::istream& in);
PanoramaLatent read_plat(const std::string& path);

/// FNV-1a over the little-endian bytes of every value.
std::uint64_t digest(const PanoramaLatent& p);

}  // namespace spotdiff
