#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace uiess {

using Rgb = std::array<double, 3>;

/// RGB image with values in [0, 1], stored as a contiguous 3×H×W float64 tensor.
///
/// Construction validates the invariants (finite, in range, both sides ≥ 8),
/// so any Image instance can be handed to metrics and the model unchecked.
class Image {
 public:
  static constexpr int64_t kMinSide = 8;

  Image() = default;

  /// Accepts 3×H×W or 1×3×H×W of any floating dtype.
  static Image from_tensor(const torch::Tensor& chw);
  /// Like from_tensor, but clamps into [0, 1] first (after replacing NaN by 0).
  static Image from_tensor_clamped(const torch::Tensor& chw);
  static Image filled(int64_t height, int64_t width, const Rgb& rgb);

  int64_t height() const { return data_.defined() ? data_.size(1) : 0; }
  int64_t width() const { return data_.defined() ? data_.size(2) : 0; }
  bool empty() const { return !data_.defined(); }

  const torch::Tensor& tensor() const { return data_; }
  /// 1×3×H×W copy in the requested dtype, for the network.
  torch::Tensor batch(torch::Dtype dtype = torch::kFloat32) const;

  double at(int64_t channel, int64_t row, int64_t col) const;

 private:
  explicit Image(torch::Tensor data) : data_(std::move(data)) {}
  torch::Tensor data_;
};

/// Per-pixel camera distance, non-negative, H×W float64.
class DepthMap {
 public:
  DepthMap() = default;
  static DepthMap from_tensor(const torch::Tensor& hw);

  int64_t height() const { return data_.defined() ? data_.size(0) : 0; }
  int64_t width() const { return data_.defined() ? data_.size(1) : 0; }
  const torch::Tensor& tensor() const { return data_; }

 private:
  explicit DepthMap(torch::Tensor data) : data_(std::move(data)) {}
  torch::Tensor data_;
};

bool identical(const Image& a, const Image& b);

// 8-bit RGB PNG (values rounded to the nearest of 256 levels).
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);
std::vector<uint8_t> encode_png(const Image& image);
/// Decodes PNG or JPEG bytes; throws DataError when undecodable.
Image decode_image(std::span<const uint8_t> bytes);

/// 8-bit quantization applied by write_png, exposed so in-memory pipelines can match disk round trips.
Image quantize8(const Image& image);

// Depth is stored as 16-bit grayscale: stored = round(depth * kDepthScale).
inline constexpr double kDepthScale = 10000.0;
DepthMap read_depth_png(const std::filesystem::path& path);
void write_depth_png(const DepthMap& depth, const std::filesystem::path& path);

}  // namespace uiess
