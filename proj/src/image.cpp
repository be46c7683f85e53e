#include "uiess/image.hpp"

#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "uiess/errors.hpp"

namespace uiess {

namespace {

torch::Tensor to_chw_double(const torch::Tensor& t) {
  torch::Tensor x = t;
  if (x.dim() == 4) {
    if (x.size(0) != 1) throw UsageError("image tensor batch dimension must be 1");
    x = x.squeeze(0);
  }
  if (x.dim() != 3 || x.size(0) != 3) throw UsageError("image tensor must be 3xHxW");
  if (!x.is_floating_point()) throw UsageError("image tensor must be floating point");
  return x.detach().to(torch::kCPU, torch::kFloat64).contiguous().clone();
}

void check_sides(int64_t h, int64_t w) {
  if (h < Image::kMinSide || w < Image::kMinSide) {
    throw UsageError("image sides must be >= 8, got " + std::to_string(h) + "x" + std::to_string(w));
  }
}

// CV_8UC3 BGR -> Image.
Image from_mat(const cv::Mat& bgr8) {
  cv::Mat rgb;
  cv::cvtColor(bgr8, rgb, cv::COLOR_BGR2RGB);
  const int64_t h = rgb.rows;
  const int64_t w = rgb.cols;
  check_sides(h, w);
  auto hwc = torch::from_blob(rgb.data, {h, w, 3}, torch::kUInt8).to(torch::kFloat64) / 255.0;
  return Image::from_tensor(hwc.permute({2, 0, 1}));
}

cv::Mat to_mat(const Image& image) {
  auto hwc = (image.tensor() * 255.0).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_8UC3, hwc.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

Image Image::from_tensor(const torch::Tensor& chw) {
  auto data = to_chw_double(chw);
  check_sides(data.size(1), data.size(2));
  if (!torch::isfinite(data).all().item<bool>()) throw UsageError("image contains non-finite values");
  if (data.min().item<double>() < 0.0 || data.max().item<double>() > 1.0) {
    throw UsageError("image values must lie in [0, 1]");
  }
  return Image(std::move(data));
}

Image Image::from_tensor_clamped(const torch::Tensor& chw) {
  auto data = torch::nan_to_num(to_chw_double(chw), 0.0, 1.0, 0.0).clamp(0.0, 1.0);
  check_sides(data.size(1), data.size(2));
  return Image(std::move(data));
}

Image Image::filled(int64_t height, int64_t width, const Rgb& rgb) {
  check_sides(height, width);
  auto data = torch::empty({3, height, width}, torch::kFloat64);
  for (int c = 0; c < 3; ++c) data[c].fill_(rgb[c]);
  return from_tensor(data);
}

torch::Tensor Image::batch(torch::Dtype dtype) const { return data_.unsqueeze(0).to(dtype).contiguous(); }

double Image::at(int64_t channel, int64_t row, int64_t col) const {
  return data_.accessor<double, 3>()[channel][row][col];
}

DepthMap DepthMap::from_tensor(const torch::Tensor& hw) {
  if (hw.dim() != 2) throw UsageError("depth map must be HxW");
  auto data = hw.detach().to(torch::kCPU, torch::kFloat64).contiguous().clone();
  if (!torch::isfinite(data).all().item<bool>()) throw UsageError("depth contains non-finite values");
  if (data.numel() > 0 && data.min().item<double>() < 0.0) throw UsageError("depth must be non-negative");
  return DepthMap(std::move(data));
}

bool identical(const Image& a, const Image& b) {
  return a.height() == b.height() && a.width() == b.width() && torch::equal(a.tensor(), b.tensor());
}

Image quantize8(const Image& image) {
  return Image::from_tensor((image.tensor() * 255.0).round().clamp(0, 255) / 255.0);
}

Image read_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot read image: " + path.string());
  return from_mat(m);
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_mat(image))) throw DataError("cannot write image: " + path.string());
}

std::vector<uint8_t> encode_png(const Image& image) {
  std::vector<uint8_t> out;
  if (!cv::imencode(".png", to_mat(image), out)) throw DataError("png encoding failed");
  return out;
}

Image decode_image(std::span<const uint8_t> bytes) {
  if (bytes.empty()) throw DataError("empty image payload");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<uint8_t*>(bytes.data()));
  cv::Mat m = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("undecodable image payload");
  return from_mat(m);
}

DepthMap read_depth_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH);
  if (m.empty() || m.type() != CV_16UC1) throw DataError("cannot read 16-bit depth image: " + path.string());
  auto t = torch::from_blob(m.data, {int64_t{m.rows}, int64_t{m.cols}}, torch::kInt16).to(torch::kInt32).bitwise_and(0xFFFF);
  return DepthMap::from_tensor(t.to(torch::kFloat64) / kDepthScale);
}

void write_depth_png(const DepthMap& depth, const std::filesystem::path& path) {
  auto q = (depth.tensor() * kDepthScale).round().clamp(0, 65535).to(torch::kInt32).contiguous();
  cv::Mat m(static_cast<int>(depth.height()), static_cast<int>(depth.width()), CV_16UC1);
  auto acc = q.accessor<int32_t, 2>();
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) m.at<uint16_t>(r, c) = static_cast<uint16_t>(acc[r][c]);
  }
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write depth image: " + path.string());
}

}  // namespace uiess
