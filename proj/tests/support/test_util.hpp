#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "uiess/image.hpp"
#include "uiess/model.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("uiess_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline uiess::Image random_image(int64_t h, int64_t w, uint64_t seed) {
  torch::manual_seed(seed);
  return uiess::Image::from_tensor(torch::rand({3, h, w}, torch::kFloat64));
}

/// Small architecture so model tests stay fast.
inline uiess::ModelConfig tiny_config() {
  uiess::ModelConfig c;
  c.base_filters = 8;
  c.content_channels = 16;
  c.num_content_resblocks = 1;
  c.generator_resblocks = 1;
  c.style_channels = 16;
  c.adain_param_net_hidden = 32;
  c.transform_hidden = 16;
  return c;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace testutil
