#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "uiess/model.hpp"

namespace uiess {

/// Versioned single-file archive: magic, version, JSON header, then raw little-endian
/// tensor payloads in header order. Serialization is a pure function of the contents,
/// so save -> load -> save reproduces the same bytes.
///
///   bytes 0..7    "UIESSCKP"
///   bytes 8..11   uint32 format version
///   bytes 12..19  uint64 header length L
///   next L bytes  JSON header {"meta": {...}, "tensors": [{"name", "dtype", "shape"}, ...]}
///   remainder     tensor data, contiguous, in header order
class Checkpoint {
 public:
  static constexpr char kMagic[8] = {'U', 'I', 'E', 'S', 'S', 'C', 'K', 'P'};
  static constexpr uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, const torch::Tensor& tensor);
  bool contains(const std::string& name) const;
  const torch::Tensor& tensor(const std::string& name) const;
  const std::vector<std::pair<std::string, torch::Tensor>>& tensors() const { return tensors_; }

  std::string serialize() const;
  static Checkpoint parse(const std::string& bytes);

  /// Atomic (temp file + rename).
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> tensors_;
};

/// Stores every model parameter under "model.<parameter name>" plus the config echo.
void store_model(Checkpoint& ckpt, const UiessModelImpl& model);
/// Builds a model from the config echo and copies parameters in; every parameter must be present.
UiessModel restore_model(const Checkpoint& ckpt);
UiessModel load_model(const std::filesystem::path& path);

/// 16-hex-digit FNV-1a digest of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace uiess
