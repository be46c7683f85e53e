#include "uiess/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "uiess/errors.hpp"
#include "uiess/kvfile.hpp"

namespace uiess {

namespace {

std::string dtype_name(torch::Dtype t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw UsageError("checkpoint: unsupported tensor dtype");
  }
}

torch::Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  throw DataError("checkpoint: unknown dtype " + s);
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("checkpoint truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void Checkpoint::add(const std::string& name, const torch::Tensor& tensor) {
  if (contains(name)) throw UsageError("checkpoint: duplicate tensor " + name);
  tensors_.emplace_back(name, tensor.detach().to(torch::kCPU).contiguous().clone());
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors_) {
    if (n == name) return true;
  }
  return false;
}

const torch::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors_) {
    if (n == name) return t;
  }
  throw DataError("checkpoint: missing tensor " + name);
}

std::string Checkpoint::serialize() const {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : tensors_) {
    header["tensors"].push_back({{"name", name}, {"dtype", dtype_name(t.scalar_type())}, {"shape", t.sizes().vec()}});
  }
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kVersion);
  put<uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, t] : tensors_) {
    out.append(static_cast<const char*>(t.data_ptr()), t.numel() * t.element_size());
  }
  return out;
}

Checkpoint Checkpoint::parse(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  size_t pos = sizeof(kMagic);
  const auto version = take<uint32_t>(bytes, pos);
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = take<uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw DataError("checkpoint truncated");
  const auto header = nlohmann::json::parse(bytes.substr(pos, header_len));
  pos += header_len;

  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, parse_dtype(entry.at("dtype").get<std::string>()));
    const size_t nbytes = t.numel() * t.element_size();
    if (pos + nbytes > bytes.size()) throw DataError("checkpoint truncated");
    std::memcpy(t.data_ptr(), bytes.data() + pos, nbytes);
    pos += nbytes;
    ckpt.tensors_.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  if (pos != bytes.size()) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  return parse(read_file(path));
}

void store_model(Checkpoint& ckpt, const UiessModelImpl& model) {
  ckpt.meta["model_config"] = model.config().to_json();
  for (const auto& item : model.named_parameters()) ckpt.add("model." + item.key(), item.value());
}

UiessModel restore_model(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model_config")) throw DataError("checkpoint lacks a model config");
  UiessModel model(ModelConfig::from_json(ckpt.meta.at("model_config")));
  torch::NoGradGuard guard;
  for (auto& item : model->named_parameters()) {
    const auto& name = item.key();
    auto& p = item.value();
    const auto& src = ckpt.tensor("model." + name);
    if (src.sizes() != p.sizes()) throw DataError("checkpoint: shape mismatch for " + name);
    p.copy_(src);
  }
  return model;
}

UiessModel load_model(const std::filesystem::path& path) { return restore_model(Checkpoint::load(path)); }

std::string file_digest(const std::filesystem::path& path) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : read_file(path)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace uiess
