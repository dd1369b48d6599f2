#include "protodiff/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace protodiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'D', 'C', 'K'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return "f32";
    case torch::kFloat64:
      return "f64";
    case torch::kInt64:
      return "i64";
    case torch::kUInt8:
      return "u8";
    default:
      throw std::runtime_error("checkpoint: unsupported tensor dtype " + std::string(c10::toString(t)));
  }
}

torch::ScalarType dtype_from(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  if (name == "u8") return torch::kUInt8;
  throw std::runtime_error("checkpoint: unknown dtype '" + name + "'");
}

json model_config_json(const ModelConfig& m) {
  return {{"image_size", m.image_size},
          {"base_channels", m.base_channels},
          {"channel_multipliers", m.channel_multipliers},
          {"layers_per_resolution", m.layers_per_resolution},
          {"middle_attention_layers", m.middle_attention_layers},
          {"latent_dim", m.latent_dim},
          {"time_embed_dim", m.time_embed_dim},
          {"group_norm_groups", m.group_norm_groups}};
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.first == name; });
}

const torch::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.first == name) return t.second;
  }
  throw std::runtime_error("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::put(const std::string& name, const torch::Tensor& value) {
  auto copy = value.detach().to(torch::kCPU).contiguous().clone();
  for (auto& t : tensors) {
    if (t.first == name) {
      t.second = copy;
      return;
    }
  }
  tensors.emplace_back(name, copy);
}

void Checkpoint::save(const fs::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");
  auto ordered = tensors;
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  json table = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ordered) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
    table.push_back({{"name", name},
                     {"dtype", dtype_name(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", offset},
                     {"bytes", bytes}});
    offset += bytes;
  }
  json header = {{"format_version", kFormatVersion},
                 {"model_config", model_config_json(config.model_config())},
                 {"experiment_config", config.to_json()},
                 {"epoch", epoch},
                 {"global_step", global_step},
                 {"training_state", training_state},
                 {"tensors", table}};
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, 4);
    const std::uint32_t version = kFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t header_bytes = text.size();
    out.write(reinterpret_cast<const char*>(&header_bytes), sizeof(header_bytes));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ordered) {
      const auto c = t.contiguous();
      out.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.numel() * c.element_size()));
    }
    out.flush();
    if (!out) throw std::runtime_error("write failed for checkpoint " + tmp.string() + " (disk full?)");
  }
  fs::rename(tmp, path);
}

Checkpoint Checkpoint::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a checkpoint file: " + path.string());
  std::uint32_t version = 0;
  std::uint64_t header_bytes = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_bytes), sizeof(header_bytes));
  if (!in || version != kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version " + std::to_string(version));
  }
  std::string text(header_bytes, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_bytes));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path.string());
  const json header = json::parse(text);

  Checkpoint ck;
  ck.config = ExperimentConfig::from_json(header.at("experiment_config"));
  ck.epoch = header.at("epoch").get<int>();
  ck.global_step = header.at("global_step").get<std::int64_t>();
  ck.training_state = header.at("training_state");
  const auto blob_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype").get<std::string>())));
    const auto bytes = entry.at("bytes").get<std::uint64_t>();
    if (bytes != static_cast<std::uint64_t>(t.numel()) * t.element_size()) {
      throw std::runtime_error("checkpoint tensor '" + entry.at("name").get<std::string>() + "' has inconsistent size");
    }
    in.seekg(blob_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("truncated checkpoint blob: " + path.string());
    ck.tensors.emplace_back(entry.at("name").get<std::string>(), t);
  }
  return ck;
}

}  // namespace protodiff
