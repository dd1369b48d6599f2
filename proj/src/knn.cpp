#include "protodiff/knn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace protodiff {

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double l2(std::span<const float> a) { return std::sqrt(dot(a, a)); }

constexpr char kIndexMagic[4] = {'P', 'D', 'I', 'X'};

template <typename T>
void put(std::ofstream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "index IO assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated prototype index " + path.string());
  return value;
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const double na = l2(a), nb = l2(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm latent");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

PrototypeIndex::PrototypeIndex(std::vector<float> latents, std::size_t dim, std::vector<int> labels,
                               std::vector<std::string> image_refs)
    : latents_(std::move(latents)), dim_(dim), labels_(std::move(labels)), refs_(std::move(image_refs)) {
  if (labels_.empty()) throw std::invalid_argument("empty index");
  if (dim_ == 0) throw std::invalid_argument("prototype index dimension must be positive");
  if (latents_.size() != labels_.size() * dim_ || refs_.size() != labels_.size()) {
    throw std::invalid_argument("prototype index length mismatch: " + std::to_string(latents_.size()) +
                                " latent values, " + std::to_string(labels_.size()) + " labels, " +
                                std::to_string(refs_.size()) + " refs, dim " + std::to_string(dim_));
  }
  norms_.resize(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != 0 && labels_[i] != 1) throw std::invalid_argument("prototype labels must be 0 or 1");
    norms_[i] = l2(latent(i));
    if (!(norms_[i] > 0.0) || !std::isfinite(norms_[i])) {
      throw std::invalid_argument("zero-norm or non-finite latent for prototype '" + refs_[i] + "'");
    }
  }
}

std::vector<Neighbor> PrototypeIndex::nearest(std::span<const float> query, std::size_t k,
                                              std::optional<std::size_t> exclude) const {
  if (query.size() != dim_) {
    throw std::invalid_argument("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                                std::to_string(dim_));
  }
  const std::size_t usable = size() - (exclude && *exclude < size() ? 1 : 0);
  if (k == 0) throw std::invalid_argument("K must be >= 1");
  if (k > usable) {
    throw std::invalid_argument("K=" + std::to_string(k) + " exceeds usable index size " + std::to_string(usable));
  }
  const double qn = l2(query);
  if (!(qn > 0.0)) throw std::invalid_argument("zero-norm query latent");

  std::vector<Neighbor> all;
  all.reserve(usable);
  for (std::size_t i = 0; i < size(); ++i) {
    if (exclude && *exclude == i) continue;
    const double s = std::clamp(dot(query, latent(i)) / (qn * norms_[i]), -1.0, 1.0);
    all.push_back({i, s, labels_[i]});
  }
  auto better = [](const Neighbor& x, const Neighbor& y) {
    return x.similarity != y.similarity ? x.similarity > y.similarity : x.id < y.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

void PrototypeIndex::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write prototype index " + path.string());
  out.write(kIndexMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  out.write(reinterpret_cast<const char*>(latents_.data()), static_cast<std::streamsize>(latents_.size() * sizeof(float)));
  for (int label : labels_) put<std::uint8_t>(out, static_cast<std::uint8_t>(label));
  for (const auto& ref : refs_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ref.size()));
    out.write(ref.data(), static_cast<std::streamsize>(ref.size()));
  }
  if (!out) throw std::runtime_error("write failed for prototype index " + path.string());
}

PrototypeIndex PrototypeIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("prototype index not found: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kIndexMagic, 4) != 0) throw std::runtime_error("not a prototype index: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported prototype index version " + std::to_string(version));
  }
  const auto n = get<std::uint64_t>(in, path);
  const auto dim = get<std::uint32_t>(in, path);
  std::vector<float> latents(n * dim);
  in.read(reinterpret_cast<char*>(latents.data()), static_cast<std::streamsize>(latents.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated prototype index " + path.string());
  std::vector<int> labels(n);
  for (auto& label : labels) label = get<std::uint8_t>(in, path);
  std::vector<std::string> refs(n);
  for (auto& ref : refs) {
    ref.resize(get<std::uint32_t>(in, path));
    in.read(ref.data(), static_cast<std::streamsize>(ref.size()));
    if (!in) throw std::runtime_error("truncated prototype index " + path.string());
  }
  return PrototypeIndex(std::move(latents), dim, std::move(labels), std::move(refs));
}

std::array<double, 2> soft_class_probabilities(std::span<const Neighbor> neighbors, double tau_pred) {
  if (neighbors.empty()) throw std::invalid_argument("soft_class_probabilities: empty neighbour list");
  if (!(tau_pred > 0.0)) throw std::invalid_argument("tau_pred must be positive");
  double top = neighbors.front().similarity;
  for (const auto& n : neighbors) top = std::max(top, n.similarity);
  std::array<double, 2> mass{0.0, 0.0};
  for (const auto& n : neighbors) mass[static_cast<std::size_t>(n.label)] += std::exp((n.similarity - top) / tau_pred);
  const double total = mass[0] + mass[1];
  return {mass[0] / total, mass[1] / total};
}

int mode_label(std::span<const Neighbor> neighbors) {
  if (neighbors.empty()) throw std::invalid_argument("mode_label: empty neighbour list");
  std::size_t ones = 0;
  for (const auto& n : neighbors) ones += n.label == 1 ? 1 : 0;
  const std::size_t zeros = neighbors.size() - ones;
  if (ones == zeros) return neighbors.front().label;
  return ones > zeros ? 1 : 0;
}

Prediction knn_predict(std::span<const float> query, const PrototypeIndex& index, std::size_t k,
                       std::optional<std::size_t> exclude, double tau_pred) {
  const auto neighbors = index.nearest(query, k, exclude);
  Prediction p;
  p.label = mode_label(neighbors);
  for (const auto& n : neighbors) {
    p.neighbor_ids.push_back(n.id);
    p.similarities.push_back(n.similarity);
    p.neighbor_labels.push_back(n.label);
  }
  p.soft_probabilities = soft_class_probabilities(neighbors, tau_pred);
  return p;
}

}  // namespace protodiff
