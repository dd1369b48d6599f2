#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace protodiff {

/// a.b / (|a||b|), accumulated in double. Throws on zero-norm or
/// mismatched inputs.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct Neighbor {
  std::size_t id = 0;  // row of the prototype index
  double similarity = 0.0;
  int label = 0;
};

struct Prediction {
  int label = 0;
  std::vector<std::size_t> neighbor_ids;  // descending similarity
  std::vector<double> similarities;
  std::vector<int> neighbor_labels;
  std::array<double, 2> soft_probabilities{0.5, 0.5};
};

/// Training-set latents with labels and image references. Immutable once
/// built; a prototype's identifier is its row number.
class PrototypeIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  PrototypeIndex(std::vector<float> latents, std::size_t dim, std::vector<int> labels,
                 std::vector<std::string> image_refs);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const float> latent(std::size_t id) const { return {latents_.data() + id * dim_, dim_}; }
  int label(std::size_t id) const { return labels_[id]; }
  const std::string& image_ref(std::size_t id) const { return refs_[id]; }
  double norm(std::size_t id) const { return norms_[id]; }
  const std::vector<float>& latents() const { return latents_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& image_refs() const { return refs_; }

  /// Top-k by cosine similarity; ties broken by ascending id. `exclude`
  /// removes one row from the pool.
  std::vector<Neighbor> nearest(std::span<const float> query, std::size_t k,
                                std::optional<std::size_t> exclude = std::nullopt) const;

  /// Binary layout (little-endian), see docs/formats.md.
  void save(const std::filesystem::path& path) const;
  static PrototypeIndex load(const std::filesystem::path& path);

 private:
  std::vector<float> latents_;
  std::size_t dim_;
  std::vector<int> labels_;
  std::vector<std::string> refs_;
  std::vector<double> norms_;
};

/// p(c) = sum_{j: y_j = c} exp(s_j / tau) / sum_j exp(s_j / tau), computed
/// with max subtraction.
std::array<double, 2> soft_class_probabilities(std::span<const Neighbor> neighbors, double tau_pred);

/// Mode of the K neighbour labels. An even-K tie goes to the label of the
/// most similar neighbour.
int mode_label(std::span<const Neighbor> neighbors);

Prediction knn_predict(std::span<const float> query, const PrototypeIndex& index, std::size_t k,
                       std::optional<std::size_t> exclude = std::nullopt, double tau_pred = 0.1);

}  // namespace protodiff
