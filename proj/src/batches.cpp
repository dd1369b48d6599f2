#include "protodiff/batches.hpp"

#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include "protodiff/random.hpp"

namespace protodiff {

std::vector<Batch> balanced_batches(const DatasetManifest& manifest, Split split, const BatchSpec& spec,
                                    std::uint64_t epoch) {
  if (spec.per_class == 0) throw std::invalid_argument("batch per-class count M must be >= 1");
  std::array<std::vector<std::size_t>, 2> members{manifest.indices(split, 0), manifest.indices(split, 1)};
  for (int c = 0; c < 2; ++c) {
    if (members[c].size() < spec.per_class) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(members[c].size()) +
                                  " records in split " + std::string(to_string(split)) + ", fewer than M=" +
                                  std::to_string(spec.per_class));
    }
  }

  std::mt19937_64 rng(mix_seed(spec.seed, epoch));
  const int majority = members[1].size() > members[0].size() ? 1 : 0;
  const int minority = 1 - majority;
  shuffle(std::span<std::size_t>(members[majority]), rng);

  const std::size_t n_batches = members[majority].size() / spec.per_class;
  std::vector<std::size_t> minority_pool;
  std::size_t cursor = 0;
  auto next_minority = [&]() {
    if (cursor == minority_pool.size()) {
      minority_pool = members[minority];
      shuffle(std::span<std::size_t>(minority_pool), rng);
      cursor = 0;
    }
    return minority_pool[cursor++];
  };

  std::vector<Batch> batches(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::array<std::vector<std::size_t>, 2> picked;
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      picked[majority].push_back(members[majority][b * spec.per_class + i]);
      picked[minority].push_back(next_minority());
    }
    auto& batch = batches[b];
    for (int c = 0; c < 2; ++c) {
      for (auto idx : picked[c]) {
        batch.records.push_back(idx);
        batch.labels.push_back(c);
      }
    }
  }
  return batches;
}

}  // namespace protodiff
