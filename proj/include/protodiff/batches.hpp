#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "protodiff/manifest.hpp"

namespace protodiff {

struct BatchSpec {
  std::size_t per_class = 8;  // M; a batch holds 2M records
  std::uint64_t seed = 0;
};

/// Record indices into the manifest; the first M belong to class 0, the
/// remaining M to class 1.
struct Batch {
  std::vector<std::size_t> records;
  std::vector<int> labels;
};

/// Class-balanced epoch plan. The epoch length is floor(majority / M); each
/// majority-class record appears at most once, and the minority class is
/// drawn from reshuffled passes over its members, reusing records once
/// exhausted. The plan is a pure function of (manifest, split, spec, epoch).
std::vector<Batch> balanced_batches(const DatasetManifest& manifest, Split split, const BatchSpec& spec,
                                    std::uint64_t epoch);

}  // namespace protodiff
