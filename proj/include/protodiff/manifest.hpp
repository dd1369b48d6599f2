#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace protodiff {

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestRecord {
  std::string path;  // as written in the CSV, relative to the manifest directory
  int label = 0;
  Split split = Split::Train;
};

/// Validated dataset listing. CSV layout (UTF-8):
///
///   path,label,split
///   class0/img_00000.png,0,train
///
/// Labels are 0 or 1, splits are train/val/test, relative paths resolve
/// against the manifest's directory, and no path may appear twice.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const ManifestRecord& record) const;
  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::size_t> indices(Split split, int label) const;
  /// counts[split][label]
  std::array<std::array<std::size_t, 2>, 3> class_counts() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

}  // namespace protodiff
