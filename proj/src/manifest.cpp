#include "protodiff/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace protodiff {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  return std::nullopt;
}

fs::path DatasetManifest::resolve(const ManifestRecord& record) const {
  fs::path p(record.path);
  return p.is_absolute() ? p : root / p;
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> DatasetManifest::indices(Split split, int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split && records[i].label == label) out.push_back(i);
  }
  return out;
}

std::array<std::array<std::size_t, 2>, 3> DatasetManifest::class_counts() const {
  std::array<std::array<std::size_t, 2>, 3> counts{};
  for (const auto& r : records) ++counts[static_cast<std::size_t>(r.split)][static_cast<std::size_t>(r.label)];
  return counts;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw ManifestError(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("manifest not found: " + path.string());

  DatasetManifest manifest;
  manifest.root = path.has_parent_path() ? path.parent_path() : fs::path(".");

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::unordered_map<std::string, std::pair<Split, std::size_t>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line = line.substr(3);
      if (split_fields(line) != std::vector<std::string>{"path", "label", "split"}) {
        fail(path, line_no, "expected header 'path,label,split'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() != 3 || fields[0].empty()) fail(path, line_no, "expected 3 fields 'path,label,split'");

    ManifestRecord record;
    record.path = fields[0];
    if (fields[1] == "0") {
      record.label = 0;
    } else if (fields[1] == "1") {
      record.label = 1;
    } else {
      fail(path, line_no, "label must be 0 or 1, got '" + fields[1] + "'");
    }
    auto split = parse_split(fields[2]);
    if (!split) fail(path, line_no, "split must be train, val or test, got '" + fields[2] + "'");
    record.split = *split;

    if (auto it = seen.find(record.path); it != seen.end()) {
      if (it->second.first != record.split) {
        fail(path, line_no,
             "split leakage: '" + record.path + "' also listed in " + std::string(to_string(it->second.first)) +
                 " at line " + std::to_string(it->second.second));
      }
      fail(path, line_no, "duplicate path '" + record.path + "'");
    }
    seen.emplace(record.path, std::make_pair(record.split, line_no));

    std::error_code ec;
    const fs::path resolved = fs::path(record.path).is_absolute() ? fs::path(record.path) : manifest.root / record.path;
    if (!fs::is_regular_file(resolved, ec)) fail(path, line_no, "dangling image path '" + record.path + "'");

    manifest.records.push_back(std::move(record));
  }
  if (!header_seen) throw ManifestError(path.string() + ": empty manifest (missing header)");
  return manifest;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << "path,label,split\n";
  for (const auto& r : records) out << r.path << ',' << r.label << ',' << to_string(r.split) << '\n';
  if (!out) throw ManifestError("write failed for manifest " + path.string());
}

}  // namespace protodiff
