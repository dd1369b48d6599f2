#include "protodiff/latent_table.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace protodiff {

void LatentTable::add(LatentRow row) {
  if (rows.empty() && dim == 0) dim = row.values.size();
  if (row.values.size() != dim) {
    throw std::invalid_argument("latent row '" + row.ref + "' has " + std::to_string(row.values.size()) +
                                " values, table dimension is " + std::to_string(dim));
  }
  rows.push_back(std::move(row));
}

void LatentTable::write_csv(const std::filesystem::path& path) const {
  std::unordered_set<std::string> refs;
  for (const auto& r : rows) {
    if (!refs.insert(r.ref).second) throw std::invalid_argument("duplicate latent ref '" + r.ref + "'");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write latent table " + path.string());
  out << "ref,label";
  for (std::size_t j = 0; j < dim; ++j) out << ",z" << j;
  out << '\n';
  char buf[32];
  for (const auto& r : rows) {
    out << r.ref << ',' << r.label;
    for (float v : r.values) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for latent table " + path.string());
}

LatentTable LatentTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("latent table not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("ref,label", 0) != 0) {
    throw std::runtime_error(path.string() + ": expected header 'ref,label,z0,...'");
  }
  LatentTable table;
  table.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    LatentRow row;
    std::string field;
    std::getline(ss, row.ref, ',');
    std::getline(ss, field, ',');
    row.label = std::stoi(field);
    while (std::getline(ss, field, ',')) row.values.push_back(std::stof(field));
    if (row.values.size() != table.dim) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(table.dim) + " latent values");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

SeparationStats separation_stats(const LatentTable& table) {
  std::size_t count[2] = {0, 0};
  for (const auto& r : table.rows) {
    if (r.label != 0 && r.label != 1) throw std::invalid_argument("latent labels must be 0 or 1");
    ++count[r.label];
  }
  if (count[0] < 2 || count[1] < 2) throw std::invalid_argument("separation_stats needs >= 2 rows per class");

  // Unit-normalize once, then all pairs.
  std::vector<std::vector<double>> unit(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& v = table.rows[i].values;
    double n = 0.0;
    for (float x : v) n += static_cast<double>(x) * x;
    n = std::sqrt(n);
    if (!(n > 0.0)) throw std::invalid_argument("zero-norm latent for '" + table.rows[i].ref + "'");
    unit[i].resize(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) unit[i][j] = v[j] / n;
  }

  SeparationStats stats;
  double intra_sum = 0.0, inter_sum = 0.0;
  for (std::size_t i = 0; i < unit.size(); ++i) {
    for (std::size_t k = i + 1; k < unit.size(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < table.dim; ++j) s += unit[i][j] * unit[k][j];
      if (table.rows[i].label == table.rows[k].label) {
        intra_sum += s;
        ++stats.intra_pairs;
      } else {
        inter_sum += s;
        ++stats.inter_pairs;
      }
    }
  }
  stats.intra = intra_sum / static_cast<double>(stats.intra_pairs);
  stats.inter = inter_sum / static_cast<double>(stats.inter_pairs);
  stats.margin = stats.intra - stats.inter;
  return stats;
}

}  // namespace protodiff
