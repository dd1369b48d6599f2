#include "protodiff/explainer.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace protodiff {

namespace fs = std::filesystem;
using nlohmann::json;

GrayImage difference_map(const GrayImage& test_image, const GrayImage& prototype_image) {
  if (!test_image.same_shape(prototype_image)) {
    throw std::invalid_argument("difference_map: shape mismatch (" + std::to_string(test_image.width) + "x" +
                                std::to_string(test_image.height) + " vs " + std::to_string(prototype_image.width) +
                                "x" + std::to_string(prototype_image.height) + ")");
  }
  GrayImage out(test_image.width, test_image.height);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = test_image.pixels[i] - prototype_image.pixels[i];
  return out;
}

GrayImage render_difference(const GrayImage& signed_map) {
  GrayImage out(signed_map.width, signed_map.height);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = std::min(1.0f, std::fabs(signed_map.pixels[i]));
  return out;
}

ExplanationReport explain(std::span<const float> z, const GrayImage& test_image, const PrototypeIndex& index,
                          std::size_t k, const ImageResolver& resolve, std::size_t predict_k) {
  if (k == 0) throw std::invalid_argument("explain: k must be >= 1");
  if (k > index.size()) {
    throw std::invalid_argument("explain: k=" + std::to_string(k) + " exceeds index size " + std::to_string(index.size()));
  }
  if (z.size() != index.dim()) throw std::invalid_argument("explain: latent dimension does not match index");
  const std::size_t vote_k = predict_k == 0 ? k : predict_k;

  ExplanationReport report;
  const auto voters = index.nearest(z, std::max(vote_k, k));
  report.predicted_label = mode_label(std::span<const Neighbor>(voters).first(vote_k));
  report.test_image = test_image;
  for (std::size_t r = 0; r < k; ++r) {
    const auto& n = voters[r];
    report.prototypes.push_back({r + 1, n.id, index.image_ref(n.id), n.label, n.similarity});
    report.prototype_images.push_back(resolve(index.image_ref(n.id)));
  }
  report.difference = difference_map(test_image, report.prototype_images.front());
  return report;
}

std::string report_id(const std::string& test_ref) {
  std::string id = fs::path(test_ref).replace_extension().string();
  for (auto& c : id) {
    if (c == '/' || c == '\\' || c == '.' || c == ':') c = '_';
  }
  while (!id.empty() && id.front() == '_') id.erase(id.begin());
  return id.empty() ? "report" : id;
}

void render_report(ExplanationReport& report, const fs::path& out_dir) {
  const GrayImage& test = report.test_image;
  if (test.width <= 0) throw std::invalid_argument("render_report: report has no test image");
  for (const auto& p : report.prototype_images) {
    if (!p.same_shape(test)) throw std::invalid_argument("render_report: prototype image shape mismatch");
  }
  const std::size_t tiles = report.prototype_images.size() + 2;
  GrayImage grid(static_cast<int>(tiles) * test.width, test.height);
  auto blit = [&](const GrayImage& tile, std::size_t slot) {
    for (int y = 0; y < tile.height; ++y) {
      for (int x = 0; x < tile.width; ++x) grid.at(static_cast<int>(slot) * test.width + x, y) = tile.at(x, y);
    }
  };
  blit(test, 0);
  for (std::size_t i = 0; i < report.prototype_images.size(); ++i) blit(report.prototype_images[i], i + 1);
  blit(render_difference(report.difference), tiles - 1);

  const fs::path dir = out_dir / report_id(report.test_ref);
  fs::create_directories(dir);
  report.grid_path = dir / "grid.png";
  report.json_path = dir / "report.json";
  write_png(report.grid_path, grid);

  json doc;
  doc["test_ref"] = report.test_ref;
  doc["predicted_label"] = report.predicted_label;
  doc["true_label"] = report.true_label ? json(*report.true_label) : json(nullptr);
  json protos = json::array();
  for (const auto& p : report.prototypes) {
    protos.push_back({{"rank", p.rank}, {"id", p.id}, {"image_ref", p.image_ref}, {"label", p.label},
                      {"similarity", p.similarity}});
  }
  doc["prototypes"] = protos;
  doc["difference_map"] = {{"width", report.difference.width},
                           {"height", report.difference.height},
                           {"values", report.difference.pixels}};
  doc["grid"] = "grid.png";
  std::ofstream out(report.json_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + report.json_path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace protodiff
