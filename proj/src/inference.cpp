#include "protodiff/inference.hpp"

#include <stdexcept>
#include <unordered_map>

namespace protodiff {

namespace fs = std::filesystem;
using nlohmann::json;

torch::Tensor image_to_tensor(const GrayImage& image) {
  return torch::from_blob(const_cast<float*>(image.pixels.data()), {1, 1, image.height, image.width}, torch::kFloat32)
      .clone();
}

torch::Tensor images_to_tensor(std::span<const GrayImage> images) {
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) parts.push_back(image_to_tensor(img));
  return torch::cat(parts, 0);
}

GrayImage tensor_to_image(const torch::Tensor& t) {
  auto flat = t.detach().to(torch::kCPU).to(torch::kFloat32).contiguous();
  while (flat.dim() > 2) {
    if (flat.size(0) != 1) throw std::invalid_argument("tensor_to_image: expected a single image");
    flat = flat.squeeze(0);
  }
  GrayImage image(static_cast<int>(flat.size(1)), static_cast<int>(flat.size(0)));
  std::memcpy(image.pixels.data(), flat.data_ptr<float>(), image.size() * sizeof(float));
  return image;
}

torch::Tensor load_records(const DatasetManifest& manifest, std::span<const std::size_t> records, int image_size) {
  auto out = torch::empty({static_cast<std::int64_t>(records.size()), 1, image_size, image_size}, torch::kFloat32);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto img = load_image(manifest.resolve(manifest.records.at(records[i])), image_size);
    std::memcpy(out[static_cast<std::int64_t>(i)].data_ptr<float>(), img.pixels.data(), img.size() * sizeof(float));
  }
  return out;
}

torch::Tensor encode_batch(DenoiserModel& model, const torch::Tensor& images, std::int64_t chunk) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (std::int64_t start = 0; start < images.size(0); start += chunk) {
    const auto end = std::min(images.size(0), start + chunk);
    parts.push_back(model->encode_semantic(images.slice(0, start, end)));
  }
  if (parts.empty()) return torch::empty({0, model->config().latent_dim});
  return torch::cat(parts, 0).to(torch::kFloat32).contiguous();
}

std::vector<float> latent_row(const torch::Tensor& latents, std::int64_t row) {
  auto r = latents[row].to(torch::kFloat32).contiguous();
  return std::vector<float>(r.data_ptr<float>(), r.data_ptr<float>() + r.numel());
}

EncodedSplit encode_split(DenoiserModel& model, const DatasetManifest& manifest, Split split, int image_size) {
  EncodedSplit out;
  out.records = manifest.indices(split);
  out.latents = encode_batch(model, load_records(manifest, out.records, image_size));
  return out;
}

PrototypeIndex build_prototype_index(const DatasetManifest& manifest, const EncodedSplit& train) {
  if (train.records.empty()) throw std::invalid_argument("empty index");
  std::vector<float> latents(train.latents.data_ptr<float>(), train.latents.data_ptr<float>() + train.latents.numel());
  std::vector<int> labels;
  std::vector<std::string> refs;
  for (auto r : train.records) {
    labels.push_back(manifest.records[r].label);
    refs.push_back(manifest.records[r].path);
  }
  return PrototypeIndex(std::move(latents), static_cast<std::size_t>(train.latents.size(1)), std::move(labels),
                        std::move(refs));
}

void load_parameters(DenoiserModel& model, const Checkpoint& checkpoint) {
  torch::NoGradGuard no_grad;
  for (auto& [name, param] : model->canonical_parameters()) {
    const auto& stored = checkpoint.tensor("param/" + name);
    if (!stored.sizes().equals(param.sizes())) {
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " + c10::str(stored.sizes()) +
                               ", model expects " + c10::str(param.sizes()));
    }
    param.copy_(stored);
  }
}

LoadedModel load_model(const fs::path& checkpoint_path) {
  const auto ck = Checkpoint::load(checkpoint_path);
  LoadedModel loaded;
  loaded.config = ck.config;
  loaded.model = DenoiserModel(ck.config.model_config());
  load_parameters(loaded.model, ck);
  loaded.model->eval();
  return loaded;
}

Reconstruction reconstruct(DenoiserModel& model, const torch::Tensor& x0, const NoiseSchedule& schedule,
                           int invert_steps, int decode_steps) {
  torch::NoGradGuard no_grad;
  Reconstruction rec;
  rec.x0 = x0;
  rec.z_sem = model->encode_semantic(x0);
  const auto eps = noise_predictor(model);
  rec.x_T = encode_stochastic(eps, x0, rec.z_sem, SamplerPlan::uniform(schedule.steps(), invert_steps), schedule);
  rec.decoded = decode(eps, rec.z_sem, rec.x_T, SamplerPlan::uniform(schedule.steps(), decode_steps), schedule);
  const auto per_image = (rec.decoded.raw - x0).pow(2).flatten(1).mean(1).to(torch::kFloat64).contiguous();
  rec.mse.assign(per_image.data_ptr<double>(), per_image.data_ptr<double>() + per_image.numel());
  return rec;
}

json EvaluationResult::to_json() const {
  json samples_json = json::array();
  for (const auto& s : samples) {
    samples_json.push_back({{"ref", s.ref},
                            {"label", s.label},
                            {"predicted", s.prediction.label},
                            {"neighbor_ids", s.prediction.neighbor_ids},
                            {"neighbor_labels", s.prediction.neighbor_labels},
                            {"similarities", s.prediction.similarities},
                            {"soft_probabilities", s.prediction.soft_probabilities}});
  }
  return {{"split", split},
          {"K", k},
          {"neighbor_pool", "train"},
          {"accuracy", accuracy},
          {"n", samples.size()},
          {"confusion", {{"true0_pred0", confusion[0][0]},
                         {"true0_pred1", confusion[0][1]},
                         {"true1_pred0", confusion[1][0]},
                         {"true1_pred1", confusion[1][1]}}},
          {"predictions", samples_json}};
}

EvaluationResult evaluate_split(const DatasetManifest& manifest, Split split, const PrototypeIndex& index,
                                const EncodedSplit& encoded, std::size_t k, double tau_pred) {
  if (encoded.records.empty()) throw std::invalid_argument("split " + std::string(to_string(split)) + " is empty");
  if (static_cast<std::size_t>(encoded.latents.size(1)) != index.dim()) {
    throw std::invalid_argument("latent dimension does not match the prototype index");
  }
  EvaluationResult result;
  result.split = std::string(to_string(split));
  result.k = k;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < encoded.records.size(); ++i) {
    const auto& record = manifest.records[encoded.records[i]];
    const auto z = latent_row(encoded.latents, static_cast<std::int64_t>(i));
    SamplePrediction sample{record.path, record.label, knn_predict(z, index, k, std::nullopt, tau_pred)};
    correct += sample.prediction.label == record.label ? 1 : 0;
    ++result.confusion[static_cast<std::size_t>(record.label)][static_cast<std::size_t>(sample.prediction.label)];
    result.samples.push_back(std::move(sample));
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(encoded.records.size());
  return result;
}

EvaluationResult evaluate(const fs::path& checkpoint_path, const DatasetManifest& manifest, Split split,
                          std::size_t k) {
  auto loaded = load_model(checkpoint_path);
  const int size = loaded.config.image_size;
  const auto train = encode_split(loaded.model, manifest, Split::Train, size);
  const auto index = build_prototype_index(manifest, train);
  const auto probes = split == Split::Train ? train : encode_split(loaded.model, manifest, split, size);
  return evaluate_split(manifest, split, index, probes, k, loaded.config.tau_pred);
}

LatentTable latent_table(const DatasetManifest& manifest, const EncodedSplit& encoded) {
  LatentTable table;
  table.dim = static_cast<std::size_t>(encoded.latents.size(1));
  for (std::size_t i = 0; i < encoded.records.size(); ++i) {
    const auto& record = manifest.records[encoded.records[i]];
    table.add({record.path, record.label, latent_row(encoded.latents, static_cast<std::int64_t>(i))});
  }
  return table;
}

LatentTable export_latents(const fs::path& checkpoint_path, const DatasetManifest& manifest, Split split,
                           const fs::path& out_path) {
  auto loaded = load_model(checkpoint_path);
  const auto table = latent_table(manifest, encode_split(loaded.model, manifest, split, loaded.config.image_size));
  table.write_csv(out_path);
  return table;
}

std::vector<ExplanationReport> explain_split(DenoiserModel& model, const ExperimentConfig& config,
                                             const DatasetManifest& manifest, Split split,
                                             const PrototypeIndex& index, std::size_t k, const fs::path& out_dir) {
  std::unordered_map<std::string, std::size_t> by_ref;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) by_ref.emplace(manifest.records[i].path, i);
  const int size = config.image_size;
  ImageResolver resolve = [&](const std::string& ref) {
    auto it = by_ref.find(ref);
    if (it == by_ref.end()) return load_image(fs::path(ref).is_absolute() ? fs::path(ref) : manifest.root / ref, size);
    return load_image(manifest.resolve(manifest.records[it->second]), size);
  };

  const auto encoded = encode_split(model, manifest, split, size);
  std::vector<ExplanationReport> reports;
  for (std::size_t i = 0; i < encoded.records.size(); ++i) {
    const auto& record = manifest.records[encoded.records[i]];
    const auto z = latent_row(encoded.latents, static_cast<std::int64_t>(i));
    auto report = explain(z, load_image(manifest.resolve(record), size), index, k, resolve,
                          static_cast<std::size_t>(config.K));
    report.test_ref = record.path;
    report.true_label = record.label;
    render_report(report, out_dir);
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace protodiff
