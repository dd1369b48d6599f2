#include "protodiff/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "protodiff/batches.hpp"
#include "protodiff/ddim.hpp"
#include "protodiff/inference.hpp"
#include "protodiff/objectives.hpp"

namespace protodiff {

namespace fs = std::filesystem;
using nlohmann::json;

json EpochMetrics::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"epoch", epoch},     {"phase", phase},         {"l_diff", l_diff},   {"l_contrast", l_contrast},
          {"l_pred", l_pred},   {"masked", masked},       {"train_acc", train_acc}, {"val_acc", opt(val_acc)},
          {"recon_mse", opt(recon_mse)}, {"wall_time", wall_time}};
}

EpochMetrics EpochMetrics::from_json(const json& doc) {
  EpochMetrics m;
  m.epoch = doc.at("epoch").get<int>();
  m.phase = doc.at("phase").get<std::string>();
  m.l_diff = doc.at("l_diff").get<double>();
  m.l_contrast = doc.at("l_contrast").get<double>();
  m.l_pred = doc.at("l_pred").get<double>();
  m.masked = doc.value("masked", std::vector<std::string>{});
  m.train_acc = doc.at("train_acc").get<double>();
  if (!doc.at("val_acc").is_null()) m.val_acc = doc.at("val_acc").get<double>();
  if (!doc.at("recon_mse").is_null()) m.recon_mse = doc.at("recon_mse").get<double>();
  m.wall_time = doc.value("wall_time", 0.0);
  return m;
}

std::vector<EpochMetrics> read_metrics_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics log not found: " + path.string());
  std::vector<EpochMetrics> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(EpochMetrics::from_json(json::parse(line)));
  }
  return out;
}

namespace {

std::optional<DatasetManifest> maybe_manifest(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_manifest(path);
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d", epoch);
  return buf;
}

}  // namespace

Trainer::Trainer(ExperimentConfig config, fs::path out_dir)
    : config_(std::move(config)),
      out_dir_(std::move(out_dir)),
      schedule_(config_.schedule()),
      generator_(at::make_generator<at::CPUGeneratorImpl>(config_.seed)) {
  config_.validate();
  if (config_.manifest.empty()) throw ConfigError("config key 'manifest' is required for training");
  torch::set_num_threads(config_.num_threads);
  torch::manual_seed(config_.seed);
  model_ = DenoiserModel(config_.model_config());
  model_->train();
  optimizer_ = std::make_unique<torch::optim::Adam>(
      model_->parameters(), torch::optim::AdamOptions(config_.learning_rate).weight_decay(0.0));
  base_manifest_ = load_manifest(config_.manifest);
  warmup_manifest_ = maybe_manifest(config_.warmup_manifest);
  joint_manifest_ = maybe_manifest(config_.joint_manifest);
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ck;
  ck.config = config_;
  ck.epoch = state_.epoch;
  ck.global_step = state_.global_step;
  // Wall time stays out of checkpoints so same-seed runs write identical bytes.
  auto last = state_.last.to_json();
  last.erase("wall_time");
  ck.training_state = {{"best_val_acc", state_.best_val_acc}, {"last", last}};
  const auto& opt_state = optimizer_->state();
  for (const auto& [name, param] : model_->canonical_parameters()) {
    ck.put("param/" + name, param);
    auto it = opt_state.find(param.unsafeGetTensorImpl());
    if (it == opt_state.end()) continue;
    const auto& adam = static_cast<const torch::optim::AdamParamState&>(*it->second);
    ck.put("adam/exp_avg/" + name, adam.exp_avg());
    ck.put("adam/exp_avg_sq/" + name, adam.exp_avg_sq());
    ck.put("adam/step/" + name, torch::tensor({adam.step()}, torch::kInt64));
  }
  ck.put("rng/cpu", generator_.get_state());
  return ck;
}

void Trainer::resume(const fs::path& checkpoint_path) {
  const auto ck = Checkpoint::load(checkpoint_path);
  if (ck.config.model_config().channels() != config_.model_config().channels() ||
      ck.config.latent_dim != config_.latent_dim || ck.config.image_size != config_.image_size) {
    throw std::runtime_error("checkpoint architecture does not match the configuration");
  }
  load_parameters(model_, ck);
  auto& opt_state = optimizer_->state();
  opt_state.clear();
  for (const auto& [name, param] : model_->canonical_parameters()) {
    if (!ck.has("adam/exp_avg/" + name)) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(ck.tensor("adam/step/" + name).item<std::int64_t>());
    s->exp_avg(ck.tensor("adam/exp_avg/" + name).clone());
    s->exp_avg_sq(ck.tensor("adam/exp_avg_sq/" + name).clone());
    opt_state[param.unsafeGetTensorImpl()] = std::move(s);
  }
  generator_.set_state(ck.tensor("rng/cpu"));
  state_.epoch = ck.epoch;
  state_.global_step = ck.global_step;
  state_.best_val_acc = ck.training_state.value("best_val_acc", -1.0);
  if (ck.training_state.contains("last") && !ck.training_state["last"].is_null()) {
    state_.last = EpochMetrics::from_json(ck.training_state["last"]);
  }
}

fs::path Trainer::write_checkpoint(const std::string& name) {
  const fs::path path = out_dir_ / "checkpoints" / (name + ".pdck");
  snapshot().save(path);
  return path;
}

EpochMetrics Trainer::run_epoch(int epoch, const DatasetManifest& manifest, bool joint) {
  if (cached_for_ != &manifest) {
    std::vector<std::size_t> all(manifest.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    cached_images_ = load_records(manifest, all, config_.image_size);
    cached_for_ = &manifest;
  }
  model_->train();
  const auto batches =
      balanced_batches(manifest, Split::Train, {static_cast<std::size_t>(config_.M), config_.seed},
                       static_cast<std::uint64_t>(epoch));
  if (batches.empty()) throw std::runtime_error("training split yields no batches");

  const PhaseMask mask = joint ? PhaseMask::joint(config_.freeze_diffusion_in_phase2) : PhaseMask::warmup();
  const auto eps = noise_predictor(model_);
  const auto params = model_->parameters();

  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.phase = joint ? "joint" : "warmup";
  if (!mask.diffusion) metrics.masked.push_back("l_diff");
  if (!mask.contrast) metrics.masked.push_back("l_contrast");
  if (!mask.prediction) metrics.masked.push_back("l_pred");

  double sum_diff = 0.0, sum_contrast = 0.0, sum_pred = 0.0, sum_acc = 0.0;
  for (const auto& batch : batches) {
    std::vector<std::int64_t> rows(batch.records.begin(), batch.records.end());
    const auto x0 = cached_images_.index_select(0, torch::tensor(rows, torch::kLong));
    const auto labels = torch::tensor(std::vector<std::int64_t>(batch.labels.begin(), batch.labels.end()), torch::kLong);
    const auto b = x0.size(0);
    const auto t = torch::randint(1, schedule_.steps() + 1, {b}, generator_, torch::TensorOptions().dtype(torch::kLong));
    const auto noise = torch::randn(x0.sizes(), generator_, torch::TensorOptions().dtype(torch::kFloat32));

    const auto z = model_->encode_semantic(x0);
    torch::Tensor l_diff, l_contrast, l_pred;
    if (mask.diffusion) l_diff = diffusion_loss(eps, x0, t, noise, z, schedule_);
    if (joint) {
      const auto m = static_cast<std::int64_t>(config_.M);
      l_contrast = contrastive_loss(z.slice(0, 0, m), z.slice(0, m, 2 * m), config_.tau);
      l_pred = prediction_loss(batch_soft_probabilities(z, labels, config_.K, config_.tau_pred), labels);
    }

    torch::Tensor total;
    try {
      total = total_loss(l_diff, l_contrast, l_pred, mask, config_.loss_weights());
    } catch (const DivergenceError& e) {
      const auto path = write_checkpoint("last_good");
      throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            "; last good checkpoint: " + path.string());
    }
    optimizer_->zero_grad();
    total.backward();
    if (config_.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(params, config_.grad_clip);
    optimizer_->step();
    ++state_.global_step;

    if (l_diff.defined()) sum_diff += l_diff.item<double>();
    if (l_contrast.defined()) sum_contrast += l_contrast.item<double>();
    if (l_pred.defined()) sum_pred += l_pred.item<double>();
    const auto hard = batch_hard_predictions(z, labels, config_.K);
    sum_acc += hard.eq(labels).to(torch::kFloat64).mean().item<double>();
  }
  const double n = static_cast<double>(batches.size());
  metrics.l_diff = sum_diff / n;
  metrics.l_contrast = sum_contrast / n;
  metrics.l_pred = sum_pred / n;
  metrics.train_acc = sum_acc / n;
  return metrics;
}

void Trainer::validate_epoch(EpochMetrics& metrics, const DatasetManifest& manifest) {
  model_->eval();
  const auto val_records = manifest.indices(Split::Val);
  const int size = config_.image_size;
  if (!val_records.empty()) {
    const auto train = encode_split(model_, manifest, Split::Train, size);
    const auto index = build_prototype_index(manifest, train);
    const auto val = encode_split(model_, manifest, Split::Val, size);
    if (static_cast<std::size_t>(config_.K) <= index.size()) {
      metrics.val_acc = evaluate_split(manifest, Split::Val, index, val, static_cast<std::size_t>(config_.K),
                                       config_.tau_pred)
                            .accuracy;
    }
  }
  if (config_.recon_probe_size > 0) {
    auto probe = val_records.empty() ? manifest.indices(Split::Train) : val_records;
    probe.resize(std::min<std::size_t>(probe.size(), static_cast<std::size_t>(config_.recon_probe_size)));
    if (!probe.empty()) {
      const auto rec = reconstruct(model_, load_records(manifest, probe, size), schedule_, config_.invert_steps,
                                   config_.decode_steps);
      double sum = 0.0;
      for (double v : rec.mse) sum += v;
      metrics.recon_mse = sum / static_cast<double>(rec.mse.size());
    }
  }
  model_->train();
}

TrainResult Trainer::run(std::optional<int> stop_after_epoch) {
  fs::create_directories(out_dir_ / "checkpoints");
  config_.save(out_dir_ / "config.json");
  TrainResult result;
  result.metrics_log = out_dir_ / "metrics.jsonl";

  // Keep only log lines up to the resumed epoch.
  std::vector<std::string> kept;
  if (fs::exists(result.metrics_log)) {
    std::ifstream in(result.metrics_log);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && json::parse(line).at("epoch").get<int>() <= state_.epoch) kept.push_back(line);
    }
  }
  {
    std::ofstream out(result.metrics_log, std::ios::binary | std::ios::trunc);
    for (const auto& l : kept) out << l << '\n';
  }

  const int total_epochs = config_.warmup_epochs + config_.joint_epochs;
  const int last_epoch = stop_after_epoch ? std::min(*stop_after_epoch, total_epochs) : total_epochs;
  const auto started = std::chrono::steady_clock::now();

  for (int epoch = state_.epoch + 1; epoch <= last_epoch; ++epoch) {
    const bool joint = epoch > config_.warmup_epochs;
    const DatasetManifest& manifest =
        joint ? (joint_manifest_ ? *joint_manifest_ : *base_manifest_)
              : (warmup_manifest_ ? *warmup_manifest_ : *base_manifest_);
    auto metrics = run_epoch(epoch, manifest, joint);
    if (config_.eval_every > 0 && (epoch % config_.eval_every == 0 || epoch == total_epochs)) {
      validate_epoch(metrics, *base_manifest_);
    }
    metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    state_.epoch = epoch;
    state_.last = metrics;
    if (metrics.val_acc && *metrics.val_acc > state_.best_val_acc) state_.best_val_acc = *metrics.val_acc;

    {
      std::ofstream out(result.metrics_log, std::ios::binary | std::ios::app);
      out << metrics.to_json().dump() << '\n';
    }
    std::cerr << "epoch " << epoch << "/" << total_epochs << " [" << metrics.phase << "] l_diff=" << metrics.l_diff
              << " l_contrast=" << metrics.l_contrast << " l_pred=" << metrics.l_pred
              << " train_acc=" << metrics.train_acc;
    if (metrics.val_acc) std::cerr << " val_acc=" << *metrics.val_acc;
    if (metrics.recon_mse) std::cerr << " recon_mse=" << *metrics.recon_mse;
    std::cerr << '\n';
    result.history.push_back(metrics);

    const bool cadence = config_.checkpoint_every > 0 && epoch % config_.checkpoint_every == 0;
    const bool boundary = epoch == config_.warmup_epochs && config_.joint_epochs > 0;
    if (cadence || boundary) write_checkpoint(epoch_name(epoch));
  }

  result.final_checkpoint = out_dir_ / "final.pdck";
  snapshot().save(result.final_checkpoint);
  return result;
}

TrainResult train(const ExperimentConfig& config, const fs::path& out_dir,
                  const std::optional<fs::path>& resume_from) {
  Trainer trainer(config, out_dir);
  if (resume_from) trainer.resume(*resume_from);
  return trainer.run();
}

}  // namespace protodiff
