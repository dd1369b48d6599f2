#include "protodiff/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "protodiff/config.hpp"
#include "protodiff/inference.hpp"
#include "protodiff/synthetic.hpp"
#include "protodiff/trainer.hpp"

namespace protodiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by the subcommands that take an experiment config.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> decode_steps;
  std::optional<int> invert_steps;
};

void apply_flags(ExperimentConfig& config, const ConfigFlags& flags) {
  for (const auto& o : flags.overrides) {
    try {
      config.apply_override(o);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("invalid override: ") + e.what());
    }
  }
  if (flags.seed) config.seed = *flags.seed;
  if (flags.decode_steps) config.decode_steps = *flags.decode_steps;
  if (flags.invert_steps) config.invert_steps = *flags.invert_steps;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

ExperimentConfig load_config(const ConfigFlags& flags) {
  if (flags.config_path.empty()) throw UsageError("--config is required (or set PROTODIFF_CONFIG)");
  if (!fs::exists(flags.config_path)) throw UsageError("--config: file not found: " + flags.config_path);
  ExperimentConfig config;
  try {
    config = ExperimentConfig::load(flags.config_path);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("--config: ") + e.what());
  }
  apply_flags(config, flags);
  return config;
}

Split parse_split_flag(const std::string& name) {
  const auto split = parse_split(name);
  if (!split) throw UsageError("--split must be train, val or test (got '" + name + "')");
  return *split;
}

void write_text(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text << '\n';
    return;
  }
  const fs::path path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + out);
  file << text << '\n';
}

json neighbors_json(const Prediction& p, const PrototypeIndex& index) {
  json out = json::array();
  for (std::size_t i = 0; i < p.neighbor_ids.size(); ++i) {
    out.push_back({{"rank", i + 1},
                   {"id", p.neighbor_ids[i]},
                   {"image_ref", index.image_ref(p.neighbor_ids[i])},
                   {"label", p.neighbor_labels[i]},
                   {"similarity", p.similarities[i]}});
  }
  return out;
}

// Checkpoint-based commands start from the config stored in the checkpoint.
struct Session {
  LoadedModel loaded;
  ExperimentConfig config;
};

Session open_checkpoint(const std::string& path, const ConfigFlags& flags) {
  Session s{load_model(path), {}};
  s.config = s.loaded.config;
  apply_flags(s.config, flags);
  return s;
}

DatasetManifest manifest_for(const std::string& flag, const ExperimentConfig& config) {
  const std::string path = flag.empty() ? config.manifest : flag;
  if (path.empty()) throw UsageError("--manifest is required");
  return load_manifest(path);
}

class QuietScope {
 public:
  explicit QuietScope(bool quiet) {
    if (quiet) saved_ = std::cerr.rdbuf(sink_.rdbuf());
  }
  ~QuietScope() {
    if (saved_) std::cerr.rdbuf(saved_);
  }

 private:
  std::ostringstream sink_;
  std::streambuf* saved_ = nullptr;
};

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Prototype-based image classification with a contrastive diffusion autoencoder", "protodiff"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output on stderr");

  ConfigFlags flags;
  auto add_config_flags = [&](CLI::App* sub, bool with_config) {
    if (with_config) {
      sub->add_option("--config", flags.config_path, "Experiment config (JSON)")->envname("PROTODIFF_CONFIG");
    }
    sub->add_option("--set", flags.overrides, "Config override key=value (repeatable)");
    sub->add_option("--seed", flags.seed, "Override the config seed");
  };

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic two-class ellipse corpus");
  std::string synth_out;
  SyntheticOptions synth_opts;
  std::uint64_t synth_seed = 0;
  std::optional<std::size_t> n_train, n_val, n_test;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n-per-class", synth_opts.n_per_class, "Images per class")->capture_default_str();
  synth->add_option("--size", synth_opts.image_size, "Image side length")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--train", n_train, "Per-class train count (with --val/--test)");
  synth->add_option("--val", n_val, "Per-class val count");
  synth->add_option("--test", n_test, "Per-class test count");

  // train
  auto* train_cmd = app.add_subcommand("train", "Two-phase training");
  std::string train_out, resume_path;
  std::optional<int> stop_after;
  add_config_flags(train_cmd, true);
  train_cmd->add_option("--out", train_out, "Run directory")->required();
  train_cmd->add_option("--resume", resume_path, "Checkpoint to resume from");
  train_cmd->add_option("--stop-after", stop_after, "Stop after this epoch");

  std::string checkpoint, manifest_path, split_name = "test", out_path, image_path;
  std::optional<std::size_t> k_flag;
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    add_config_flags(sub, false);
  };

  auto* eval_cmd = app.add_subcommand("evaluate", "Hard KNN accuracy on a split");
  add_checkpoint(eval_cmd);
  eval_cmd->add_option("--manifest", manifest_path, "Dataset manifest (default: the training manifest)");
  eval_cmd->add_option("--split", split_name, "Split to evaluate")->capture_default_str();
  eval_cmd->add_option("--k", k_flag, "Neighbours (default: config K)");
  eval_cmd->add_option("--out", out_path, "Result JSON (default: stdout)");

  auto* encode_cmd = app.add_subcommand("encode", "Semantic latent of one image");
  add_checkpoint(encode_cmd);
  encode_cmd->add_option("--image", image_path, "Input image")->required();
  encode_cmd->add_option("--out", out_path, "Output JSON (default: stdout)");

  auto* recon_cmd = app.add_subcommand("reconstruct", "Inversion and decoding round trip");
  std::vector<std::string> recon_images;
  std::size_t recon_limit = 8;
  add_checkpoint(recon_cmd);
  recon_cmd->add_option("--image", recon_images, "Input image (repeatable)");
  recon_cmd->add_option("--manifest", manifest_path, "Take images from a manifest split instead");
  recon_cmd->add_option("--split", split_name, "Manifest split")->capture_default_str();
  recon_cmd->add_option("--limit", recon_limit, "Images taken from the manifest")->capture_default_str();
  recon_cmd->add_option("--out", out_path, "Output directory")->required();
  recon_cmd->add_option("--decode-steps", flags.decode_steps, "Decoder substeps");
  recon_cmd->add_option("--invert-steps", flags.invert_steps, "Inversion substeps");

  auto* classify_cmd = app.add_subcommand("classify", "Label one image by its nearest training prototypes");
  add_checkpoint(classify_cmd);
  classify_cmd->add_option("--image", image_path, "Input image")->required();
  classify_cmd->add_option("--manifest", manifest_path, "Manifest whose train split forms the index");
  classify_cmd->add_option("--k", k_flag, "Neighbours (default: config K)");
  classify_cmd->add_option("--out", out_path, "Output JSON (default: stdout)");

  auto* explain_cmd = app.add_subcommand("explain", "Prototype explanations for a split");
  add_checkpoint(explain_cmd);
  explain_cmd->add_option("--manifest", manifest_path, "Dataset manifest");
  explain_cmd->add_option("--split", split_name, "Split to explain")->capture_default_str();
  explain_cmd->add_option("--k", k_flag, "Prototypes per report (default: config explain_k)");
  explain_cmd->add_option("--out", out_path, "Report directory")->required();

  auto* export_cmd = app.add_subcommand("export-latents", "Write semantic latents as CSV");
  add_checkpoint(export_cmd);
  export_cmd->add_option("--manifest", manifest_path, "Dataset manifest");
  export_cmd->add_option("--split", split_name, "Split to export")->capture_default_str();
  export_cmd->add_option("--out", out_path, "CSV path")->required();

  auto* stats_cmd = app.add_subcommand("stats", "Intra/inter class cosine separation of a latent CSV");
  std::string latents_path;
  stats_cmd->add_option("--latents", latents_path, "Latent CSV")->required();
  stats_cmd->add_option("--out", out_path, "Output JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    QuietScope quiet_scope(quiet);
    if (*synth) {
      synth_opts.seed = synth_seed;
      if (n_train || n_val || n_test) {
        if (!(n_train && n_val && n_test)) throw UsageError("--train, --val and --test must be given together");
        synth_opts.splits = SyntheticSplits{*n_train, *n_val, *n_test};
      }
      const auto m = generate_synthetic_dataset(synth_opts, synth_out);
      std::cerr << "wrote " << m.records.size() << " images to " << synth_out << '\n';
    } else if (*train_cmd) {
      const auto config = load_config(flags);
      Trainer trainer(config, train_out);
      if (!resume_path.empty()) trainer.resume(resume_path);
      const auto result = trainer.run(stop_after);
      std::cerr << "final checkpoint: " << result.final_checkpoint.string() << '\n';
    } else if (*eval_cmd) {
      auto s = open_checkpoint(checkpoint, flags);
      const auto manifest = manifest_for(manifest_path, s.config);
      const auto split = parse_split_flag(split_name);
      const int size = s.config.image_size;
      const auto train = encode_split(s.loaded.model, manifest, Split::Train, size);
      const auto index = build_prototype_index(manifest, train);
      const auto probes = split == Split::Train ? train : encode_split(s.loaded.model, manifest, split, size);
      const auto result = evaluate_split(manifest, split, index, probes,
                                         k_flag.value_or(static_cast<std::size_t>(s.config.K)), s.config.tau_pred);
      std::cerr << split_name << " accuracy: " << result.accuracy << '\n';
      write_text(out_path, result.to_json().dump(2));
    } else if (*encode_cmd) {
      auto s = open_checkpoint(checkpoint, flags);
      const auto x = image_to_tensor(load_image(image_path, s.config.image_size));
      const auto z = encode_batch(s.loaded.model, x);
      write_text(out_path, json({{"image", image_path}, {"z_sem", latent_row(z, 0)}}).dump());
    } else if (*recon_cmd) {
      auto s = open_checkpoint(checkpoint, flags);
      const int size = s.config.image_size;
      std::vector<std::string> refs;
      std::vector<GrayImage> images;
      if (!recon_images.empty()) {
        for (const auto& p : recon_images) {
          refs.push_back(p);
          images.push_back(load_image(p, size));
        }
      } else if (!manifest_path.empty()) {
        const auto manifest = load_manifest(manifest_path);
        auto idx = manifest.indices(parse_split_flag(split_name));
        if (idx.size() > recon_limit) idx.resize(recon_limit);
        for (auto i : idx) {
          refs.push_back(manifest.records[i].path);
          images.push_back(load_image(manifest.resolve(manifest.records[i]), size));
        }
      } else {
        throw UsageError("reconstruct needs --image or --manifest");
      }
      if (images.empty()) throw std::runtime_error("no images to reconstruct");
      const auto rec = reconstruct(s.loaded.model, images_to_tensor(images), s.config.schedule(),
                                   s.config.invert_steps, s.config.decode_steps);
      fs::create_directories(out_path);
      json doc = {{"decode_steps", s.config.decode_steps}, {"invert_steps", s.config.invert_steps}};
      json items = json::array();
      for (std::size_t i = 0; i < images.size(); ++i) {
        const auto id = report_id(refs[i]);
        write_png(fs::path(out_path) / (id + "_before.png"), images[i]);
        write_png(fs::path(out_path) / (id + "_after.png"),
                  tensor_to_image(rec.decoded.clamped[static_cast<std::int64_t>(i)]));
        items.push_back({{"ref", refs[i]}, {"mse", rec.mse[i]}});
      }
      doc["images"] = items;
      write_text((fs::path(out_path) / "reconstruction.json").string(), doc.dump(2));
    } else if (*classify_cmd) {
      auto s = open_checkpoint(checkpoint, flags);
      const auto manifest = manifest_for(manifest_path, s.config);
      const int size = s.config.image_size;
      const auto index = build_prototype_index(manifest, encode_split(s.loaded.model, manifest, Split::Train, size));
      const auto z = latent_row(encode_batch(s.loaded.model, image_to_tensor(load_image(image_path, size))), 0);
      const auto p = knn_predict(z, index, k_flag.value_or(static_cast<std::size_t>(s.config.K)), std::nullopt,
                                 s.config.tau_pred);
      write_text(out_path, json({{"image", image_path},
                                 {"label", p.label},
                                 {"soft_probabilities", p.soft_probabilities},
                                 {"neighbors", neighbors_json(p, index)}})
                               .dump(2));
    } else if (*explain_cmd) {
      auto s = open_checkpoint(checkpoint, flags);
      const auto manifest = manifest_for(manifest_path, s.config);
      const int size = s.config.image_size;
      const auto index = build_prototype_index(manifest, encode_split(s.loaded.model, manifest, Split::Train, size));
      const auto reports =
          explain_split(s.loaded.model, s.config, manifest, parse_split_flag(split_name), index,
                        k_flag.value_or(static_cast<std::size_t>(s.config.explain_k)), out_path);
      std::cerr << "wrote " << reports.size() << " reports to " << out_path << '\n';
    } else if (*export_cmd) {
      auto s = open_checkpoint(checkpoint, flags);
      const auto manifest = manifest_for(manifest_path, s.config);
      const auto table = latent_table(
          manifest, encode_split(s.loaded.model, manifest, parse_split_flag(split_name), s.config.image_size));
      table.write_csv(out_path);
      std::cerr << "wrote " << table.rows.size() << " rows to " << out_path << '\n';
    } else if (*stats_cmd) {
      const auto st = separation_stats(LatentTable::read_csv(latents_path));
      write_text(out_path, json({{"intra", st.intra},
                                 {"inter", st.inter},
                                 {"margin", st.margin},
                                 {"intra_pairs", st.intra_pairs},
                                 {"inter_pairs", st.inter_pairs}})
                               .dump(2));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace protodiff::cli
