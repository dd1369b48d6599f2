#pragma once

#include "protodiff/config.hpp"
#include "protodiff/synthetic.hpp"

namespace fixtures {

// 16x16 model small enough for unit-test training runs.
inline protodiff::ExperimentConfig tiny_experiment(const std::string& manifest) {
  auto c = protodiff::toy_experiment();
  c.manifest = manifest;
  c.image_size = 16;
  c.base_channels = 8;
  c.channel_multipliers = {1, 2};
  c.latent_dim = 8;
  c.time_embed_dim = 16;
  c.diffusion_steps = 50;
  c.decode_steps = 5;
  c.invert_steps = 5;
  c.warmup_epochs = 1;
  c.joint_epochs = 1;
  c.M = 4;
  c.K = 3;
  c.recon_probe_size = 2;
  c.checkpoint_every = 1;
  c.seed = 3;
  return c;
}

inline protodiff::DatasetManifest tiny_corpus(const std::filesystem::path& dir, std::size_t train = 8,
                                              std::size_t val = 2, std::size_t test = 2) {
  protodiff::SyntheticOptions opt;
  opt.image_size = 16;
  opt.seed = 1;
  opt.splits = protodiff::SyntheticSplits{train, val, test};
  return protodiff::generate_synthetic_dataset(opt, dir);
}

}  // namespace fixtures
