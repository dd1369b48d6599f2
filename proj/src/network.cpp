#include "protodiff/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace protodiff {

namespace nn = torch::nn;

ModelConfig ModelConfig::paper_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.image_size = 32;
  c.base_channels = 8;
  c.channel_multipliers = {1, 2, 4};
  c.layers_per_resolution = 1;
  c.middle_attention_layers = 1;
  c.latent_dim = 32;
  c.time_embed_dim = 64;
  c.group_norm_groups = 4;
  return c;
}

std::vector<int> ModelConfig::channels() const {
  std::vector<int> out;
  for (int m : channel_multipliers) out.push_back(base_channels * m);
  return out;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model config: " + what); };
  if (image_size < 4) fail("image_size must be >= 4");
  if (base_channels < 1) fail("base_channels must be >= 1");
  if (channel_multipliers.empty()) fail("channel_multipliers must be non-empty");
  for (int m : channel_multipliers) {
    if (m < 1) fail("channel multipliers must be >= 1");
  }
  if (layers_per_resolution < 1) fail("layers_per_resolution must be >= 1");
  if (middle_attention_layers < 0) fail("middle_attention_layers must be >= 0");
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (static_cast<long long>(latent_dim) >= static_cast<long long>(image_size) * image_size) {
    fail("latent_dim must be smaller than image_size^2");
  }
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail("time_embed_dim must be even and >= 2");
  const int factor = 1 << (channel_multipliers.size() - 1);
  if (image_size % factor != 0) {
    fail("image_size " + std::to_string(image_size) + " not divisible by " + std::to_string(factor));
  }
  if (group_norm_groups < 1) fail("group_norm_groups must be >= 1");
  for (int c : channels()) {
    if (c % group_norm_groups != 0) {
      fail("group_norm_groups " + std::to_string(group_norm_groups) + " does not divide channel count " +
           std::to_string(c));
    }
  }
}

// ---------------------------------------------------------------------------

ConvNormActImpl::ConvNormActImpl(int in_channels, int out_channels, int groups, int stride) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).stride(stride).padding(1)));
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(groups, out_channels)));
}

torch::Tensor ConvNormActImpl::forward(const torch::Tensor& x) { return torch::silu(norm(conv(x))); }

ResBlockImpl::ResBlockImpl(int channels, int groups, int time_dim, int latent_dim) {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)));
  norm1 = register_module("norm1", nn::GroupNorm(nn::GroupNormOptions(groups, channels)));
  if (time_dim > 0) time_proj = register_module("time_proj", nn::Linear(time_dim, 2 * channels));
  if (latent_dim > 0) latent_proj = register_module("latent_proj", nn::Linear(latent_dim, 2 * channels));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)));
  norm2 = register_module("norm2", nn::GroupNorm(nn::GroupNormOptions(groups, channels)));
}

namespace {

torch::Tensor modulate(const torch::Tensor& h, const torch::Tensor& scale_shift) {
  auto parts = scale_shift.chunk(2, 1);
  return h * (1 + parts[0].unsqueeze(-1).unsqueeze(-1)) + parts[1].unsqueeze(-1).unsqueeze(-1);
}

}  // namespace

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& time_emb, const torch::Tensor& z) {
  auto h = norm1(conv1(x));
  if (time_proj) h = modulate(h, time_proj(time_emb));
  if (latent_proj) h = modulate(h, latent_proj(z));
  h = torch::silu(h);
  h = torch::silu(norm2(conv2(h)));
  return x + h;
}

AttentionBlockImpl::AttentionBlockImpl(int channels, int groups) {
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(groups, channels)));
  qkv = register_module("qkv", nn::Linear(channels, 3 * channels));
  out = register_module("out", nn::Linear(channels, channels));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto tokens = norm(x).flatten(2).transpose(1, 2);  // [B, HW, C]
  auto parts = qkv(tokens).chunk(3, -1);
  auto scores = torch::matmul(parts[0], parts[1].transpose(1, 2)) / std::sqrt(static_cast<double>(c));
  auto attended = torch::matmul(torch::softmax(scores, -1), parts[2]);
  return x + out(attended).transpose(1, 2).reshape({b, c, h, w});
}

// ---------------------------------------------------------------------------

SemanticEncoderImpl::SemanticEncoderImpl(const ModelConfig& config) {
  config.validate();
  const auto ch = config.channels();
  const int g = config.group_norm_groups;
  stem_ = register_module("stem", ConvNormAct(1, ch[0], g));
  auto down = register_module("down", nn::ModuleList());
  auto downsample = register_module("downsample", nn::ModuleList());
  for (std::size_t i = 0; i < ch.size(); ++i) {
    nn::ModuleList level;
    levels_.emplace_back();
    for (int r = 0; r < config.layers_per_resolution; ++r) {
      levels_.back().push_back(ResBlock(ch[i], g, 0, 0));
      level->push_back(levels_.back().back());
    }
    down->push_back(level);
    if (i + 1 < ch.size()) {
      downsample_.push_back(ConvNormAct(ch[i], ch[i + 1], g, 2));
      downsample->push_back(downsample_.back());
    }
  }
  auto middle = register_module("middle", nn::ModuleList());
  for (int a = 0; a < config.middle_attention_layers; ++a) {
    middle_attention_.push_back(AttentionBlock(ch.back(), g));
    middle_res_.push_back(ResBlock(ch.back(), g, 0, 0));
    middle->push_back(middle_attention_.back());
    middle->push_back(middle_res_.back());
  }
  project_ = register_module("project", nn::Linear(ch.back(), config.latent_dim));
}

torch::Tensor SemanticEncoderImpl::forward(const torch::Tensor& x0) {
  auto h = stem_(x0);
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    for (auto& block : levels_[i]) h = block(h);
    if (i < downsample_.size()) h = downsample_[i](h);
  }
  for (std::size_t a = 0; a < middle_attention_.size(); ++a) h = middle_res_[a](middle_attention_[a](h));
  return project_(h.mean({2, 3}));
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int dim) {
  const int half = dim / 2;
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / half);
  auto args = t.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

ConditionalUNetImpl::ConditionalUNetImpl(const ModelConfig& config) : time_embed_dim_(config.time_embed_dim) {
  config.validate();
  const auto ch = config.channels();
  const int g = config.group_norm_groups;
  const int ted = config.time_embed_dim;
  const int d = config.latent_dim;
  time_fc1_ = register_module("time_fc1", nn::Linear(ted, ted));
  time_fc2_ = register_module("time_fc2", nn::Linear(ted, ted));
  stem_ = register_module("stem", ConvNormAct(1, ch[0], g));

  auto down = register_module("down", nn::ModuleList());
  auto downsample = register_module("downsample", nn::ModuleList());
  for (std::size_t i = 0; i < ch.size(); ++i) {
    nn::ModuleList level;
    down_.emplace_back();
    for (int r = 0; r < config.layers_per_resolution; ++r) {
      down_.back().push_back(ResBlock(ch[i], g, ted, d));
      level->push_back(down_.back().back());
    }
    down->push_back(level);
    if (i + 1 < ch.size()) {
      downsample_.push_back(ConvNormAct(ch[i], ch[i + 1], g, 2));
      downsample->push_back(downsample_.back());
    }
  }

  auto middle = register_module("middle", nn::ModuleList());
  for (int a = 0; a < config.middle_attention_layers; ++a) {
    middle_attention_.push_back(AttentionBlock(ch.back(), g));
    middle_res_.push_back(ResBlock(ch.back(), g, ted, d));
    middle->push_back(middle_attention_.back());
    middle->push_back(middle_res_.back());
  }

  // up.k mirrors down level (L-1-k).
  auto merge = register_module("merge", nn::ModuleList());
  auto up = register_module("up", nn::ModuleList());
  auto upsample = register_module("upsample", nn::ModuleList());
  for (std::size_t k = 0; k < ch.size(); ++k) {
    const std::size_t i = ch.size() - 1 - k;
    merge_.push_back(ConvNormAct(2 * ch[i], ch[i], g));
    merge->push_back(merge_.back());
    nn::ModuleList level;
    up_.emplace_back();
    for (int r = 0; r < config.layers_per_resolution; ++r) {
      up_.back().push_back(ResBlock(ch[i], g, ted, d));
      level->push_back(up_.back().back());
    }
    up->push_back(level);
    if (i > 0) {
      upsample_.push_back(ConvNormAct(ch[i], ch[i - 1], g));
      upsample->push_back(upsample_.back());
    }
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(ch[0], 1, 3).padding(1)));
}

torch::Tensor ConditionalUNetImpl::forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& z) {
  auto temb = timestep_embedding(t, time_embed_dim_).to(x_t.scalar_type());
  temb = torch::silu(time_fc2_(torch::silu(time_fc1_(temb))));

  auto h = stem_(x_t);
  std::vector<torch::Tensor> skips;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    for (auto& block : down_[i]) h = block(h, temb, z);
    skips.push_back(h);
    if (i < downsample_.size()) h = downsample_[i](h);
  }
  for (std::size_t a = 0; a < middle_attention_.size(); ++a) h = middle_res_[a](middle_attention_[a](h), temb, z);
  for (std::size_t k = 0; k < up_.size(); ++k) {
    h = merge_[k](torch::cat({h, skips.back()}, 1));
    skips.pop_back();
    for (auto& block : up_[k]) h = block(h, temb, z);
    if (k < upsample_.size()) {
      h = torch::upsample_nearest2d(h, {h.size(2) * 2, h.size(3) * 2});
      h = upsample_[k](h);
    }
  }
  return head_(h);
}

// ---------------------------------------------------------------------------

DenoiserModelImpl::DenoiserModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  encoder_ = register_module("encoder", SemanticEncoder(config_));
  unet_ = register_module("unet", ConditionalUNet(config_));
}

void DenoiserModelImpl::check_image(const torch::Tensor& x, const char* what) const {
  if (x.dim() != 4 || x.size(1) != 1 || x.size(2) != config_.image_size || x.size(3) != config_.image_size) {
    throw std::invalid_argument(std::string(what) + ": expected shape [B,1," + std::to_string(config_.image_size) +
                                "," + std::to_string(config_.image_size) + "], got " + c10::str(x.sizes()));
  }
}

torch::Tensor DenoiserModelImpl::encode_semantic(const torch::Tensor& x0) {
  check_image(x0, "encode_semantic");
  return encoder_(x0);
}

torch::Tensor DenoiserModelImpl::predict_noise(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& z) {
  check_image(x_t, "predict_noise");
  if (t.dim() != 1 || t.size(0) != x_t.size(0)) throw std::invalid_argument("predict_noise: t must have shape [B]");
  if (t.numel() > 0 && t.min().item<std::int64_t>() < 1) throw std::out_of_range("predict_noise: step index below 1");
  if (z.dim() != 2 || z.size(0) != x_t.size(0) || z.size(1) != config_.latent_dim) {
    throw std::invalid_argument("predict_noise: z must have shape [B," + std::to_string(config_.latent_dim) + "]");
  }
  return unet_(x_t, t, z);
}

std::vector<std::pair<std::string, torch::Tensor>> DenoiserModelImpl::canonical_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : named_parameters(true)) out.emplace_back(item.key(), item.value());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

NoisePredictor noise_predictor(DenoiserModel model) {
  return [model](const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& z) mutable {
    return model->predict_noise(x_t, t, z);
  };
}

// ---------------------------------------------------------------------------

namespace {

std::int64_t conv3(std::int64_t in, std::int64_t out) { return 9 * in * out + out; }
std::int64_t gn(std::int64_t c) { return 2 * c; }
std::int64_t linear(std::int64_t in, std::int64_t out) { return in * out + out; }
std::int64_t conv_unit(std::int64_t in, std::int64_t out) { return conv3(in, out) + gn(out); }
std::int64_t res_block(std::int64_t c, std::int64_t ted, std::int64_t d) {
  return 2 * (conv3(c, c) + gn(c)) + (ted > 0 ? linear(ted, 2 * c) : 0) + (d > 0 ? linear(d, 2 * c) : 0);
}
std::int64_t attention(std::int64_t c) { return gn(c) + linear(c, 3 * c) + linear(c, c); }

}  // namespace

std::int64_t parameter_count(const ModelConfig& config) {
  config.validate();
  const auto ch = config.channels();
  const std::int64_t L = static_cast<std::int64_t>(ch.size());
  const std::int64_t R = config.layers_per_resolution;
  const std::int64_t A = config.middle_attention_layers;
  const std::int64_t ted = config.time_embed_dim;
  const std::int64_t d = config.latent_dim;

  std::int64_t encoder = conv_unit(1, ch[0]) + linear(ch.back(), d);
  std::int64_t unet = 2 * linear(ted, ted) + conv_unit(1, ch[0]) + conv3(ch[0], 1);
  for (std::int64_t i = 0; i < L; ++i) {
    encoder += R * res_block(ch[i], 0, 0);
    unet += R * res_block(ch[i], ted, d);          // down
    unet += conv_unit(2 * ch[i], ch[i]);           // merge
    unet += R * res_block(ch[i], ted, d);          // up
    if (i + 1 < L) {
      encoder += conv_unit(ch[i], ch[i + 1]);      // downsample
      unet += conv_unit(ch[i], ch[i + 1]);         // downsample
      unet += conv_unit(ch[i + 1], ch[i]);         // upsample
    }
  }
  encoder += A * (attention(ch.back()) + res_block(ch.back(), 0, 0));
  unet += A * (attention(ch.back()) + res_block(ch.back(), ted, d));
  return encoder + unet;
}

std::vector<LayerRecord> architecture_audit(const ModelConfig& config) {
  config.validate();
  const auto ch = config.channels();
  std::vector<LayerRecord> out;
  auto push = [&](std::string name, std::string kind, std::string stage, int in, int o, int res) {
    out.push_back({std::move(name), std::move(kind), std::move(stage), in, o, res});
  };
  auto unit = [&](const std::string& name, const std::string& stage, int in, int o, int res) {
    push(name + ".conv", "conv", stage, in, o, res);
    push(name + ".norm", "group_norm", stage, o, o, res);
    push("", "silu", stage, o, o, res);
  };
  auto res_block = [&](const std::string& name, const std::string& stage, int c, int res, bool conditioned) {
    push(name + ".conv1", "conv", stage, c, c, res);
    push(name + ".norm1", "group_norm", stage, c, c, res);
    if (conditioned) {
      push(name + ".time_proj", "modulation", stage, c, c, res);
      push(name + ".latent_proj", "modulation", stage, c, c, res);
    }
    push("", "silu", stage, c, c, res);
    push(name + ".conv2", "conv", stage, c, c, res);
    push(name + ".norm2", "group_norm", stage, c, c, res);
    push("", "silu", stage, c, c, res);
  };

  for (const std::string net : {"encoder", "unet"}) {
    const bool cond = net == "unet";
    int res = config.image_size;
    if (cond) {
      push("unet.time_fc1", "linear", "unet.time", config.time_embed_dim, config.time_embed_dim, 0);
      push("unet.time_fc2", "linear", "unet.time", config.time_embed_dim, config.time_embed_dim, 0);
    }
    unit(net + ".stem", net + ".stem", 1, ch[0], res);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      const std::string stage = net + ".down." + std::to_string(i);
      for (int r = 0; r < config.layers_per_resolution; ++r) {
        res_block(stage + "." + std::to_string(r), stage, ch[i], res, cond);
      }
      if (i + 1 < ch.size()) {
        unit(net + ".downsample." + std::to_string(i), stage, ch[i], ch[i + 1], res);
        res /= 2;
      }
    }
    for (int a = 0; a < config.middle_attention_layers; ++a) {
      push(net + ".middle." + std::to_string(2 * a), "attention", net + ".middle", ch.back(), ch.back(), res);
      res_block(net + ".middle." + std::to_string(2 * a + 1), net + ".middle", ch.back(), res, cond);
    }
    if (!cond) {
      push("", "pool", "encoder.project", ch.back(), ch.back(), 1);
      push("encoder.project", "linear", "encoder.project", ch.back(), config.latent_dim, 1);
      continue;
    }
    for (std::size_t k = 0; k < ch.size(); ++k) {
      const std::size_t i = ch.size() - 1 - k;
      const std::string stage = "unet.up." + std::to_string(k);
      push("", "concat", stage, ch[i], 2 * ch[i], res);
      unit("unet.merge." + std::to_string(k), stage, 2 * ch[i], ch[i], res);
      for (int r = 0; r < config.layers_per_resolution; ++r) {
        res_block("unet.up." + std::to_string(k) + "." + std::to_string(r), stage, ch[i], res, true);
      }
      if (i > 0) {
        push("", "upsample", stage, ch[i], ch[i], res * 2);
        res *= 2;
        unit("unet.upsample." + std::to_string(k), stage, ch[i], ch[i - 1], res);
      }
    }
    push("unet.head", "head", "unet.head", ch[0], 1, res);
  }
  return out;
}

}  // namespace protodiff
