#include "protodiff/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

namespace protodiff {

using nlohmann::json;
using EC = ExperimentConfig;

namespace {

using Member = std::variant<int EC::*, std::uint64_t EC::*, double EC::*, bool EC::*, std::string EC::*,
                            std::vector<int> EC::*>;

struct Binding {
  ConfigField field;
  Member member;
};

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      {{"manifest", "string", "dataset manifest CSV (path,label,split)"}, &EC::manifest},
      {{"warmup_manifest", "string", "optional manifest used only in the warm-up phase"}, &EC::warmup_manifest},
      {{"joint_manifest", "string", "optional manifest used only in the joint phase"}, &EC::joint_manifest},
      {{"image_size", "int", "square input resolution in pixels"}, &EC::image_size},
      {{"base_channels", "int", "channels after the stem convolution"}, &EC::base_channels},
      {{"channel_multipliers", "int_list", "per-resolution channel multipliers"}, &EC::channel_multipliers},
      {{"layers_per_resolution", "int", "residual blocks per resolution"}, &EC::layers_per_resolution},
      {{"middle_attention_layers", "int", "attention layers in the middle block"}, &EC::middle_attention_layers},
      {{"latent_dim", "int", "semantic latent dimension d"}, &EC::latent_dim},
      {{"time_embed_dim", "int", "sinusoidal time embedding width"}, &EC::time_embed_dim},
      {{"group_norm_groups", "int", "GroupNorm group count"}, &EC::group_norm_groups},
      {{"diffusion_steps", "int", "number of diffusion steps T"}, &EC::diffusion_steps},
      {{"beta_start", "double", "first beta of the linear schedule"}, &EC::beta_start},
      {{"beta_end", "double", "last beta of the linear schedule"}, &EC::beta_end},
      {{"decode_steps", "int", "DDIM substeps when decoding"}, &EC::decode_steps},
      {{"invert_steps", "int", "DDIM substeps when inverting"}, &EC::invert_steps},
      {{"tau", "double", "contrastive temperature"}, &EC::tau},
      {{"tau_pred", "double", "temperature of the soft neighbour vote"}, &EC::tau_pred},
      {{"weight_diffusion", "double", "weight of the diffusion loss"}, &EC::weight_diffusion},
      {{"weight_contrast", "double", "weight of the contrastive loss"}, &EC::weight_contrast},
      {{"weight_prediction", "double", "weight of the prediction loss"}, &EC::weight_prediction},
      {{"freeze_diffusion_in_phase2", "bool", "drop the diffusion loss in the joint phase"},
       &EC::freeze_diffusion_in_phase2},
      {{"warmup_epochs", "int", "diffusion-only epochs"}, &EC::warmup_epochs},
      {{"joint_epochs", "int", "epochs optimizing all three losses"}, &EC::joint_epochs},
      {{"K", "int", "neighbours in the class vote"}, &EC::K},
      {{"M", "int", "images per class in each batch"}, &EC::M},
      {{"optimizer", "string", "optimizer name (adam)"}, &EC::optimizer},
      {{"learning_rate", "double", "optimizer learning rate"}, &EC::learning_rate},
      {{"grad_clip", "double", "global gradient-norm clip (0 disables)"}, &EC::grad_clip},
      {{"seed", "uint", "seed for every random stream"}, &EC::seed},
      {{"checkpoint_every", "int", "epochs between checkpoints (0 = phase ends only)"}, &EC::checkpoint_every},
      {{"eval_every", "int", "epochs between validation passes (0 = never)"}, &EC::eval_every},
      {{"recon_probe_size", "int", "validation images in the reconstruction probe"}, &EC::recon_probe_size},
      {{"device", "string", "compute device (cpu)"}, &EC::device},
      {{"num_threads", "int", "intra-op threads"}, &EC::num_threads},
      {{"explain_k", "int", "prototypes per explanation"}, &EC::explain_k},
  };
  return table;
}

const Binding& find_binding(std::string_view key) {
  for (const auto& b : bindings()) {
    if (b.field.name == key) return b;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void assign(EC& config, const Binding& binding, const json& value) {
  const std::string key(binding.field.name);
  try {
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(config.*member)>;
          if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) throw ConfigError("");
          } else if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) throw ConfigError("");
          } else if constexpr (std::is_same_v<T, double>) {
            if (!value.is_number()) throw ConfigError("");
          } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!value.is_array()) throw ConfigError("");
            for (const auto& v : value) {
              if (!v.is_number_integer()) throw ConfigError("");
            }
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0)) {
              throw ConfigError("");
            }
          } else {
            if (!value.is_number_integer()) throw ConfigError("");
          }
          config.*member = value.get<T>();
        },
        binding.member);
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + key + "' expects " + std::string(binding.field.type) + ", got " + value.dump());
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' expects " + std::string(binding.field.type) + ", got " + value.dump());
  }
}

json parse_override_value(std::string_view type, const std::string& text) {
  if (type == "string") return text;
  if (type == "bool") {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("expected true/false, got '" + text + "'");
  }
  if (type == "int_list") {
    std::string body = text;
    if (!body.empty() && body.front() == '[') return json::parse(body);
    json arr = json::array();
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      int v = 0;
      auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size()) throw ConfigError("bad integer '" + item + "'");
      arr.push_back(v);
    }
    return arr;
  }
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) throw ConfigError("cannot parse '" + text + "' as " + std::string(type));
  return v;
}

}  // namespace

const std::vector<ConfigField>& config_schema() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> out;
    for (const auto& b : bindings()) out.push_back(b.field);
    return out;
  }();
  return fields;
}

ModelConfig EC::model_config() const {
  ModelConfig m;
  m.image_size = image_size;
  m.base_channels = base_channels;
  m.channel_multipliers = channel_multipliers;
  m.layers_per_resolution = layers_per_resolution;
  m.middle_attention_layers = middle_attention_layers;
  m.latent_dim = latent_dim;
  m.time_embed_dim = time_embed_dim;
  m.group_norm_groups = group_norm_groups;
  return m;
}

NoiseSchedule EC::schedule() const { return NoiseSchedule::linear(diffusion_steps, beta_start, beta_end); }

ContrastConfig EC::contrast() const { return {tau, tau_pred}; }

LossWeights EC::loss_weights() const { return {weight_diffusion, weight_contrast, weight_prediction}; }

void EC::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  try {
    model_config().validate();
    (void)schedule();
    contrast().validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (decode_steps < 1 || decode_steps > diffusion_steps) fail("decode_steps must lie in [1, diffusion_steps]");
  if (invert_steps < 1 || invert_steps > diffusion_steps) fail("invert_steps must lie in [1, diffusion_steps]");
  if (warmup_epochs < 0 || joint_epochs < 0) fail("epoch counts must be >= 0");
  if (K < 1) fail("K must be >= 1");
  if (M < 2) fail("M must be >= 2");
  if (K > 2 * M - 1) fail("K must not exceed 2M - 1 (batch neighbours excluding self)");
  if (optimizer != "adam") fail("unsupported optimizer '" + optimizer + "' (adam)");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (grad_clip < 0.0) fail("grad_clip must be >= 0");
  if (checkpoint_every < 0 || eval_every < 0) fail("cadences must be >= 0");
  if (recon_probe_size < 0) fail("recon_probe_size must be >= 0");
  if (device != "cpu") fail("only the cpu device is available in this build");
  if (num_threads < 1) fail("num_threads must be >= 1");
  if (explain_k < 1) fail("explain_k must be >= 1");
  if (weight_diffusion < 0 || weight_contrast < 0 || weight_prediction < 0) fail("loss weights must be >= 0");
}

json EC::to_json() const {
  json doc = json::object();
  for (const auto& b : bindings()) {
    std::visit([&](auto member) { doc[std::string(b.field.name)] = this->*member; }, b.member);
  }
  return doc;
}

EC EC::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  EC config;
  for (const auto& [key, value] : doc.items()) {
    if (value.is_object()) throw ConfigError("config is flat; key '" + key + "' holds an object");
    assign(config, find_binding(key), value);
  }
  return config;
}

EC EC::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return from_json(doc);
}

void EC::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json().dump(2) << '\n';
}

void EC::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got '" + std::string(assignment) + "'");
  }
  const auto key = assignment.substr(0, eq);
  const std::string value(assignment.substr(eq + 1));
  const auto& binding = find_binding(key);
  try {
    assign(*this, binding, parse_override_value(binding.field.type, value));
  } catch (const json::exception&) {
    throw ConfigError("cannot parse override '" + std::string(assignment) + "'");
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

ExperimentConfig toy_experiment() {
  ExperimentConfig c;
  const ModelConfig m = ModelConfig::toy();
  c.image_size = m.image_size;
  c.base_channels = m.base_channels;
  c.channel_multipliers = m.channel_multipliers;
  c.layers_per_resolution = m.layers_per_resolution;
  c.middle_attention_layers = m.middle_attention_layers;
  c.latent_dim = m.latent_dim;
  c.time_embed_dim = m.time_embed_dim;
  c.group_norm_groups = m.group_norm_groups;
  c.diffusion_steps = 200;
  c.beta_start = 5e-4;
  c.beta_end = 0.1;
  c.decode_steps = 20;
  c.invert_steps = 20;
  c.warmup_epochs = 30;
  c.joint_epochs = 50;
  c.M = 16;
  c.learning_rate = 1e-3;
  c.checkpoint_every = 10;
  return c;
}

}  // namespace protodiff
