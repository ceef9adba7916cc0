#include "rmtppad/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "rmtppad/errors.hpp"
#include "rmtppad/gca.hpp"

namespace rmtppad {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid boolean '" + v + "' for " + key);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
std::string fmt(T v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number(const char* key, Access access) {
  return {key, [access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_number<T>(k, v); },
          [access](const RunConfig& c) { return fmt(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field flag(const char* key, Access access) {
  return {key, [access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); },
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "on" : "off"); }};
}

template <typename Access>
Field text(const char* key, Access access) {
  return {key, [access](RunConfig& c, const std::string&, const std::string& v) { access(c) = v; },
          [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

template <typename Access>
Field quad(const char* key, Access access) {
  return {key,
          [access](RunConfig& c, const std::string& k, const std::string& v) {
            auto parts = split_list(v);
            if (parts.size() != 4) throw ConfigError(std::string(k) + " needs four comma-separated values");
            for (size_t i = 0; i < 4; ++i) access(c)[i] = parse_number<int64_t>(k, parts[i]);
          },
          [access](const RunConfig& c) {
            const auto& a = access(const_cast<RunConfig&>(c));
            return fmt(a[0]) + "," + fmt(a[1]) + "," + fmt(a[2]) + "," + fmt(a[3]);
          }};
}

Field tasks_field() {
  return {"tasks",
          [](RunConfig& c, const std::string& k, const std::string& v) {
            TaskSet t{false, false, false};
            for (const auto& name : split_list(v)) {
              if (name == "det") t.detection = true;
              else if (name == "da") t.drivable = true;
              else if (name == "ll") t.lane = true;
              else throw ConfigError("unknown task '" + name + "' in " + k + " (expected det, da, ll)");
            }
            c.model.tasks = t;
          },
          [](const RunConfig& c) {
            std::vector<std::string> names;
            if (c.model.tasks.detection) names.push_back("det");
            if (c.model.tasks.drivable) names.push_back("da");
            if (c.model.tasks.lane) names.push_back("ll");
            std::string out;
            for (size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
            return out;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      // model
      number<int64_t>("input_height", [](RunConfig& c) -> auto& { return c.model.encoder.input_height; }),
      number<int64_t>("input_width", [](RunConfig& c) -> auto& { return c.model.encoder.input_width; }),
      number<int64_t>("channel_width", [](RunConfig& c) -> auto& { return c.model.encoder.channel_width; }),
      quad("backbone_widths", [](RunConfig& c) -> auto& { return c.model.encoder.backbone_widths; }),
      quad("backbone_depths", [](RunConfig& c) -> auto& { return c.model.encoder.backbone_depths; }),
      number<int64_t>("attention_heads", [](RunConfig& c) -> auto& { return c.model.encoder.attention_heads; }),
      number<int64_t>("attention_layers", [](RunConfig& c) -> auto& { return c.model.encoder.attention_layers; }),
      number<int64_t>("ffn_multiplier", [](RunConfig& c) -> auto& { return c.model.encoder.ffn_multiplier; }),
      flag("gca", [](RunConfig& c) -> auto& { return c.model.use_gca; }),
      number<int64_t>("gca_reduction", [](RunConfig& c) -> auto& { return c.model.gca_reduction; }),
      number<double>("gate_lo", [](RunConfig& c) -> auto& { return c.model.gate_lo; }),
      number<double>("gate_hi", [](RunConfig& c) -> auto& { return c.model.gate_hi; }),
      number<int64_t>("seg_width", [](RunConfig& c) -> auto& { return c.model.seg_width; }),
      number<int64_t>("num_queries", [](RunConfig& c) -> auto& { return c.model.det.num_queries; }),
      number<int64_t>("decoder_layers", [](RunConfig& c) -> auto& { return c.model.det.num_layers; }),
      number<int64_t>("num_classes", [](RunConfig& c) -> auto& { return c.model.det.num_classes; }),
      number<int64_t>("decoder_heads", [](RunConfig& c) -> auto& { return c.model.det.heads; }),
      number<int64_t>("decoder_points", [](RunConfig& c) -> auto& { return c.model.det.points_per_level; }),
      number<int64_t>("decoder_ffn_dim", [](RunConfig& c) -> auto& { return c.model.det.ffn_dim; }),
      tasks_field(),
      // training
      text("optimizer", [](RunConfig& c) -> auto& { return c.train.optimizer; }),
      number<double>("lr", [](RunConfig& c) -> auto& { return c.train.lr; }),
      number<double>("momentum", [](RunConfig& c) -> auto& { return c.train.momentum; }),
      number<double>("weight_decay", [](RunConfig& c) -> auto& { return c.train.weight_decay; }),
      number<double>("warmup_epochs", [](RunConfig& c) -> auto& { return c.train.warmup_epochs; }),
      number<double>("warmup_momentum", [](RunConfig& c) -> auto& { return c.train.warmup_momentum; }),
      number<double>("warmup_bias_lr", [](RunConfig& c) -> auto& { return c.train.warmup_bias_lr; }),
      number<double>("final_lr_ratio", [](RunConfig& c) -> auto& { return c.train.final_lr_ratio; }),
      number<int64_t>("epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }),
      number<int64_t>("max_steps", [](RunConfig& c) -> auto& { return c.train.max_steps; }),
      number<int64_t>("batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }),
      number<uint64_t>("seed", [](RunConfig& c) -> auto& { return c.train.seed; }),
      number<double>("grad_clip", [](RunConfig& c) -> auto& { return c.train.grad_clip; }),
      number<int64_t>("dn_groups", [](RunConfig& c) -> auto& { return c.train.dn_groups; }),
      number<double>("dn_box_noise", [](RunConfig& c) -> auto& { return c.train.dn_noise.box_scale; }),
      number<double>("dn_label_noise", [](RunConfig& c) -> auto& { return c.train.dn_noise.label_flip_prob; }),
      number<double>("loss_alpha", [](RunConfig& c) -> auto& { return c.train.loss.alpha; }),
      number<double>("loss_beta", [](RunConfig& c) -> auto& { return c.train.loss.beta; }),
      number<double>("loss_gamma", [](RunConfig& c) -> auto& { return c.train.loss.gamma; }),
      number<double>("lambda_fl", [](RunConfig& c) -> auto& { return c.train.loss.lambda_fl; }),
      number<double>("lambda_bce", [](RunConfig& c) -> auto& { return c.train.loss.lambda_bce; }),
      number<double>("lambda_tv", [](RunConfig& c) -> auto& { return c.train.loss.lambda_tv; }),
      number<double>("focal_gamma", [](RunConfig& c) -> auto& { return c.train.seg_loss.focal_gamma; }),
      number<double>("focal_alpha", [](RunConfig& c) -> auto& { return c.train.seg_loss.focal_alpha; }),
      number<double>("tversky_alpha", [](RunConfig& c) -> auto& { return c.train.seg_loss.tversky_alpha; }),
      number<double>("tversky_beta", [](RunConfig& c) -> auto& { return c.train.seg_loss.tversky_beta; }),
      number<double>("tversky_smooth", [](RunConfig& c) -> auto& { return c.train.seg_loss.tversky_smooth; }),
      flag("iou_aware_cls", [](RunConfig& c) -> auto& { return c.train.det_loss.iou_aware_cls; }),
      flag("encoder_loss", [](RunConfig& c) -> auto& { return c.train.det_loss.encoder_loss; }),
      number<double>("da_threshold", [](RunConfig& c) -> auto& { return c.train.thresholds.drivable; }),
      number<double>("ll_threshold", [](RunConfig& c) -> auto& { return c.train.thresholds.lane; }),
      number<int64_t>("log_every", [](RunConfig& c) -> auto& { return c.train.log_every; }),
      number<int64_t>("eval_every", [](RunConfig& c) -> auto& { return c.train.eval_every; }),
      // data
      text("dataset", [](RunConfig& c) -> auto& { return c.data.source; }),
      number<int64_t>("synthetic_count", [](RunConfig& c) -> auto& { return c.data.synthetic_count; }),
      number<uint64_t>("synthetic_seed", [](RunConfig& c) -> auto& { return c.data.synthetic_seed; }),
      number<int64_t>("val_count", [](RunConfig& c) -> auto& { return c.data.val_count; }),
      text("bdd_images", [](RunConfig& c) -> auto& { return c.data.bdd_images; }),
      text("bdd_annotations", [](RunConfig& c) -> auto& { return c.data.bdd_annotations; }),
      text("bdd_da_masks", [](RunConfig& c) -> auto& { return c.data.bdd_da_masks; }),
      text("bdd_ll_masks", [](RunConfig& c) -> auto& { return c.data.bdd_ll_masks; }),
      text("output_dir", [](RunConfig& c) -> auto& { return c.output_dir; }),
  };
  return kFields;
}

}  // namespace

RunConfig RunConfig::full() {
  RunConfig c;
  c.model.encoder.input_height = 640;
  c.model.encoder.input_width = 640;
  c.model.encoder.channel_width = 256;
  c.model.det.hidden_dim = 256;
  c.model.det.num_queries = 300;
  c.model.det.num_layers = 6;
  c.model.det.ffn_dim = 1024;
  c.train.dn_groups = 100;
  return c;
}

RunConfig RunConfig::toy() {
  RunConfig c;
  c.model.encoder.input_height = 320;
  c.model.encoder.input_width = 320;
  c.model.encoder.channel_width = 128;
  c.model.det.hidden_dim = 128;
  c.model.det.num_queries = 60;
  c.model.det.num_layers = 3;
  c.model.det.ffn_dim = 512;
  c.train.dn_groups = 10;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, value);
      model.det.hidden_dim = model.encoder.channel_width;
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text, const RunConfig& defaults) {
  RunConfig c = defaults;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  model.encoder.validate();
  if (model.det.hidden_dim != model.encoder.channel_width)
    throw ConfigError("decoder width must equal channel_width");
  model.det.validate();
  GcaConfig{model.encoder.channel_width, model.gca_reduction, {model.gate_lo, model.gate_hi}}.validate();
  if (model.seg_width <= 0) throw ConfigError("seg_width must be positive");
  if (!model.tasks.any()) throw ConfigError("at least one task must be enabled");
  if (train.optimizer != "sgd" && train.optimizer != "adamw")
    throw ConfigError("optimizer must be sgd or adamw");
  if (!(train.lr > 0.0) || train.momentum < 0.0 || train.weight_decay < 0.0 || train.warmup_epochs < 0.0 ||
      train.warmup_momentum < 0.0 || train.warmup_bias_lr < 0.0 || !(train.final_lr_ratio > 0.0))
    throw ConfigError("optimizer settings must be positive");
  if (train.epochs < 0 || train.max_steps < 0 || train.batch_size <= 0) throw ConfigError("invalid run length");
  if (train.dn_groups < 0) throw ConfigError("dn_groups must be non-negative");
  if (train.grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
  train.loss.validate();
  train.thresholds.validate();
  if (data.source != "synthetic" && data.source != "bdd") throw ConfigError("dataset must be synthetic or bdd");
  if (train.log_every < 0 || train.eval_every < 0) throw ConfigError("log_every and eval_every must be >= 0");
  if (data.val_count < 0) throw ConfigError("val_count must be >= 0");
  if (data.synthetic_count < 1) throw ConfigError("synthetic_count must be at least 1");
}

}  // namespace rmtppad
