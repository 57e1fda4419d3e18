#include "dannet/core/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "dannet/core/error.hpp"
#include "dannet/core/types.hpp"

namespace dannet {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": not a number '" + std::string(v) + "'");
  }
  return out;
}

template <typename I>
I parse_int(std::string_view key, std::string_view v) {
  I out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": not an integer '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": not a boolean '" + std::string(v) + "'");
}

struct Field {
  std::string_view name;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

template <typename M>
Field real_field(std::string_view name, M member) {
  return {name,
          [=](Config& c, std::string_view v) { c.*member = parse_double(name, v); },
          [=](const Config& c) { return fmt::format("{}", c.*member); }};
}

template <typename M>
Field int_field(std::string_view name, M member) {
  using I = std::remove_reference_t<decltype(std::declval<Config&>().*member)>;
  return {name,
          [=](Config& c, std::string_view v) { c.*member = parse_int<I>(name, v); },
          [=](const Config& c) { return fmt::format("{}", c.*member); }};
}

Field bool_field(std::string_view name, bool Config::*member) {
  return {name,
          [=](Config& c, std::string_view v) { c.*member = parse_bool(name, v); },
          [=](const Config& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      real_field("alpha_tv", &Config::alpha_tv),
      real_field("alpha_exp", &Config::alpha_exp),
      real_field("alpha_ssim", &Config::alpha_ssim),
      real_field("beta_light", &Config::beta_light),
      real_field("beta_seg", &Config::beta_seg),
      real_field("beta_static", &Config::beta_static),
      real_field("beta_adv", &Config::beta_adv),
      real_field("std_train", &Config::std_train),
      real_field("std_test", &Config::std_test),
      real_field("avg", &Config::avg),
      real_field("focal_gamma", &Config::focal_gamma),
      real_field("lr", &Config::lr),
      real_field("momentum", &Config::momentum),
      real_field("weight_decay", &Config::weight_decay),
      real_field("poly_power", &Config::poly_power),
      int_field("max_iters", &Config::max_iters),
      int_field("pretrain_iters", &Config::pretrain_iters),
      real_field("pretrain_lr", &Config::pretrain_lr),
      real_field("disc_lr", &Config::disc_lr),
      real_field("adam_beta1", &Config::adam_beta1),
      real_field("adam_beta2", &Config::adam_beta2),
      real_field("adv_real", &Config::adv_real),
      real_field("adv_fake", &Config::adv_fake),
      int_field("crop_source", &Config::crop_source),
      real_field("scale_source_min", &Config::scale_source_min),
      real_field("scale_source_max", &Config::scale_source_max),
      int_field("crop_target", &Config::crop_target),
      real_field("scale_target_min", &Config::scale_target_min),
      real_field("scale_target_max", &Config::scale_target_max),
      bool_field("flip", &Config::flip),
      int_field("batch_size", &Config::batch_size),
      {"taxonomy", [](Config& c, std::string_view v) { c.taxonomy = std::string(v); },
       [](const Config& c) { return c.taxonomy; }},
      int_field("relight_width", &Config::relight_width),
      int_field("seg_width", &Config::seg_width),
      int_field("disc_width", &Config::disc_width),
      bool_field("use_relight", &Config::use_relight),
      bool_field("use_light_loss", &Config::use_light_loss),
      {"light_domains",
       [](Config& c, std::string_view v) {
         if (v == "all") c.light_domains = LightDomains::all;
         else if (v == "targets") c.light_domains = LightDomains::targets;
         else throw ConfigError("light_domains: expected all|targets");
       },
       [](const Config& c) { return std::string(to_string(c.light_domains)); }},
      {"bn_stats",
       [](Config& c, std::string_view v) {
         if (v == "night") c.bn_stats = BnStats::night;
         else if (v == "all") c.bn_stats = BnStats::all;
         else throw ConfigError("bn_stats: expected night|all");
       },
       [](const Config& c) { return std::string(to_string(c.bn_stats)); }},
      {"static_loss",
       [](Config& c, std::string_view v) {
         if (v == "windowed") c.static_loss = StaticLossKind::windowed;
         else if (v == "ce") c.static_loss = StaticLossKind::ce;
         else if (v == "focal") c.static_loss = StaticLossKind::focal;
         else if (v == "none") c.static_loss = StaticLossKind::none;
         else throw ConfigError("static_loss: expected windowed|ce|focal|none");
       },
       [](const Config& c) { return std::string(to_string(c.static_loss)); }},
      {"static_modulation",
       [](Config& c, std::string_view v) {
         if (v == "pixel") c.static_modulation = StaticModulation::pixel;
         else if (v == "matched") c.static_modulation = StaticModulation::matched;
         else throw ConfigError("static_modulation: expected pixel|matched");
       },
       [](const Config& c) { return std::string(to_string(c.static_modulation)); }},
      bool_field("reweight_seg", &Config::reweight_seg),
      bool_field("reweight_pseudo", &Config::reweight_pseudo),
      bool_field("use_pretrain", &Config::use_pretrain),
      int_field("checkpoint_every", &Config::checkpoint_every),
      int_field("val_every", &Config::val_every),
      int_field("seed", &Config::seed),
  };
  return table;
}

void check_crop(std::string_view name, int crop) {
  if (crop <= 0 || crop % 32 != 0) {
    throw ConfigError(std::string(name) + ": crop not divisible by 32 (" +
                      std::to_string(crop) + ")");
  }
}

void check_scale(std::string_view name, double lo, double hi) {
  if (!(lo > 0 && lo <= hi && hi <= 2.0)) {
    throw ConfigError(std::string(name) + ": scale range must satisfy 0 < min <= max <= 2");
  }
}

}  // namespace

std::string_view to_string(StaticLossKind k) {
  switch (k) {
    case StaticLossKind::windowed: return "windowed";
    case StaticLossKind::ce: return "ce";
    case StaticLossKind::focal: return "focal";
    case StaticLossKind::none: return "none";
  }
  return "?";
}

std::string_view to_string(StaticModulation m) {
  return m == StaticModulation::pixel ? "pixel" : "matched";
}

std::string_view to_string(LightDomains d) {
  return d == LightDomains::all ? "all" : "targets";
}

std::string_view to_string(BnStats s) { return s == BnStats::night ? "night" : "all"; }

Config validate_config(const Config& cfg) {
  const std::pair<std::string_view, double> weights[] = {
      {"alpha_tv", cfg.alpha_tv},       {"alpha_exp", cfg.alpha_exp},
      {"alpha_ssim", cfg.alpha_ssim},   {"beta_light", cfg.beta_light},
      {"beta_seg", cfg.beta_seg},       {"beta_static", cfg.beta_static},
      {"beta_adv", cfg.beta_adv}};
  for (const auto& [name, v] : weights) {
    if (!(v >= 0)) throw ConfigError(std::string(name) + ": negative loss weight");
  }
  if (!(cfg.std_train > 0)) throw ConfigError("std_train: must be positive");
  if (!(cfg.std_test > 0)) throw ConfigError("std_test: must be positive");
  if (!(cfg.focal_gamma >= 0)) throw ConfigError("focal_gamma: must be non-negative");
  if (!(cfg.lr >= 0)) throw ConfigError("lr: must be non-negative");
  if (!(cfg.pretrain_lr >= 0)) throw ConfigError("pretrain_lr: must be non-negative");
  if (!(cfg.disc_lr >= 0)) throw ConfigError("disc_lr: must be non-negative");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw ConfigError("momentum: must lie in [0,1)");
  if (!(cfg.weight_decay >= 0)) throw ConfigError("weight_decay: must be non-negative");
  if (!(cfg.poly_power >= 0)) throw ConfigError("poly_power: must be non-negative");
  if (cfg.max_iters < 0) throw ConfigError("max_iters: must be non-negative");
  if (cfg.pretrain_iters < 0) throw ConfigError("pretrain_iters: must be non-negative");
  if (!(cfg.adam_beta1 >= 0 && cfg.adam_beta1 < 1)) throw ConfigError("adam_beta1: must lie in [0,1)");
  if (!(cfg.adam_beta2 >= 0 && cfg.adam_beta2 < 1)) throw ConfigError("adam_beta2: must lie in [0,1)");
  if (cfg.adv_real == cfg.adv_fake) throw ConfigError("adv_real: must differ from adv_fake");
  check_crop("crop_source", cfg.crop_source);
  check_crop("crop_target", cfg.crop_target);
  check_scale("scale_source", cfg.scale_source_min, cfg.scale_source_max);
  check_scale("scale_target", cfg.scale_target_min, cfg.scale_target_max);
  if (cfg.batch_size < 1) throw ConfigError("batch_size: must be at least 1");
  if (cfg.relight_width < 1) throw ConfigError("relight_width: must be positive");
  if (cfg.seg_width < 1) throw ConfigError("seg_width: must be positive");
  if (cfg.disc_width < 1) throw ConfigError("disc_width: must be positive");
  if (cfg.checkpoint_every < 0) throw ConfigError("checkpoint_every: must be non-negative");
  if (cfg.val_every < 0) throw ConfigError("val_every: must be non-negative");
  (void)LabelSet::by_name(cfg.taxonomy);
  return cfg;
}

void set_config_value(Config& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.name == key) {
      f.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

Config parse_config_text(std::string_view text, Config base) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

Config load_config_file(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::string to_config_text(const Config& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += std::string(f.name) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace dannet
