#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace dannet {

enum class StaticLossKind { windowed, ce, focal, none };
enum class StaticModulation { pixel, matched };
enum class LightDomains { all, targets };
/// Which forward passes update batch-norm running statistics during adaptation.
enum class BnStats { night, all };

/// Every tunable of the system. Member initializers are the published
/// defaults; iteration counts and network widths are desk-scale.
struct Config {
  // light loss
  double alpha_tv = 10.0;
  double alpha_exp = 1.0;
  double alpha_ssim = 1.0;
  // total generator objective
  double beta_light = 0.01;
  double beta_seg = 1.0;
  double beta_static = 1.0;
  double beta_adv = 0.01;

  // probability re-weighting
  double std_train = 0.05;
  double std_test = 0.16;
  double avg = 1.0;

  double focal_gamma = 1.0;

  // generator optimizer (SGD)
  double lr = 2.5e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;
  std::int64_t max_iters = 2000;
  std::int64_t pretrain_iters = 1000;
  double pretrain_lr = 2.5e-4;

  // discriminator optimizer (Adam)
  double disc_lr = 2.5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adv_real = 1.0;
  double adv_fake = 0.0;

  // augmentation
  int crop_source = 512;
  double scale_source_min = 0.5;
  double scale_source_max = 1.0;
  int crop_target = 960;
  double scale_target_min = 0.9;
  double scale_target_max = 1.1;
  bool flip = true;
  int batch_size = 2;

  // architecture
  std::string taxonomy = "cityscapes";
  int relight_width = 32;
  int seg_width = 16;
  int disc_width = 64;

  // ablation switches
  bool use_relight = true;
  bool use_light_loss = true;
  LightDomains light_domains = LightDomains::all;
  BnStats bn_stats = BnStats::night;
  StaticLossKind static_loss = StaticLossKind::windowed;
  StaticModulation static_modulation = StaticModulation::pixel;
  bool reweight_seg = true;
  bool reweight_pseudo = true;
  bool use_pretrain = true;

  // bookkeeping
  std::int64_t checkpoint_every = 500;
  std::int64_t val_every = 0;
  std::uint64_t seed = 0;

  bool operator==(const Config&) const = default;
};

/// Checks every invariant and returns the config unchanged when valid.
/// Throws ConfigError naming the first violated field.
Config validate_config(const Config& cfg);

/// Sets one field from its textual form. Unknown keys throw ConfigError.
void set_config_value(Config& cfg, std::string_view key, std::string_view value);

/// Parses `key = value` lines (`#` starts a comment) on top of `base`.
Config parse_config_text(std::string_view text, Config base = {});
Config load_config_file(const std::filesystem::path& path, Config base = {});

/// Round-trippable `key = value` rendering of every field.
std::string to_config_text(const Config& cfg);

std::string_view to_string(StaticLossKind k);
std::string_view to_string(StaticModulation m);
std::string_view to_string(LightDomains d);
std::string_view to_string(BnStats s);

}  // namespace dannet
