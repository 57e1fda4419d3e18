#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dannet/adversarial/discriminator.hpp"
#include "dannet/core/config.hpp"
#include "dannet/data/dataset.hpp"
#include "dannet/nn/optim.hpp"
#include "dannet/relight/relight_net.hpp"
#include "dannet/reweight/reweight.hpp"
#include "dannet/segmentation/seg_net.hpp"
#include "dannet/static_supervision/static_loss.hpp"
#include "dannet/trainer/augment.hpp"
#include "dannet/trainer/checkpoint.hpp"

namespace dannet::trainer {

/// The generator (relight + segmentation) and both discriminators.
struct Models {
  std::unique_ptr<relight::RelightNet> relight;  ///< null when relighting is disabled
  std::unique_ptr<segmentation::SegModel> seg;
  std::unique_ptr<adversarial::Discriminator> disc_day;
  std::unique_ptr<adversarial::Discriminator> disc_night;

  std::vector<nn::NamedParam> generator_parameters() const;
  std::vector<nn::NamedParam> discriminator_parameters() const;
};

/// Builds every network from `rng` in a fixed order.
Models build_models(const Config& cfg, const LabelSet& labels, std::mt19937_64& rng);

/// One augmented training batch for all three domains.
struct Batch {
  Tensor source;                          ///< B x 3 x Cs x Cs
  LabelBatch source_label;
  Tensor day;                             ///< B x 3 x Ct x Ct
  Tensor night;
  std::vector<std::uint8_t> target_valid; ///< B x Ct x Ct, shared by day and night
};

/// Loss values of one iteration as written to the loss log.
struct StepLosses {
  std::int64_t iter = 0;
  double lr = 0;
  double l_tv = 0;
  double l_exp = 0;
  double l_ssim = 0;
  double l_light = 0;
  double l_seg = 0;
  double l_static = 0;
  double l_adv = 0;
  double l_total = 0;
  double d_d = 0;
  double d_n = 0;
};

/// beta-weighted total of the four generator components.
double total_loss(const Config& cfg, double l_light, double l_seg, double l_static, double l_adv);

/// Softmax predictions of one generator pass, detached.
struct Predictions {
  Tensor p_source;
  Tensor p_day;
  Tensor p_night;
};

/// Alternating optimizer state: networks, optimizers, RNG and samplers.
class Trainer {
 public:
  Trainer(Config cfg, LabelSet labels, std::vector<double> raw_weights);
  /// Uses caller-supplied networks (e.g. a toy generator).
  Trainer(Config cfg, LabelSet labels, std::vector<double> raw_weights, Models models);

  void set_data(std::vector<data::LabeledImage> source, std::vector<data::ImagePair> pairs);

  Batch sample_batch();

  /// Forward pass and loss graph for the generator without updating anything.
  /// Returns the scalar total node and fills the loss breakdown. A given
  /// `pseudo` replaces the label derived from the day prediction.
  nn::Var generator_losses(const Batch& batch, StepLosses& losses, Predictions* preds,
                           const static_supervision::PseudoLabel* pseudo = nullptr);
  /// One SGD step on the generator at the current poly LR.
  StepLosses generator_step(const Batch& batch, Predictions* preds);
  /// One Adam step on each discriminator; returns (d_d, d_n).
  std::pair<double, double> discriminator_step(const Predictions& preds);

  /// Samples a batch, runs both steps and advances the iteration counter.
  /// Iterations with degenerate input are skipped (nullopt).
  std::optional<StepLosses> step();

  std::int64_t iteration() const { return iter_; }
  const Config& config() const { return cfg_; }
  const LabelSet& labels() const { return labels_; }
  Models& models() { return models_; }
  const reweight::ClassWeights& train_weights() const { return w_train_; }
  const std::vector<double>& raw_weights() const { return raw_weights_; }

  Checkpoint to_checkpoint();
  void restore(const Checkpoint& ck);
  /// Loads only the segmentation parameters (the source-only stage).
  void load_pretrained(const Checkpoint& ck);

 private:
  void init_optimizers();

  Config cfg_;
  LabelSet labels_;
  std::vector<double> raw_weights_;
  reweight::ClassWeights w_train_;
  std::mt19937_64 rng_;
  Models models_;
  std::unique_ptr<nn::Sgd> gen_opt_;
  std::unique_ptr<nn::Adam> opt_day_;
  std::unique_ptr<nn::Adam> opt_night_;
  std::vector<data::LabeledImage> source_;
  std::vector<data::ImagePair> pairs_;
  Sampler source_sampler_;
  Sampler pair_sampler_;
  std::int64_t iter_ = 0;
};

/// Source-only stage: segmentation net, weighted CE, SGD with poly decay.
struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  ///< one per iteration
};

PretrainResult pretrain_source(const Config& cfg, const LabelSet& labels,
                               const std::vector<double>& raw_weights,
                               const std::vector<data::LabeledImage>& source);

/// Rebuilds networks from a checkpoint's stored config and parameters.
Models load_models(const Checkpoint& ck, LabelSet* labels_out = nullptr,
                   Config* cfg_out = nullptr);

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> pretrained;
  std::vector<data::LabeledImage> validation;  ///< night-val for periodic mIoU
};

/// Full adaptation run: writes losses.csv, periodic checkpoints, final.ckpt
/// and (when validation data is given) val.csv under out_dir.
void run_training(const Config& cfg, const LabelSet& labels, const std::vector<double>& raw_weights,
                  std::vector<data::LabeledImage> source, std::vector<data::ImagePair> pairs,
                  const RunOptions& opts);

std::string loss_csv_header();
std::string loss_csv_row(const StepLosses& l);

}  // namespace dannet::trainer
