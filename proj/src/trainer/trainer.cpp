#include "dannet/trainer/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dannet/core/error.hpp"
#include "dannet/evaluation/metrics.hpp"
#include "dannet/relight/light_loss.hpp"
#include "dannet/segmentation/weighted_ce.hpp"
#include "dannet/static_supervision/static_loss.hpp"
#include "dannet/trainer/schedule.hpp"

namespace dannet::trainer {
namespace {

namespace fs = std::filesystem;

// Stacks 1 x C x H x W tensors along the batch axis.
Tensor stack(const std::vector<Tensor>& items) {
  const Shape s = items.front().shape();
  Tensor out(Shape{static_cast<int>(items.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(items[i].shape(), s, "stack");
    std::copy(items[i].storage().begin(), items[i].storage().end(),
              out.storage().begin() + i * s.numel());
  }
  return out;
}

std::vector<Tensor> snapshot_buffers(nn::Module& m) {
  std::vector<Tensor> out;
  for (const auto& b : m.buffers()) out.push_back(*b.tensor);
  return out;
}

void reset_buffers(nn::Module& m, const std::vector<Tensor>& saved) {
  const auto bufs = m.buffers();
  for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].tensor = saved[i];
}

LabelBatch stack(const std::vector<LabelBatch>& items) {
  LabelBatch out(static_cast<int>(items.size()), items.front().h, items.front().w);
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].data.begin(), items[i].data.end(),
              out.data.begin() + i * items[i].data.size());
  }
  return out;
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

template <typename Map>
const typename Map::mapped_type& lookup(const Map& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw DataError("checkpoint: missing entry '" + key + "'");
  return it->second;
}

std::vector<nn::NamedBuffer> prefixed(std::vector<nn::NamedBuffer> bufs, const std::string& p) {
  for (auto& b : bufs) b.name = p + b.name;
  return bufs;
}

}  // namespace

std::vector<nn::NamedParam> Models::generator_parameters() const {
  std::vector<nn::NamedParam> out;
  if (relight) out = relight->parameters();
  for (auto& p : seg->parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<nn::NamedParam> Models::discriminator_parameters() const {
  auto out = disc_day->parameters();
  for (auto& p : disc_night->parameters()) out.push_back(std::move(p));
  return out;
}

Models build_models(const Config& cfg, const LabelSet& labels, std::mt19937_64& rng) {
  Models m;
  // The relight net is always drawn so the remaining networks start from the
  // same weights with and without it.
  auto relight = std::make_unique<relight::RelightNet>(cfg.relight_width, rng);
  if (cfg.use_relight) m.relight = std::move(relight);
  m.seg = std::make_unique<segmentation::SmallSegNet>(labels.size(), cfg.seg_width, rng);
  m.disc_day = std::make_unique<adversarial::Discriminator>(labels.size(), cfg.disc_width, rng);
  m.disc_night = std::make_unique<adversarial::Discriminator>(labels.size(), cfg.disc_width, rng);
  m.disc_day->set_name("disc_d");
  m.disc_night->set_name("disc_n");
  return m;
}

double total_loss(const Config& cfg, double l_light, double l_seg, double l_static, double l_adv) {
  return cfg.beta_light * l_light + cfg.beta_seg * l_seg + cfg.beta_static * l_static +
         cfg.beta_adv * l_adv;
}

Trainer::Trainer(Config cfg, LabelSet labels, std::vector<double> raw_weights)
    : cfg_(validate_config(cfg)), labels_(std::move(labels)), raw_weights_(std::move(raw_weights)),
      rng_(cfg_.seed) {
  models_ = build_models(cfg_, labels_, rng_);
  init_optimizers();
}

Trainer::Trainer(Config cfg, LabelSet labels, std::vector<double> raw_weights, Models models)
    : cfg_(validate_config(cfg)), labels_(std::move(labels)), raw_weights_(std::move(raw_weights)),
      rng_(cfg_.seed), models_(std::move(models)) {
  if (!models_.seg || !models_.disc_day || !models_.disc_night) {
    throw ConfigError("trainer: segmentation and both discriminators are required");
  }
  init_optimizers();
}

void Trainer::init_optimizers() {
  if (static_cast<int>(raw_weights_.size()) != labels_.size()) {
    throw ShapeError("trainer: raw class weights do not match the label set");
  }
  if (models_.seg->num_classes() != labels_.size()) {
    throw ShapeError("trainer: segmentation output does not match the label set");
  }
  w_train_ = reweight::normalize_weights(raw_weights_, cfg_.std_train, cfg_.avg);
  gen_opt_ = std::make_unique<nn::Sgd>(models_.generator_parameters(), cfg_.momentum,
                                       cfg_.weight_decay);
  opt_day_ = std::make_unique<nn::Adam>(models_.disc_day->parameters(), cfg_.adam_beta1,
                                        cfg_.adam_beta2);
  opt_night_ = std::make_unique<nn::Adam>(models_.disc_night->parameters(), cfg_.adam_beta1,
                                          cfg_.adam_beta2);
}

void Trainer::set_data(std::vector<data::LabeledImage> source, std::vector<data::ImagePair> pairs) {
  if (source.empty()) throw DataError("trainer: source split is empty");
  if (pairs.empty()) throw DataError("trainer: no day/night target pairs");
  for (const auto& s : source) {
    if (!s.label) throw DataError("trainer: source image '" + s.id + "' has no label");
  }
  source_ = std::move(source);
  pairs_ = std::move(pairs);
  source_sampler_ = Sampler(source_.size());
  pair_sampler_ = Sampler(pairs_.size());
}

Batch Trainer::sample_batch() {
  if (source_.empty()) throw DataError("trainer: no data attached");
  const auto src_idx = source_sampler_.next_batch(cfg_.batch_size, rng_);
  const auto pair_idx = pair_sampler_.next_batch(cfg_.batch_size, rng_);
  std::vector<Tensor> imgs, days, nights;
  std::vector<LabelBatch> lbls;
  Batch b;
  for (std::size_t i : src_idx) {
    const auto& s = source_[i];
    auto a = augment_sample(s.image, &*s.label, cfg_.crop_source,
                            {cfg_.scale_source_min, cfg_.scale_source_max}, cfg_.flip, rng_);
    imgs.push_back(std::move(a.image));
    lbls.push_back(std::move(a.label));
  }
  for (std::size_t i : pair_idx) {
    const auto& p = pairs_[i];
    const Shape s = p.day.shape();
    const CropGeometry g = draw_geometry(s.h, s.w, cfg_.crop_target,
                                         {cfg_.scale_target_min, cfg_.scale_target_max},
                                         cfg_.flip, rng_);
    auto d = apply_geometry(p.day, nullptr, g);
    auto n = apply_geometry(p.night, nullptr, g);
    days.push_back(std::move(d.image));
    nights.push_back(std::move(n.image));
    b.target_valid.insert(b.target_valid.end(), d.valid.begin(), d.valid.end());
  }
  b.source = stack(imgs);
  b.source_label = stack(lbls);
  b.day = stack(days);
  b.night = stack(nights);
  return b;
}

nn::Var Trainer::generator_losses(const Batch& batch, StepLosses& losses, Predictions* preds,
                                  const static_supervision::PseudoLabel* pseudo) {
  auto& relight = models_.relight;
  auto& seg = *models_.seg;
  const nn::Var in_s = nn::Var::constant(batch.source);
  const nn::Var in_d = nn::Var::constant(batch.day);
  const nn::Var in_n = nn::Var::constant(batch.night);
  nn::Var r_s = in_s, r_d = in_d, r_n = in_n;

  std::vector<std::pair<float, nn::Var>> light_terms;
  losses.l_tv = losses.l_exp = losses.l_ssim = losses.l_light = 0;
  // Evaluation runs on night images, so only the night forward may move the
  // running statistics; the other domains still normalize with batch stats.
  const bool night_stats = cfg_.bn_stats == BnStats::night;
  if (relight) {
    const auto saved = snapshot_buffers(*relight);
    r_s = relight->forward(in_s);
    r_d = relight->forward(in_d);
    if (night_stats) reset_buffers(*relight, saved);
    r_n = relight->forward(in_n);
    if (cfg_.use_light_loss) {
      const double target = relight::mean_intensity(batch.night);
      const relight::LightWeights alpha{cfg_.alpha_tv, cfg_.alpha_exp, cfg_.alpha_ssim};
      std::vector<std::pair<const Tensor*, nn::Var>> domains;
      if (cfg_.light_domains == LightDomains::all) domains.emplace_back(&batch.source, r_s);
      domains.emplace_back(&batch.day, r_d);
      domains.emplace_back(&batch.night, r_n);
      const double share = 1.0 / static_cast<double>(domains.size());
      for (const auto& [input, relit] : domains) {
        relight::LightLossTerms t;
        light_terms.emplace_back(static_cast<float>(share),
                                 relight::light_loss(*input, relit, target, alpha, &t));
        losses.l_tv += share * t.l_tv;
        losses.l_exp += share * t.l_exp;
        losses.l_ssim += share * t.l_ssim;
        losses.l_light += share * t.l_light;
      }
    }
  }

  const auto saved = snapshot_buffers(seg);
  const nn::Var logits_s = seg.forward(r_s);
  const nn::Var p_s = nn::softmax(logits_s);
  const nn::Var p_d = nn::softmax(seg.forward(r_d));
  if (night_stats) reset_buffers(seg, saved);
  const nn::Var p_n = nn::softmax(seg.forward(r_n));

  const auto uniform = reweight::ClassWeights::uniform(labels_.size());
  const nn::Var l_seg = segmentation::weighted_ce(
      logits_s, batch.source_label, (cfg_.reweight_seg ? w_train_ : uniform).w,
      labels_.ignore_index());
  losses.l_seg = l_seg.value()[0];

  nn::Var l_static;
  losses.l_static = 0;
  if (cfg_.static_loss != StaticLossKind::none) {
    const auto derived =
        pseudo ? *pseudo
               : static_supervision::make_pseudo_label(
                     LikelihoodMap{p_d.value(), MapKind::probabilities},
                     cfg_.reweight_pseudo ? w_train_ : uniform, labels_, batch.target_valid);
    l_static = static_supervision::static_loss(
        nn::select_channels(p_n, labels_.static_classes()), derived, cfg_.static_loss,
        cfg_.focal_gamma, cfg_.static_modulation);
    losses.l_static = l_static.value()[0];
  }

  const nn::Var l_adv = adversarial::gen_adv_loss(models_.disc_day->forward(p_d),
                                                  models_.disc_night->forward(p_n), cfg_.adv_real);
  losses.l_adv = l_adv.value()[0];
  losses.l_total = total_loss(cfg_, losses.l_light, losses.l_seg, losses.l_static, losses.l_adv);

  if (preds) *preds = Predictions{p_s.value(), p_d.value(), p_n.value()};

  std::vector<std::pair<float, nn::Var>> terms;
  if (!light_terms.empty()) {
    terms.emplace_back(static_cast<float>(cfg_.beta_light), nn::weighted_sum(light_terms));
  }
  terms.emplace_back(static_cast<float>(cfg_.beta_seg), l_seg);
  terms.emplace_back(static_cast<float>(cfg_.beta_static), l_static);
  terms.emplace_back(static_cast<float>(cfg_.beta_adv), l_adv);
  return nn::weighted_sum(terms);
}

StepLosses Trainer::generator_step(const Batch& batch, Predictions* preds) {
  StepLosses losses;
  losses.iter = iter_;
  losses.lr = poly_lr(cfg_.lr, iter_, cfg_.max_iters, cfg_.poly_power);
  models_.seg->set_training(true);
  if (models_.relight) models_.relight->set_training(true);
  gen_opt_->zero_grad();
  const nn::Var total = generator_losses(batch, losses, preds);
  total.backward();
  gen_opt_->step(losses.lr);
  // The adversarial term reached the discriminators; their update comes from
  // their own objective only.
  models_.disc_day->zero_grad();
  models_.disc_night->zero_grad();
  return losses;
}

std::pair<double, double> Trainer::discriminator_step(const Predictions& preds) {
  const double lr = poly_lr(cfg_.disc_lr, iter_, cfg_.max_iters, cfg_.poly_power);
  const nn::Var ps = nn::Var::constant(preds.p_source);
  const nn::Var pd = nn::Var::constant(preds.p_day);
  const nn::Var pn = nn::Var::constant(preds.p_night);
  auto one = [&](adversarial::Discriminator& d, nn::Adam& opt, const nn::Var& target) {
    opt.zero_grad();
    const nn::Var loss =
        adversarial::disc_loss(d.forward(ps), d.forward(target), cfg_.adv_real, cfg_.adv_fake);
    loss.backward();
    opt.step(lr);
    return static_cast<double>(loss.value()[0]);
  };
  const double dd = one(*models_.disc_day, *opt_day_, pd);
  const double dn = one(*models_.disc_night, *opt_night_, pn);
  return {dd, dn};
}

std::optional<StepLosses> Trainer::step() {
  if (iter_ >= cfg_.max_iters) throw ConfigError("trainer: max_iters already reached");
  const Batch batch = sample_batch();
  std::optional<StepLosses> out;
  try {
    Predictions preds;
    StepLosses l = generator_step(batch, &preds);
    std::tie(l.d_d, l.d_n) = discriminator_step(preds);
    out = l;
  } catch (const DegenerateInputError& e) {
    spdlog::warn("iteration {} skipped: {}", iter_, e.what());
    gen_opt_->zero_grad();
    models_.disc_day->zero_grad();
    models_.disc_night->zero_grad();
  }
  ++iter_;
  return out;
}

Checkpoint Trainer::to_checkpoint() {
  Checkpoint ck;
  if (models_.relight) store_module(ck, *models_.relight);
  store_module(ck, *models_.seg);
  store_module(ck, *models_.disc_day);
  store_module(ck, *models_.disc_night);
  store_buffers(ck, prefixed(gen_opt_->state(), "opt."));
  store_buffers(ck, prefixed(opt_day_->state(), "opt."));
  store_buffers(ck, prefixed(opt_night_->state(), "opt."));
  ck.integers["iter"] = iter_;
  ck.integers["adam_steps_d"] = opt_day_->steps();
  ck.integers["adam_steps_n"] = opt_night_->steps();
  ck.strings["rng"] = rng_text(rng_);
  ck.strings["config"] = to_config_text(cfg_);
  ck.strings["kind"] = "adaptation";
  ck.vectors["raw_weights"] = raw_weights_;
  ck.vectors["sampler_source"] = source_sampler_.state();
  ck.vectors["sampler_pairs"] = pair_sampler_.state();
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (models_.relight) restore_module(ck, *models_.relight);
  restore_module(ck, *models_.seg);
  restore_module(ck, *models_.disc_day);
  restore_module(ck, *models_.disc_night);
  restore_buffers(ck, prefixed(gen_opt_->state(), "opt."));
  restore_buffers(ck, prefixed(opt_day_->state(), "opt."));
  restore_buffers(ck, prefixed(opt_night_->state(), "opt."));
  iter_ = lookup(ck.integers, "iter");
  opt_day_->set_steps(lookup(ck.integers, "adam_steps_d"));
  opt_night_->set_steps(lookup(ck.integers, "adam_steps_n"));
  std::istringstream is(lookup(ck.strings, "rng"));
  is >> rng_;
  if (!is) throw DataError("checkpoint: corrupt RNG state");
  source_sampler_.restore(lookup(ck.vectors, "sampler_source"));
  pair_sampler_.restore(lookup(ck.vectors, "sampler_pairs"));
}

void Trainer::load_pretrained(const Checkpoint& ck) { restore_module(ck, *models_.seg); }

PretrainResult pretrain_source(const Config& cfg_in, const LabelSet& labels,
                               const std::vector<double>& raw_weights,
                               const std::vector<data::LabeledImage>& source) {
  const Config cfg = validate_config(cfg_in);
  if (source.empty()) throw DataError("pretrain: source split is empty");
  for (const auto& s : source) {
    if (!s.label) throw DataError("pretrain: source image '" + s.id + "' has no label");
  }
  std::mt19937_64 rng(cfg.seed);
  Models models = build_models(cfg, labels, rng);
  auto& seg = *models.seg;
  const auto weights = cfg.reweight_seg
                           ? reweight::normalize_weights(raw_weights, cfg.std_train, cfg.avg)
                           : reweight::ClassWeights::uniform(labels.size());
  nn::Sgd opt(seg.parameters(), cfg.momentum, cfg.weight_decay);
  Sampler sampler(source.size());
  PretrainResult res;
  seg.set_training(true);
  for (std::int64_t it = 0; it < cfg.pretrain_iters; ++it) {
    std::vector<Tensor> imgs;
    std::vector<LabelBatch> lbls;
    for (std::size_t i : sampler.next_batch(cfg.batch_size, rng)) {
      auto a = augment_sample(source[i].image, &*source[i].label, cfg.crop_source,
                              {cfg.scale_source_min, cfg.scale_source_max}, cfg.flip, rng);
      imgs.push_back(std::move(a.image));
      lbls.push_back(std::move(a.label));
    }
    opt.zero_grad();
    try {
      const nn::Var loss = segmentation::weighted_ce(seg.forward(nn::Var::constant(stack(imgs))),
                                                     stack(lbls), weights.w, labels.ignore_index());
      loss.backward();
      opt.step(poly_lr(cfg.pretrain_lr, it, cfg.pretrain_iters, cfg.poly_power));
      res.losses.push_back(loss.value()[0]);
    } catch (const DegenerateInputError& e) {
      spdlog::warn("pretrain iteration {} skipped: {}", it, e.what());
    }
  }
  store_module(res.checkpoint, seg);
  res.checkpoint.strings["config"] = to_config_text(cfg);
  res.checkpoint.strings["kind"] = "pretrain";
  res.checkpoint.vectors["raw_weights"] = raw_weights;
  res.checkpoint.integers["iter"] = cfg.pretrain_iters;
  return res;
}

Models load_models(const Checkpoint& ck, LabelSet* labels_out, Config* cfg_out) {
  Config cfg = parse_config_text(lookup(ck.strings, "config"));
  const LabelSet labels = LabelSet::by_name(cfg.taxonomy);
  const bool pretrain_only = ck.strings.count("kind") && ck.strings.at("kind") == "pretrain";
  // A pretrained checkpoint carries only the segmentation net.
  if (pretrain_only) cfg.use_relight = false;
  std::mt19937_64 rng(cfg.seed);
  Models m = build_models(cfg, labels, rng);
  if (m.relight) restore_module(ck, *m.relight);
  restore_module(ck, *m.seg);
  if (!pretrain_only) {
    restore_module(ck, *m.disc_day);
    restore_module(ck, *m.disc_night);
  }
  if (labels_out) *labels_out = labels;
  if (cfg_out) *cfg_out = cfg;
  return m;
}

std::string loss_csv_header() {
  return "iter,lr,l_tv,l_exp,l_ssim,l_seg,l_static,l_adv,l_total,d_d,d_n";
}

std::string loss_csv_row(const StepLosses& l) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(l.iter), l.lr, l.l_tv, l.l_exp, l.l_ssim, l.l_seg,
                l.l_static, l.l_adv, l.l_total, l.d_d, l.d_n);
  return buf;
}

namespace {

// Keeps the header and rows logged before iteration `upto`.
void truncate_loss_log(const fs::path& path, std::int64_t upto) {
  std::vector<std::string> kept;
  if (std::ifstream in{path}) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line.rfind("iter,", 0) == 0) continue;
      if (std::stoll(line.substr(0, line.find(','))) < upto) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  out << loss_csv_header() << '\n';
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

void run_training(const Config& cfg, const LabelSet& labels, const std::vector<double>& raw_weights,
                  std::vector<data::LabeledImage> source, std::vector<data::ImagePair> pairs,
                  const RunOptions& opts) {
  Trainer trainer(cfg, labels, raw_weights);
  trainer.set_data(std::move(source), std::move(pairs));
  fs::create_directories(opts.out_dir);
  const fs::path log_path = opts.out_dir / "losses.csv";
  const fs::path val_path = opts.out_dir / "val.csv";
  if (opts.resume) {
    trainer.restore(load_checkpoint(*opts.resume));
    spdlog::info("resumed from {} at iteration {}", opts.resume->string(), trainer.iteration());
  } else if (cfg.use_pretrain && opts.pretrained) {
    trainer.load_pretrained(load_checkpoint(*opts.pretrained));
    spdlog::info("segmentation initialized from {}", opts.pretrained->string());
  } else if (cfg.use_pretrain) {
    spdlog::warn("no pretrained checkpoint given; segmentation starts from scratch");
  }
  truncate_loss_log(log_path, trainer.iteration());
  if (!opts.resume && !opts.validation.empty() && cfg.val_every > 0) {
    std::ofstream(val_path, std::ios::trunc) << "iter,miou\n";
  }
  std::ofstream log(log_path, std::ios::app);
  const auto val_weights = reweight::eval_weights(raw_weights, cfg.std_test, cfg.avg);

  while (trainer.iteration() < cfg.max_iters) {
    if (auto l = trainer.step()) {
      log << loss_csv_row(*l) << '\n';
      if (l->iter % 50 == 0) {
        spdlog::info("iter {} lr {:.3g} seg {:.4f} static {:.4f} adv {:.4f} total {:.4f}", l->iter,
                     l->lr, l->l_seg, l->l_static, l->l_adv, l->l_total);
      }
    }
    const std::int64_t done = trainer.iteration();
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.max_iters) {
      log.flush();
      save_checkpoint(trainer.to_checkpoint(), opts.out_dir / "checkpoint.ckpt");
    }
    if (cfg.val_every > 0 && !opts.validation.empty() && done % cfg.val_every == 0) {
      auto& m = trainer.models();
      const auto r = evaluation::evaluate_dataset(m.relight.get(), *m.seg, opts.validation,
                                                  val_weights);
      std::ofstream(val_path, std::ios::app) << done << ',' << r.report.miou << '\n';
      spdlog::info("iter {} night-val mIoU {:.4f}", done, r.report.miou);
    }
  }
  log.flush();
  save_checkpoint(trainer.to_checkpoint(), opts.out_dir / "final.ckpt");
}

}  // namespace dannet::trainer
