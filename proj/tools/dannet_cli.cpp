// Command-line entry point: generate / weights / pretrain / train / eval / relight.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "dannet/core/config.hpp"
#include "dannet/core/error.hpp"
#include "dannet/data/dataset.hpp"
#include "dannet/data/image_io.hpp"
#include "dannet/data/synth.hpp"
#include "dannet/evaluation/metrics.hpp"
#include "dannet/reweight/reweight.hpp"
#include "dannet/trainer/checkpoint.hpp"
#include "dannet/trainer/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dannet;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Verbosity comes from the environment only; output files never depend on it.
void setup_logging() {
  auto logger = spdlog::stderr_color_mt("dannet");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
  if (const char* lvl = std::getenv("DANNET_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(lvl));
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

// Config layering: built-in defaults, then --config, then --set and the
// dedicated flags.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override one config field, key=value (repeatable)");
    app->add_option("--seed", seed, "random seed");
  }

  Config resolve(const std::function<void(Config&)>& flags = {}) const {
    Config cfg;
    if (!file.empty()) {
      cfg = load_config_file(file);
      spdlog::info("config file {} loaded", file);
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (flags) flags(cfg);
    cfg = validate_config(cfg);
    spdlog::debug("resolved config:\n{}", to_config_text(cfg));
    return cfg;
  }
};

std::vector<double> source_raw_weights(const data::DatasetIndex& index, const LabelSet& labels) {
  return reweight::raw_class_weights(
      reweight::floor_absent(data::class_proportions(index, labels)));
}

int run_generate(const fs::path& out, const data::SynthOptions& opts) {
  data::synth_generate(opts, out);
  spdlog::info("wrote {} scenes of {}x{} under {}", opts.n_scenes, opts.size, opts.size,
               out.string());
  return 0;
}

int run_weights(const fs::path& source, const fs::path& out, const Config& cfg) {
  const LabelSet labels = LabelSet::by_name(cfg.taxonomy);
  const auto index = data::load_labeled_index(source, true);
  const auto props = data::class_proportions(index, labels);
  const auto raw = reweight::raw_class_weights(reweight::floor_absent(props));
  const auto train = reweight::normalize_weights(raw, cfg.std_train, cfg.avg);
  const auto test = reweight::eval_weights(raw, cfg.std_test, cfg.avg);
  nlohmann::ordered_json j;
  j["classes"] = labels.names();
  j["proportions"] = props;
  j["raw"] = raw;
  j["train"] = {{"std", cfg.std_train}, {"avg", cfg.avg}, {"weights", train.w}};
  j["test"] = {{"std", cfg.std_test}, {"avg", cfg.avg}, {"weights", test.w}};
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream(out) << j.dump(2) << '\n';
  return 0;
}

int run_pretrain(const fs::path& source, const fs::path& out, const Config& cfg) {
  const LabelSet labels = LabelSet::by_name(cfg.taxonomy);
  const auto index = data::load_labeled_index(source, true);
  const auto images = data::load_images(index);
  const auto res = trainer::pretrain_source(cfg, labels, source_raw_weights(index, labels), images);
  if (!res.losses.empty()) {
    spdlog::info("pretrain loss {:.4f} -> {:.4f} over {} iterations", res.losses.front(),
                 res.losses.back(), res.losses.size());
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  trainer::save_checkpoint(res.checkpoint, out);
  return 0;
}

struct TrainPaths {
  std::string source, day, night, pairs, out, resume, pretrained, val;
};

int run_train(const TrainPaths& p, const Config& cfg) {
  const LabelSet labels = LabelSet::by_name(cfg.taxonomy);
  const auto src_index = data::load_labeled_index(p.source, true);
  const auto pair_index = data::load_paired_index(p.day, p.night, p.pairs);
  if (!pair_index.unmatched.empty()) {
    spdlog::warn("{} target images are not listed in {}", pair_index.unmatched.size(), p.pairs);
  }
  trainer::RunOptions opts;
  opts.out_dir = p.out;
  if (!p.resume.empty()) opts.resume = p.resume;
  if (!p.pretrained.empty()) opts.pretrained = p.pretrained;
  if (!p.val.empty()) opts.validation = data::load_images(data::load_labeled_index(p.val, true, "val"));
  fs::create_directories(opts.out_dir);
  std::ofstream(opts.out_dir / "config.cfg") << to_config_text(cfg);
  trainer::run_training(cfg, labels, source_raw_weights(src_index, labels),
                        data::load_images(src_index), data::load_pairs(pair_index), opts);
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--sweep: not a number '" + item + "'");
    }
  }
  return out;
}

int run_eval(const fs::path& ckpt, const fs::path& data_dir, double std_test, const fs::path& out,
             const std::string& sweep, bool export_png) {
  LabelSet labels = LabelSet::synthetic();
  Config cfg;
  const auto ck = trainer::load_checkpoint(ckpt);
  auto models = trainer::load_models(ck, &labels, &cfg);
  const auto raw = ck.vectors.at("raw_weights");
  const auto split = data::load_images(data::load_labeled_index(data_dir, true, "eval"));
  const auto res = evaluation::evaluate_dataset(models.relight.get(), *models.seg, split,
                                                reweight::eval_weights(raw, std_test, cfg.avg),
                                                export_png);
  fs::create_directories(out);
  std::ofstream(out / "metrics.json") << evaluation::metrics_json(res.report, labels, std_test);
  spdlog::info("mIoU {:.4f} on {} images (std {})", res.report.miou, split.size(), std_test);
  if (export_png) {
    fs::create_directories(out / "predictions");
    for (std::size_t i = 0; i < res.ids.size(); ++i) {
      evaluation::export_prediction(res.predictions[i], labels,
                                    out / "predictions" / (res.ids[i] + ".png"));
    }
  }
  if (!sweep.empty()) {
    const auto points = evaluation::sweep_std(models.relight.get(), *models.seg, split, raw,
                                              cfg.avg, parse_list(sweep));
    evaluation::write_sweep_csv(points, out / "sweep.csv");
  }
  return 0;
}

int run_relight(const fs::path& ckpt, const fs::path& input, const fs::path& out) {
  const auto ck = trainer::load_checkpoint(ckpt);
  auto models = trainer::load_models(ck);
  if (!models.relight) throw ConfigError("checkpoint has no relighting network");
  const auto index = data::load_labeled_index(input, false, "relight");
  fs::create_directories(out);
  models.relight->set_training(false);
  for (const auto& item : data::load_images(index)) {
    const auto r = relight::relight_forward(*models.relight, {item.image, Domain::target_night});
    data::write_png(out / (item.id + ".png"), data::tensor_to_raster(relight::clamp_unit(r.data)));
  }
  spdlog::info("relit {} images into {}", index.records.size(), out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Day-to-night domain adaptation for semantic segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dannet 0.1.0");

  // generate
  auto* gen = app.add_subcommand("generate", "write the synthetic benchmark");
  std::string gen_out;
  data::SynthOptions synth;
  gen->add_option("--out", gen_out, "output root")->required();
  gen->add_option("--seed", synth.seed, "random seed");
  gen->add_option("--scenes", synth.n_scenes, "target pairs and source scenes");
  gen->add_option("--size", synth.size, "side length, multiple of 32");
  gen->add_option("--val-scenes", synth.n_val, "night validation scenes (0: scenes/4)");
  gen->add_option("--night-gain", synth.night.gain);
  gen->add_option("--night-gamma", synth.night.gamma);
  gen->add_option("--night-noise", synth.night.noise_std);
  gen->add_option("--max-shift", synth.night.max_shift, "day/night misalignment bound in px");

  // weights
  auto* wts = app.add_subcommand("weights", "class proportions and normalized weights");
  std::string w_source, w_out;
  ConfigFlags w_cfg;
  w_cfg.attach(wts);
  wts->add_option("--source-dir", w_source, "labeled source split")->required();
  wts->add_option("--out", w_out, "output JSON")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "source-only segmentation training");
  std::string p_source, p_out;
  ConfigFlags p_cfg;
  p_cfg.attach(pre);
  pre->add_option("--source-dir", p_source, "labeled source split")->required();
  pre->add_option("--out", p_out, "checkpoint path")->required();
  std::optional<std::int64_t> p_iters;
  pre->add_option("--iters", p_iters, "pretraining iterations");

  // train
  auto* tr = app.add_subcommand("train", "joint relighting, segmentation and adversarial training");
  TrainPaths tp;
  ConfigFlags t_cfg;
  t_cfg.attach(tr);
  tr->add_option("--source-dir", tp.source, "labeled source split")->required();
  tr->add_option("--target-day-dir", tp.day, "target day images")->required();
  tr->add_option("--target-night-dir", tp.night, "target night images")->required();
  tr->add_option("--pairs-file", tp.pairs, "night<TAB>day pairing")->required();
  tr->add_option("--out-dir", tp.out, "run directory")->required();
  tr->add_option("--resume", tp.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  tr->add_option("--pretrained", tp.pretrained, "source-only checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--val-dir", tp.val, "labeled night split for periodic mIoU");
  std::optional<std::int64_t> t_iters;
  tr->add_option("--iters", t_iters, "training iterations");
  bool no_relight = false, no_light = false, no_reweight = false, no_pretrain = false;
  std::string static_kind;
  tr->add_flag("--no-relight", no_relight, "drop the relighting network");
  tr->add_flag("--no-light-loss", no_light, "drop the light loss");
  tr->add_option("--static-loss", static_kind, "windowed, ce, focal or none")
      ->check(CLI::IsMember({"windowed", "ce", "focal", "none"}));
  tr->add_flag("--no-reweight", no_reweight, "uniform class weights in training");
  tr->add_flag("--no-pretrain", no_pretrain, "start segmentation from scratch");

  // eval
  auto* ev = app.add_subcommand("eval", "mIoU on a labeled split");
  std::string e_ckpt, e_data, e_out, e_sweep;
  double e_std = 0.16;
  bool e_no_export = false;
  ev->add_option("--checkpoint", e_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", e_data, "split with images/ and labels/")->required();
  ev->add_option("--std", e_std, "prediction re-weighting std; <= 0 disables it")
      ->capture_default_str();
  ev->add_option("--out", e_out, "output directory")->required();
  ev->add_option("--sweep", e_sweep, "comma-separated std grid written to sweep.csv");
  ev->add_flag("--no-export", e_no_export, "skip colour-coded prediction PNGs");

  // relight
  auto* rl = app.add_subcommand("relight", "apply the relighting network to a folder");
  std::string r_ckpt, r_in, r_out;
  rl->add_option("--checkpoint", r_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  rl->add_option("--input", r_in, "folder with images/ or PNGs")->required();
  rl->add_option("--out", r_out, "output folder")->required();

  if (argc > 1 && argv[1][0] != '-') {
    const std::string name = argv[1];
    const auto subs = app.get_subcommands([&](CLI::App* sub) { return sub->get_name() == name; });
    if (subs.empty()) {
      std::cerr << "error: unknown subcommand '" << name << "' (see --help)\n";
      return kExitUsage;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return run_generate(gen_out, synth);
    if (wts->parsed()) return run_weights(w_source, w_out, w_cfg.resolve());
    if (pre->parsed()) {
      return run_pretrain(p_source, p_out, p_cfg.resolve([&](Config& c) {
        if (p_iters) c.pretrain_iters = *p_iters;
      }));
    }
    if (tr->parsed()) {
      return run_train(tp, t_cfg.resolve([&](Config& c) {
        if (t_iters) c.max_iters = *t_iters;
        if (no_relight) c.use_relight = false;
        if (no_light) c.use_light_loss = false;
        if (no_reweight) c.reweight_seg = c.reweight_pseudo = false;
        if (no_pretrain) c.use_pretrain = false;
        if (!static_kind.empty()) set_config_value(c, "static_loss", static_kind);
      }));
    }
    if (ev->parsed()) return run_eval(e_ckpt, e_data, e_std, e_out, e_sweep, !e_no_export);
    if (rl->parsed()) return run_relight(r_ckpt, r_in, r_out);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
