#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "dannet/data/synth.hpp"
#include "dannet/reweight/reweight.hpp"
#include "dannet/trainer/augment.hpp"
#include "dannet/trainer/checkpoint.hpp"
#include "dannet/trainer/schedule.hpp"
#include "dannet/trainer/trainer.hpp"
#include "test_util.hpp"

namespace dannet::trainer {
namespace {

using dannet::testing::TempDir;

// In-memory synthetic scenes at 32x32.
struct Fixture {
  std::vector<data::LabeledImage> source;
  std::vector<data::ImagePair> pairs;
  std::vector<double> raw;
  LabelSet labels = LabelSet::synthetic();

  explicit Fixture(int n = 6, int size = 32) {
    std::mt19937_64 rng(11);
    std::vector<LabelBatch> all;
    for (int i = 0; i < n; ++i) {
      auto s = data::render_scene(rng, size, data::SceneStyle::source_day);
      all.push_back(s.label);
      source.push_back({"s" + std::to_string(i), s.image, s.label});
      auto t = data::render_scene(rng, size, data::SceneStyle::target_day);
      pairs.push_back({"p" + std::to_string(i), t.image,
                       data::render_night(t.image, data::NightParams{}, 1, -1, rng)});
    }
    raw = reweight::raw_class_weights(
        reweight::floor_absent(data::class_proportions(all, labels)));
  }
};

Config tiny_config() {
  Config c;
  c.taxonomy = "synthetic";
  c.crop_source = 32;
  c.crop_target = 32;
  c.scale_source_min = 0.8;
  c.scale_source_max = 1.2;
  c.relight_width = 4;
  c.seg_width = 4;
  c.disc_width = 4;
  c.max_iters = 20;
  c.lr = 1e-2;
  c.checkpoint_every = 0;
  return c;
}

std::vector<Tensor> snapshot(const std::vector<nn::NamedParam>& ps) {
  std::vector<Tensor> out;
  for (const auto& p : ps) out.push_back(p.var.value());
  return out;
}

bool same(const std::vector<nn::NamedParam>& ps, const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!(ps[i].var.value() == snap[i])) return false;
  }
  return true;
}

// logits[k](i) = a * u_k(i) + b * v_k(i) with u a fixed colour projection of
// the image and v a fixed spatial pattern.
class ToySeg : public segmentation::SegModel {
 public:
  explicit ToySeg(int k) : k_(k) {
    a = nn::Var::parameter(Tensor(Shape{1, 1, 1, 1}, 1.5f));
    b = nn::Var::parameter(Tensor(Shape{1, 1, 1, 1}, -0.7f));
  }
  nn::Var forward(const nn::Var& x) override {
    const Shape s = x.shape();
    Tensor u(Shape{s.n, k_, s.h, s.w}), v(u.shape());
    for (int n = 0; n < s.n; ++n)
      for (int k = 0; k < k_; ++k)
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx) {
            double acc = 0;
            for (int c = 0; c < 3; ++c) acc += std::sin(1.0 + k * 0.7 + c * 1.3) * x.value()(n, c, y, xx);
            u(n, k, y, xx) = static_cast<float>(2.0 * acc);
            v(n, k, y, xx) = static_cast<float>(std::cos(0.3 * k * y + 0.2 * xx + k));
          }
    Tensor out(u.shape());
    const float av = a.value()[0], bv = b.value()[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av * u[i] + bv * v[i];
    nn::Var pa = a, pb = b;
    return nn::Var::make(std::move(out), {a, b}, [pa, pb, u, v](const Tensor& g) {
      double ga = 0, gb = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga += double(g[i]) * u[i];
        gb += double(g[i]) * v[i];
      }
      nn::accumulate(pa, Tensor(Shape{1, 1, 1, 1}, static_cast<float>(ga)));
      nn::accumulate(pb, Tensor(Shape{1, 1, 1, 1}, static_cast<float>(gb)));
    });
  }
  int num_classes() const override { return k_; }
  std::vector<nn::NamedParam> parameters() const override { return {{"toy.a", a}, {"toy.b", b}}; }
  void set_training(bool) override {}

  nn::Var a, b;

 private:
  int k_;
};

TEST(PolyLr, DocumentedExamples) {
  EXPECT_DOUBLE_EQ(poly_lr(2.5e-4, 0, 100, 0.9), 2.5e-4);
  EXPECT_DOUBLE_EQ(poly_lr(2.5e-4, 100, 100, 0.9), 0.0);
  EXPECT_NEAR(poly_lr(1.0, 50, 100, 0.9), 0.535886731, 1e-9);
  EXPECT_THROW(poly_lr(1.0, 101, 100, 0.9), ConfigError);
}

TEST(PolyLr, NonIncreasing) {
  double prev = poly_lr(1.0, 0, 37, 0.9);
  for (int i = 1; i <= 37; ++i) {
    const double cur = poly_lr(1.0, i, 37, 0.9);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
}

TEST(Augment, FlipIsAnInvolution) {
  std::mt19937_64 rng(1);
  const Tensor t = dannet::testing::random_tensor({1, 3, 5, 7}, rng);
  EXPECT_EQ(flip_horizontal(flip_horizontal(t)), t);
  LabelBatch l(1, 3, 4);
  for (std::size_t i = 0; i < l.size(); ++i) l.data[i] = static_cast<int>(i % 5);
  EXPECT_EQ(flip_horizontal(flip_horizontal(l)), l);
}

TEST(Augment, ReferenceSettingsGiveFullCrops) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto g = draw_geometry(1024, 2048, 512, {0.5, 1.0}, true, rng);
    EXPECT_EQ(g.crop, 512);
    EXPECT_GE(g.scale, 0.5);
    EXPECT_LE(g.scale, 1.0);
    const auto d = draw_geometry(1080, 1920, 960, {0.9, 1.1}, true, rng);
    EXPECT_GE(d.scale, 0.9);
    EXPECT_LE(d.scale, 1.1);
  }
}

TEST(Augment, ImageAndLabelStayAligned) {
  // Image channel 0 encodes the label, so nearest and bilinear agree away
  // from label edges.
  std::mt19937_64 rng(3);
  auto scene = data::render_scene(rng, 32, data::SceneStyle::source_day);
  Tensor img(Shape{1, 3, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) img(0, 0, y, x) = static_cast<float>(scene.label.at(0, y, x));
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = augment_sample(img, &scene.label, 32, {0.7, 1.3}, true, rng);
    ASSERT_EQ(a.image.shape(), (Shape{1, 3, 32, 32}));
    int checked = 0;
    for (int y = 1; y < 31; ++y)
      for (int x = 1; x < 31; ++x) {
        const int lbl = a.label.at(0, y, x);
        if (!a.valid[y * 32 + x]) {
          EXPECT_EQ(lbl, kIgnoreIndex);
          EXPECT_EQ(a.image(0, 0, y, x), 0.0f);
          continue;
        }
        bool flat = true;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) flat &= a.label.at(0, y + dy, x + dx) == lbl;
        if (!flat) continue;
        EXPECT_NEAR(a.image(0, 0, y, x), lbl, 1e-4);
        ++checked;
      }
    EXPECT_GT(checked, 100);
  }
}

TEST(Sampler, EveryEpochIsAPermutation) {
  std::mt19937_64 rng(4);
  Sampler s(7);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> seen;
    for (int i = 0; i < 7; ++i) seen.insert(s.next(rng));
    EXPECT_EQ(seen.size(), 7u);
  }
}

TEST(Sampler, StateRestoresTheStream) {
  std::mt19937_64 rng(5);
  Sampler s(5);
  s.next_batch(3, rng);
  Sampler copy;
  copy.restore(s.state());
  std::mt19937_64 rng2 = rng;
  EXPECT_EQ(s.next_batch(9, rng), copy.next_batch(9, rng2));
}

TEST(Checkpoint, RoundTripAndCorruption) {
  TempDir tmp;
  std::mt19937_64 rng(6);
  Checkpoint ck;
  ck.tensors["a"] = dannet::testing::random_tensor({2, 3, 4, 5}, rng);
  ck.integers["iter"] = -42;
  ck.vectors["v"] = {1.5, -2.25, 1e-300};
  ck.strings["s"] = "x = 1\ny = two";
  const auto path = tmp.path() / "c.ckpt";
  save_checkpoint(ck, path);
  EXPECT_EQ(load_checkpoint(path), ck);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));

  std::ofstream(tmp.path() / "bad.ckpt", std::ios::binary) << "NOTACKPT";
  EXPECT_THROW(load_checkpoint(tmp.path() / "bad.ckpt"), DataError);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    bytes = s.str();
  }
  std::ofstream(tmp.path() / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(tmp.path() / "short.ckpt"), DataError);
}

TEST(TotalLoss, BetaWeightedExample) {
  const Config c;
  EXPECT_NEAR(total_loss(c, 1.25, 0.4, 0.3, 2.0), 0.7325, 1e-12);
}

TEST(Trainer, LoggedTotalIsTheWeightedSumOfComponents) {
  Fixture fx;
  Trainer t(tiny_config(), fx.labels, fx.raw);
  t.set_data(fx.source, fx.pairs);
  for (int i = 0; i < 3; ++i) {
    const auto l = t.step();
    ASSERT_TRUE(l);
    const double light = 10 * l->l_tv + l->l_exp + l->l_ssim;
    EXPECT_NEAR(l->l_total, 0.01 * light + l->l_seg + l->l_static + 0.01 * l->l_adv, 1e-6);
    EXPECT_GT(l->l_seg, 0);
    EXPECT_GT(l->l_static, 0);
    EXPECT_GT(l->l_adv, 0);
    EXPECT_GT(l->d_d, 0);
    EXPECT_EQ(l->iter, i);
  }
  EXPECT_EQ(t.iteration(), 3);
}

TEST(Trainer, GraphTotalMatchesLoggedTotal) {
  Fixture fx;
  Trainer t(tiny_config(), fx.labels, fx.raw);
  t.set_data(fx.source, fx.pairs);
  StepLosses l;
  const auto batch = t.sample_batch();
  const nn::Var total = t.generator_losses(batch, l, nullptr);
  EXPECT_NEAR(total.value()[0], l.l_total, 1e-5 * std::max(1.0, l.l_total));
}

TEST(Trainer, AllComponentsZeroLeavesParametersUnchanged) {
  Fixture fx;
  Config c = tiny_config();
  c.beta_light = c.beta_seg = c.beta_static = c.beta_adv = 0;
  c.weight_decay = 0;
  Trainer t(c, fx.labels, fx.raw);
  t.set_data(fx.source, fx.pairs);
  const auto gen = t.models().generator_parameters();
  const auto before = snapshot(gen);
  t.generator_step(t.sample_batch(), nullptr);
  EXPECT_TRUE(same(gen, before));
}

TEST(Trainer, StepsTouchOnlyTheirOwnParameters) {
  Fixture fx;
  Trainer t(tiny_config(), fx.labels, fx.raw);
  t.set_data(fx.source, fx.pairs);
  const auto gen = t.models().generator_parameters();
  const auto disc = t.models().discriminator_parameters();
  const auto gen0 = snapshot(gen), disc0 = snapshot(disc);
  Predictions preds;
  t.generator_step(t.sample_batch(), &preds);
  EXPECT_FALSE(same(gen, gen0));
  EXPECT_TRUE(same(disc, disc0));
  const auto gen1 = snapshot(gen);
  t.discriminator_step(preds);
  EXPECT_TRUE(same(gen, gen1));
  EXPECT_FALSE(same(disc, disc0));
}

// Running statistics after one forward, with source and day inputs optionally darkened.
std::vector<Tensor> running_stats(BnStats mode, bool alter_other_domains) {
  Fixture fx;
  Config c = tiny_config();
  c.bn_stats = mode;
  Trainer t(c, fx.labels, fx.raw);
  t.set_data(fx.source, fx.pairs);
  Batch batch = t.sample_batch();
  if (alter_other_domains) {
    for (Tensor* img : {&batch.source, &batch.day}) {
      for (auto& v : img->values()) v *= 0.5f;
    }
  }
  StepLosses losses;
  t.generator_losses(batch, losses, nullptr);
  std::vector<Tensor> out;
  for (nn::Module* m : {static_cast<nn::Module*>(t.models().relight.get()),
                        static_cast<nn::Module*>(t.models().seg.get())}) {
    for (const auto& buf : m->buffers()) out.push_back(*buf.tensor);
  }
  return out;
}

TEST(Trainer, NightModeRunningStatsIgnoreOtherDomains) {
  EXPECT_EQ(running_stats(BnStats::night, false), running_stats(BnStats::night, true));
  EXPECT_NE(running_stats(BnStats::all, false), running_stats(BnStats::all, true));
  EXPECT_NE(running_stats(BnStats::night, false), running_stats(BnStats::all, false));
}

TEST(Trainer, ToyGeneratorStepFollowsFiniteDifferenceGradient) {
  Fixture fx;
  Config c = tiny_config();
  c.use_relight = false;
  c.lr = 1.0;  // large enough that float rounding of the update stays below 1e-4
  std::mt19937_64 rng(9);
  Models m;
  auto toy = std::make_unique<ToySeg>(fx.labels.size());
  ToySeg* seg = toy.get();
  m.seg = std::move(toy);
  m.disc_day = std::make_unique<adversarial::Discriminator>(fx.labels.size(), 4, rng);
  m.disc_night = std::make_unique<adversarial::Discriminator>(fx.labels.size(), 4, rng);
  Trainer t(c, fx.labels, fx.raw, std::move(m));
  t.set_data(fx.source, fx.pairs);
  const Batch batch = t.sample_batch();
  // The pseudo label is data, not a function of the parameters: hold it at
  // the value the step itself will see.
  Predictions base;
  StepLosses unused;
  t.generator_losses(batch, unused, &base);
  const auto pseudo = static_supervision::make_pseudo_label(
      LikelihoodMap{base.p_day, MapKind::probabilities}, t.train_weights(), fx.labels,
      batch.target_valid);

  auto loss_at = [&](nn::Var& p, double v) {
    const float orig = p.value()[0];
    p.mutable_value()[0] = static_cast<float>(v);
    StepLosses l;
    t.generator_losses(batch, l, nullptr, &pseudo);
    p.mutable_value()[0] = orig;
    return l.l_total;
  };
  // The window max and the discriminator's leaky ReLUs are piecewise smooth,
  // so the step must stay small enough not to cross their kinks.
  auto fd = [&](nn::Var& p) {
    const double x = p.value()[0], h = 1e-3;
    return (loss_at(p, x + h) - loss_at(p, x - h)) / (2 * h);
  };
  const double ga = fd(seg->a), gb = fd(seg->b);
  const double a0 = seg->a.value()[0], b0 = seg->b.value()[0];
  t.generator_step(batch, nullptr);
  const double da = seg->a.value()[0] - a0, db = seg->b.value()[0] - b0;
  EXPECT_LT(dannet::testing::rel_err(da, -c.lr * ga), 1e-3) << da << " vs " << -c.lr * ga;
  EXPECT_LT(dannet::testing::rel_err(db, -c.lr * gb), 1e-3) << db << " vs " << -c.lr * gb;
}

TEST(Trainer, FixedSeedIsDeterministic) {
  Fixture fx;
  std::vector<std::string> rows[2];
  for (auto& r : rows) {
    Trainer t(tiny_config(), fx.labels, fx.raw);
    t.set_data(fx.source, fx.pairs);
    for (int i = 0; i < 4; ++i) r.push_back(loss_csv_row(*t.step()));
  }
  EXPECT_EQ(rows[0], rows[1]);
}

TEST(Trainer, CheckpointResumeReproducesTrajectory) {
  Fixture fx;
  TempDir tmp;
  std::vector<std::string> straight, resumed;
  {
    Trainer t(tiny_config(), fx.labels, fx.raw);
    t.set_data(fx.source, fx.pairs);
    for (int i = 0; i < 5; ++i) straight.push_back(loss_csv_row(*t.step()));
  }
  {
    Trainer t(tiny_config(), fx.labels, fx.raw);
    t.set_data(fx.source, fx.pairs);
    for (int i = 0; i < 2; ++i) resumed.push_back(loss_csv_row(*t.step()));
    save_checkpoint(t.to_checkpoint(), tmp.path() / "mid.ckpt");
  }
  {
    Config other = tiny_config();
    Trainer t(other, fx.labels, fx.raw);
    t.set_data(fx.source, fx.pairs);
    t.restore(load_checkpoint(tmp.path() / "mid.ckpt"));
    EXPECT_EQ(t.iteration(), 2);
    for (int i = 0; i < 3; ++i) resumed.push_back(loss_csv_row(*t.step()));
  }
  EXPECT_EQ(straight, resumed);
}

TEST(Trainer, AblationTogglesAreRunnable) {
  Fixture fx;
  std::vector<std::function<void(Config&)>> variants = {
      [](Config& c) { c.use_relight = false; },
      [](Config& c) { c.use_light_loss = false; },
      [](Config& c) { c.static_loss = StaticLossKind::none; },
      [](Config& c) { c.static_loss = StaticLossKind::ce; },
      [](Config& c) { c.static_loss = StaticLossKind::focal; },
      [](Config& c) { c.reweight_seg = c.reweight_pseudo = false; },
      [](Config& c) { c.use_pretrain = false; },
      [](Config& c) { c.light_domains = LightDomains::targets; },
  };
  for (std::size_t v = 0; v < variants.size(); ++v) {
    Config c = tiny_config();
    variants[v](c);
    Trainer t(c, fx.labels, fx.raw);
    t.set_data(fx.source, fx.pairs);
    const auto l = t.step();
    ASSERT_TRUE(l) << "variant " << v;
    EXPECT_TRUE(std::isfinite(l->l_total)) << "variant " << v;
    if (c.static_loss == StaticLossKind::none) {
      EXPECT_EQ(l->l_static, 0);
    }
    if (!c.use_relight || !c.use_light_loss) {
      EXPECT_EQ(l->l_tv + l->l_exp + l->l_ssim, 0);
    }
  }
}

TEST(RunTraining, OneIterationLogsOneRecord) {
  Fixture fx;
  TempDir tmp;
  Config c = tiny_config();
  c.max_iters = 1;
  c.use_pretrain = false;
  run_training(c, fx.labels, fx.raw, fx.source, fx.pairs, {tmp.path(), {}, {}, {}});
  std::ifstream in(tmp.path() / "losses.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], loss_csv_header());
  EXPECT_EQ(std::count(lines[1].begin(), lines[1].end(), ','), 10);
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "final.ckpt"));
}

TEST(Pretrain, ZeroIterationsKeepsInitialization) {
  Fixture fx;
  Config c = tiny_config();
  c.pretrain_iters = 0;
  const auto res = pretrain_source(c, fx.labels, fx.raw, fx.source);
  std::mt19937_64 rng(c.seed);
  Models fresh = build_models(c, fx.labels, rng);
  Checkpoint expect;
  store_module(expect, *fresh.seg);
  EXPECT_EQ(res.checkpoint.tensors, expect.tensors);
  EXPECT_TRUE(res.losses.empty());
}

TEST(Pretrain, TwoClassLossDecreases) {
  // Class 1 where the image is bright, class 0 elsewhere.
  const LabelSet two({"dark", "bright"}, {true, true});
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> pos(4, 27);
  std::vector<data::LabeledImage> src;
  for (int i = 0; i < 8; ++i) {
    Tensor img(Shape{1, 3, 32, 32}, 0.2f);
    LabelBatch lbl(1, 32, 32, 0);
    const int cy = pos(rng), cx = pos(rng);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (std::abs(y - cy) < 6 && std::abs(x - cx) < 6) {
          lbl.at(0, y, x) = 1;
          for (int ch = 0; ch < 3; ++ch) img(0, ch, y, x) = 0.8f;
        }
    src.push_back({"t" + std::to_string(i), img, lbl});
  }
  Config c = tiny_config();
  c.pretrain_iters = 200;
  c.pretrain_lr = 1e-2;
  const auto res = pretrain_source(c, two, {0.2, 1.8}, src);
  ASSERT_EQ(res.losses.size(), 200u);
  double tail = 0;
  for (int i = 190; i < 200; ++i) tail += res.losses[i] / 10;
  EXPECT_LT(tail, res.losses.front());
}

TEST(Pretrain, MissingLabelsAreRejected) {
  Fixture fx;
  auto src = fx.source;
  src[1].label.reset();
  EXPECT_THROW(pretrain_source(tiny_config(), fx.labels, fx.raw, src), DataError);
}

}  // namespace
}  // namespace dannet::trainer
