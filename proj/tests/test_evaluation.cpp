#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dannet/data/dataset.hpp"
#include "dannet/data/image_io.hpp"
#include "dannet/data/synth.hpp"
#include "dannet/evaluation/metrics.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace dannet::evaluation {
namespace {

using dannet::testing::TempDir;

LabelBatch random_labels(std::mt19937_64& rng, int n, int h, int w, int k, double p_ignore) {
  std::uniform_int_distribution<int> cls(0, k - 1);
  std::bernoulli_distribution ign(p_ignore);
  LabelBatch l(n, h, w);
  for (auto& v : l.data) v = ign(rng) ? kIgnoreIndex : cls(rng);
  return l;
}

TEST(Confusion, PerfectPredictionIsDiagonal) {
  std::mt19937_64 rng(1);
  const auto gt = random_labels(rng, 1, 8, 8, 4, 0.2);
  const auto m = confusion_matrix(gt, gt, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i != j) {
        EXPECT_EQ(m.at(i, j), 0);
      }
    }
  const auto r = iou_from_confusion(m);
  for (const auto& v : r.iou) {
    if (v) {
      EXPECT_EQ(*v, 1.0);
    }
  }
  EXPECT_EQ(r.miou, 1.0);
}

TEST(Confusion, AllIgnoredGivesZeroMatrix) {
  const LabelBatch gt(1, 4, 4), pred(1, 4, 4, 0);
  const auto m = confusion_matrix(pred, gt, 3);
  EXPECT_EQ(m.total(), 0);
  EXPECT_THROW(iou_from_confusion(m), DegenerateInputError);
}

TEST(Confusion, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto gt = random_labels(rng, 1, 8, 8, 5, 0.1);
    const auto pred = random_labels(rng, 1, 8, 8, 5, 0.0);
    const auto m = confusion_matrix(pred, gt, 5);
    std::vector<std::int64_t> expect(25, 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt.data[i] != kIgnoreIndex) ++expect[gt.data[i] * 5 + pred.data[i]];
    }
    for (int g = 0; g < 5; ++g)
      for (int p = 0; p < 5; ++p) EXPECT_EQ(m.at(g, p), expect[g * 5 + p]);
  }
}

TEST(Confusion, ShapeMismatchThrows) {
  EXPECT_THROW(confusion_matrix(LabelBatch(1, 4, 4, 0), LabelBatch(1, 4, 5, 0), 2), ShapeError);
}

TEST(Iou, TwoByTwoExample) {
  // rows gt, cols pred: [[3,1],[1,3]]
  LabelBatch gt(1, 1, 8), pred(1, 1, 8);
  const int g[] = {0, 0, 0, 0, 1, 1, 1, 1};
  const int p[] = {0, 0, 0, 1, 0, 1, 1, 1};
  for (int i = 0; i < 8; ++i) {
    gt.data[i] = g[i];
    pred.data[i] = p[i];
  }
  const auto m = confusion_matrix(pred, gt, 2);
  EXPECT_EQ(m.at(0, 0), 3);
  EXPECT_EQ(m.at(0, 1), 1);
  EXPECT_EQ(m.at(1, 0), 1);
  EXPECT_EQ(m.at(1, 1), 3);
  const auto r = iou_from_confusion(m);
  EXPECT_DOUBLE_EQ(*r.iou[0], 0.6);
  EXPECT_DOUBLE_EQ(*r.iou[1], 0.6);
  EXPECT_DOUBLE_EQ(r.miou, 0.6);
}

TEST(Iou, DisjointPredictionIsZero) {
  LabelBatch gt(1, 2, 2, 0), pred(1, 2, 2, 1);
  const auto r = iou_from_confusion(confusion_matrix(pred, gt, 3));
  EXPECT_EQ(r.miou, 0.0);
  EXPECT_FALSE(r.iou[2].has_value());
}

TEST(Iou, MatchesSetOracleOnFiftyInstances) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const int k = 2 + t % 5;
    const auto gt = random_labels(rng, 1, 8, 8, k, 0.15);
    const auto pred = random_labels(rng, 1, 8, 8, k, 0.0);
    const auto expect = oracle::set_iou(pred, gt, k);
    const auto r = iou_from_confusion(confusion_matrix(pred, gt, k));
    double sum = 0;
    int count = 0;
    for (int c = 0; c < k; ++c) {
      ASSERT_EQ(r.iou[c].has_value(), expect[c].has_value());
      if (!expect[c]) continue;
      EXPECT_EQ(*r.iou[c], *expect[c]);
      sum += *expect[c];
      ++count;
    }
    EXPECT_EQ(r.miou, sum / count);
  }
}

TEST(Confusion, AccumulationIsOrderIndependent) {
  std::mt19937_64 rng(4);
  std::vector<LabelBatch> gts, preds;
  ConfusionMatrix whole(4);
  for (int i = 0; i < 12; ++i) {
    gts.push_back(random_labels(rng, 1, 6, 6, 4, 0.1));
    preds.push_back(random_labels(rng, 1, 6, 6, 4, 0.0));
    whole.add(preds.back(), gts.back());
  }
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<int> order(12);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    ConfusionMatrix a(4), b(4);
    for (int i = 0; i < 12; ++i) {
      (i < 5 ? a : b).add(preds[order[i]], gts[order[i]]);
    }
    b.merge(a);
    EXPECT_EQ(b, whole);
  }
}

TEST(Iou, InvariantUnderClassPermutation) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    auto gt = random_labels(rng, 1, 8, 8, 5, 0.1);
    auto pred = random_labels(rng, 1, 8, 8, 5, 0.0);
    const double before = iou_from_confusion(confusion_matrix(pred, gt, 5)).miou;
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (auto* l : {&gt, &pred})
      for (auto& v : l->data) {
        if (v != kIgnoreIndex) v = perm[v];
      }
    const double after = iou_from_confusion(confusion_matrix(pred, gt, 5)).miou;
    EXPECT_NEAR(before, after, 1e-15);
    EXPECT_GE(after, 0.0);
    EXPECT_LE(after, 1.0);
  }
}

struct SplitFixture {
  LabelSet labels = LabelSet::synthetic();
  std::vector<data::LabeledImage> split;
  std::unique_ptr<relight::RelightNet> relight;
  std::unique_ptr<segmentation::SmallSegNet> seg;
  std::vector<double> raw;

  SplitFixture() {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 4; ++i) {
      auto s = data::render_scene(rng, 32, data::SceneStyle::target_day);
      split.push_back({"v" + std::to_string(i), s.image, s.label});
    }
    relight = std::make_unique<relight::RelightNet>(4, rng, false);
    seg = std::make_unique<segmentation::SmallSegNet>(labels.size(), 4, rng);
    raw = {0.5, 1.5, 0.8, 1.0, 1.2, 2.0, 4.0};
  }
};

TEST(EvaluateDataset, DisabledReweightingEqualsPlainArgmax) {
  SplitFixture fx;
  const auto res = evaluate_dataset(fx.relight.get(), *fx.seg, fx.split,
                                    reweight::eval_weights(fx.raw, 0.0, 1.0), true);
  ConfusionMatrix plain(fx.labels.size());
  for (const auto& item : fx.split) {
    const auto p = predict_probabilities(fx.relight.get(), *fx.seg, item.image);
    const Shape s = p.data.shape();
    LabelBatch arg(1, s.h, s.w);
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        int best = 0;
        for (int c = 1; c < s.c; ++c) {
          if (p.data(0, c, y, x) > p.data(0, best, y, x)) best = c;
        }
        arg.at(0, y, x) = best;
      }
    plain.add(arg, *item.label);
  }
  EXPECT_EQ(res.confusion, plain);
  EXPECT_EQ(res.predictions.size(), fx.split.size());
  EXPECT_EQ(res.ids.size(), fx.split.size());
}

TEST(EvaluateDataset, SweepMatchesPerPointEvaluation) {
  SplitFixture fx;
  const std::vector<double> stds = {0.0, 0.05, 0.16, 0.4};
  const auto sweep = sweep_std(fx.relight.get(), *fx.seg, fx.split, fx.raw, 1.0, stds);
  ASSERT_EQ(sweep.size(), stds.size());
  for (std::size_t i = 0; i < stds.size(); ++i) {
    const auto single = evaluate_dataset(fx.relight.get(), *fx.seg, fx.split,
                                         reweight::eval_weights(fx.raw, stds[i], 1.0));
    EXPECT_EQ(sweep[i].report.miou, single.report.miou);
  }
}

TEST(EvaluateDataset, EmptySplitIsAnError) {
  SplitFixture fx;
  EXPECT_THROW(evaluate_dataset(nullptr, *fx.seg, {}, reweight::ClassWeights::uniform(7)),
               DataError);
}

TEST(Export, PaletteAndFiles) {
  TempDir tmp;
  const auto labels = LabelSet::synthetic();
  const auto colors = palette(labels);
  EXPECT_EQ(colors[labels.index_of("road")], (std::array<std::uint8_t, 3>{128, 64, 128}));
  EXPECT_EQ(palette(labels), colors);
  LabelBatch pred(1, 2, 3, 0);
  pred.at(0, 1, 2) = kIgnoreIndex;
  pred.at(0, 0, 1) = labels.index_of("sky");
  export_prediction(pred, labels, tmp.path() / "p.png");
  const auto r = data::read_png(tmp.path() / "p.png");
  ASSERT_EQ(r.width, 3);
  ASSERT_EQ(r.height, 2);
  EXPECT_EQ(r.pixels[3], 70);
  EXPECT_EQ(r.pixels[4], 130);
  EXPECT_EQ(r.pixels[5], 180);
  EXPECT_EQ(r.pixels[(1 * 3 + 2) * 3], 0);
}

TEST(Export, MetricsJsonMarksMissingClasses) {
  const auto labels = LabelSet::synthetic();
  IouReport r;
  r.iou.assign(labels.size(), std::nullopt);
  r.iou[0] = 0.5;
  r.iou[1] = 0.25;
  r.miou = 0.375;
  const auto j = nlohmann::json::parse(metrics_json(r, labels, 0.16));
  EXPECT_EQ(j["miou"], 0.375);
  EXPECT_EQ(j["std_test"], 0.16);
  EXPECT_EQ(j["per_class_iou"]["road"], 0.5);
  EXPECT_EQ(j["per_class_iou"]["pole"], "n/a");
}

TEST(Export, SweepCsvHasHeaderAndRows) {
  TempDir tmp;
  std::vector<SweepPoint> pts(2);
  pts[0].std = 0;
  pts[0].report.miou = 0.5;
  pts[1].std = 0.16;
  pts[1].report.miou = 0.625;
  write_sweep_csv(pts, tmp.path() / "s.csv");
  std::ifstream in(tmp.path() / "s.csv");
  std::stringstream s;
  s << in.rdbuf();
  EXPECT_EQ(s.str(), "std,miou\n0,0.5\n0.16,0.625\n");
}

}  // namespace
}  // namespace dannet::evaluation
