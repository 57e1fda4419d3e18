#include "dannet/evaluation/metrics.hpp"

#include <fstream>
#include <map>

#include <fmt/format.h>

#include "dannet/data/dataset.hpp"
#include "dannet/data/image_io.hpp"
#include "json.hpp"

namespace dannet::evaluation {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto v : counts_) t += v;
  return t;
}

void ConfusionMatrix::add(const LabelBatch& pred, const LabelBatch& gt, int ignore_index) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w) {
    throw ShapeError("confusion_matrix: prediction and ground truth differ in shape");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.data[i];
    if (g == ignore_index) continue;
    const int p = pred.data[i];
    if (g < 0 || g >= k_ || p < 0 || p >= k_) {
      throw ShapeError("confusion_matrix: label outside [0, K)");
    }
    ++counts_[static_cast<std::size_t>(g) * k_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("confusion_matrix: merging different K");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ConfusionMatrix confusion_matrix(const LabelBatch& pred, const LabelBatch& gt, int k,
                                 int ignore_index) {
  ConfusionMatrix m(k);
  m.add(pred, gt, ignore_index);
  return m;
}

IouReport iou_from_confusion(const ConfusionMatrix& m) {
  const int k = m.size();
  IouReport r{std::vector<std::optional<double>>(k), 0.0};
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += m.at(c, j);
      col += m.at(j, c);
    }
    const std::int64_t denom = row + col - m.at(c, c);
    if (denom == 0) continue;
    r.iou[c] = static_cast<double>(m.at(c, c)) / static_cast<double>(denom);
    r.miou += *r.iou[c];
    ++counted;
  }
  if (counted == 0) throw DegenerateInputError("iou_from_confusion: no class has a denominator");
  r.miou /= counted;
  return r;
}

LikelihoodMap predict_probabilities(relight::RelightNet* relight, segmentation::SegModel& seg,
                                    const Tensor& images) {
  ImageBatch batch{images, Domain::target_night};
  if (relight) batch = relight::relight_forward(*relight, batch);
  return segmentation::to_probabilities(segmentation::seg_forward(seg, batch));
}

namespace {

void set_eval(relight::RelightNet* relight, segmentation::SegModel& seg) {
  if (relight) relight->set_training(false);
  seg.set_training(false);
}

}  // namespace

EvalResult evaluate_dataset(relight::RelightNet* relight, segmentation::SegModel& seg,
                            const std::vector<data::LabeledImage>& split,
                            const reweight::ClassWeights& weights, bool keep_predictions) {
  if (split.empty()) throw DataError("evaluate_dataset: empty split");
  set_eval(relight, seg);
  EvalResult out{ConfusionMatrix(seg.num_classes()), {}, {}, {}};
  for (const auto& item : split) {
    if (!item.label) throw DataError("evaluate_dataset: record " + item.id + " has no label");
    LikelihoodMap p = predict_probabilities(relight, seg, item.image);
    LabelBatch pred = reweight::reweighted_argmax(p, weights);
    out.confusion.add(pred, *item.label);
    out.ids.push_back(item.id);
    if (keep_predictions) out.predictions.push_back(std::move(pred));
  }
  out.report = iou_from_confusion(out.confusion);
  return out;
}

std::vector<SweepPoint> sweep_std(relight::RelightNet* relight, segmentation::SegModel& seg,
                                  const std::vector<data::LabeledImage>& split,
                                  const std::vector<double>& raw_weights, double avg,
                                  const std::vector<double>& stds) {
  if (split.empty()) throw DataError("sweep_std: empty split");
  set_eval(relight, seg);
  std::vector<ConfusionMatrix> mats(stds.size(), ConfusionMatrix(seg.num_classes()));
  std::vector<reweight::ClassWeights> weights;
  for (double s : stds) weights.push_back(reweight::eval_weights(raw_weights, s, avg));
  for (const auto& item : split) {
    if (!item.label) throw DataError("sweep_std: record " + item.id + " has no label");
    LikelihoodMap p = predict_probabilities(relight, seg, item.image);
    for (std::size_t i = 0; i < stds.size(); ++i) {
      mats[i].add(reweight::reweighted_argmax(p, weights[i]), *item.label);
    }
  }
  std::vector<SweepPoint> out;
  for (std::size_t i = 0; i < stds.size(); ++i) out.push_back({stds[i], iou_from_confusion(mats[i])});
  return out;
}

std::vector<std::array<std::uint8_t, 3>> palette(const LabelSet& labels) {
  static const std::map<std::string, std::array<std::uint8_t, 3>> cityscapes = {
      {"road", {128, 64, 128}},      {"sidewalk", {244, 35, 232}},  {"building", {70, 70, 70}},
      {"wall", {102, 102, 156}},     {"fence", {190, 153, 153}},    {"pole", {153, 153, 153}},
      {"traffic light", {250, 170, 30}}, {"traffic sign", {220, 220, 0}},
      {"vegetation", {107, 142, 35}}, {"terrain", {152, 251, 152}}, {"sky", {70, 130, 180}},
      {"person", {220, 20, 60}},     {"rider", {255, 0, 0}},        {"car", {0, 0, 142}},
      {"truck", {0, 0, 70}},         {"bus", {0, 60, 100}},         {"train", {0, 80, 100}},
      {"motorcycle", {0, 0, 230}},   {"bicycle", {119, 11, 32}}};
  std::vector<std::array<std::uint8_t, 3>> out;
  for (const auto& name : labels.names()) {
    if (auto it = cityscapes.find(name); it != cityscapes.end()) {
      out.push_back(it->second);
      continue;
    }
    std::uint32_t h = 2166136261u;  // FNV-1a
    for (unsigned char ch : name) h = (h ^ ch) * 16777619u;
    out.push_back({static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                   static_cast<std::uint8_t>(h >> 16)});
  }
  return out;
}

void export_prediction(const LabelBatch& pred, const LabelSet& labels,
                       const std::filesystem::path& path) {
  const auto colors = palette(labels);
  data::Raster r{pred.w, pred.h, 3, std::vector<std::uint8_t>(pred.size() * 3, 0)};
  for (int y = 0; y < pred.h; ++y) {
    for (int x = 0; x < pred.w; ++x) {
      const int c = pred.at(0, y, x);
      if (c < 0 || c >= labels.size()) continue;
      std::copy(colors[c].begin(), colors[c].end(),
                r.pixels.begin() + (static_cast<std::size_t>(y) * pred.w + x) * 3);
    }
  }
  data::write_png(path, r);
}

std::string metrics_json(const IouReport& report, const LabelSet& labels, double std_used) {
  nlohmann::ordered_json j;
  j["std_test"] = std_used;
  j["miou"] = report.miou;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (int k = 0; k < labels.size(); ++k) {
    if (report.iou[k]) per[labels.name(k)] = *report.iou[k];
    else per[labels.name(k)] = "n/a";
  }
  j["per_class_iou"] = per;
  return j.dump(2) + "\n";
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "std,miou\n";
  for (const auto& p : points) out << fmt::format("{},{:.9g}\n", p.std, p.report.miou);
}

}  // namespace dannet::evaluation
