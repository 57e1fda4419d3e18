#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dannet/core/types.hpp"
#include "dannet/relight/relight_net.hpp"
#include "dannet/reweight/reweight.hpp"
#include "dannet/segmentation/seg_net.hpp"

namespace dannet::data {
struct LabeledImage;
}

namespace dannet::evaluation {

/// K x K counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k = 0) : k_(k), counts_(static_cast<std::size_t>(k) * k, 0) {}

  int size() const { return k_; }
  std::int64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * k_ + pred]; }
  std::int64_t total() const;
  void add(const LabelBatch& pred, const LabelBatch& gt, int ignore_index = kIgnoreIndex);
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion_matrix(const LabelBatch& pred, const LabelBatch& gt, int k,
                                 int ignore_index = kIgnoreIndex);

struct IouReport {
  std::vector<std::optional<double>> iou;  ///< nullopt where the denominator is zero
  double miou = 0;
};

/// Throws DegenerateInputError when every class has a zero denominator.
IouReport iou_from_confusion(const ConfusionMatrix& m);

/// Relight (when a net is given), segment and softmax one batch.
LikelihoodMap predict_probabilities(relight::RelightNet* relight, segmentation::SegModel& seg,
                                    const Tensor& images);

struct EvalResult {
  ConfusionMatrix confusion;
  IouReport report;
  std::vector<std::string> ids;
  std::vector<LabelBatch> predictions;  ///< filled when requested
};

/// Full pipeline over a labeled split with the given prediction weights.
EvalResult evaluate_dataset(relight::RelightNet* relight, segmentation::SegModel& seg,
                            const std::vector<data::LabeledImage>& split,
                            const reweight::ClassWeights& weights, bool keep_predictions = false);

struct SweepPoint {
  double std = 0;
  IouReport report;
};

/// Evaluates every std in `stds` (std <= 0 means uniform weights), running
/// the networks once per image.
std::vector<SweepPoint> sweep_std(relight::RelightNet* relight, segmentation::SegModel& seg,
                                  const std::vector<data::LabeledImage>& split,
                                  const std::vector<double>& raw_weights, double avg,
                                  const std::vector<double>& stds);

/// RGB colour per class: the Cityscapes palette by name, hashed otherwise.
std::vector<std::array<std::uint8_t, 3>> palette(const LabelSet& labels);

void export_prediction(const LabelBatch& pred, const LabelSet& labels,
                       const std::filesystem::path& path);

std::string metrics_json(const IouReport& report, const LabelSet& labels, double std_used);
void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path);

}  // namespace dannet::evaluation
