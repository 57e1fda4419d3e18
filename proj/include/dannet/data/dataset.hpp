#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dannet/core/types.hpp"

namespace dannet::data {

struct PairedSample {
  std::filesystem::path day_path;
  std::filesystem::path night_path;
  std::string pair_id;
};

struct Record {
  std::string id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> label_path;
};

/// File-level view of one split: labeled/unlabeled records or day/night pairs.
struct DatasetIndex {
  std::string split;
  std::vector<Record> records;
  std::vector<PairedSample> pairs;
  std::vector<std::string> unmatched;  ///< files present on disk but not paired
};

/// `<root>/images/*.png` with optional `<root>/labels/<same name>`. When
/// `require_labels` is set every image must have a label file.
DatasetIndex load_labeled_index(const std::filesystem::path& root, bool require_labels,
                                std::string split = "source");

/// Reads `night_name <TAB> day_name` lines. Names resolve inside
/// `<dir>/images/` (or `<dir>/` when there is no images folder).
DatasetIndex load_paired_index(const std::filesystem::path& day_dir,
                               const std::filesystem::path& night_dir,
                               const std::filesystem::path& pairs_file);

/// Decoded labeled image held in memory.
struct LabeledImage {
  std::string id;
  Tensor image;  ///< 1 x 3 x H x W
  std::optional<LabelBatch> label;
};

struct ImagePair {
  std::string id;
  Tensor day;
  Tensor night;
};

std::vector<LabeledImage> load_images(const DatasetIndex& index);
std::vector<ImagePair> load_pairs(const DatasetIndex& index);

/// a_k = (# pixels labeled k) / (# pixels not ignored), over the whole split.
std::vector<double> class_proportions(const std::vector<LabelBatch>& labels, const LabelSet& set);
std::vector<double> class_proportions(const DatasetIndex& index, const LabelSet& set);

}  // namespace dannet::data
