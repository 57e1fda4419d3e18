#include "dannet/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "dannet/data/image_io.hpp"

namespace dannet::data {
namespace fs = std::filesystem;
namespace {

fs::path image_dir(const fs::path& root) {
  return fs::is_directory(root / "images") ? root / "images" : root;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DatasetIndex load_labeled_index(const fs::path& root, bool require_labels, std::string split) {
  DatasetIndex index{std::move(split), {}, {}, {}};
  const fs::path labels = root / "labels";
  for (const auto& img : list_pngs(image_dir(root))) {
    Record r{img.stem().string(), img, std::nullopt};
    if (fs::exists(labels / img.filename())) {
      r.label_path = labels / img.filename();
    } else if (require_labels) {
      throw DataError("missing label for " + img.string());
    }
    index.records.push_back(std::move(r));
  }
  if (index.records.empty()) throw DataError("no images under " + root.string());
  return index;
}

DatasetIndex load_paired_index(const fs::path& day_dir, const fs::path& night_dir,
                               const fs::path& pairs_file) {
  std::ifstream in(pairs_file);
  if (!in) throw DataError("cannot open pairs file " + pairs_file.string());
  DatasetIndex index{"target", {}, {}, {}};
  const fs::path day_images = image_dir(day_dir);
  const fs::path night_images = image_dir(night_dir);
  std::set<std::string> ids;
  std::set<fs::path> used_day, used_night;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(pairs_file.string() + ":" + std::to_string(line_no) +
                      ": expected night_name<TAB>day_name");
    }
    const fs::path night = night_images / line.substr(0, tab);
    const fs::path day = day_images / line.substr(tab + 1);
    for (const auto& p : {night, day}) {
      if (!fs::exists(p)) {
        throw DataError(pairs_file.string() + ":" + std::to_string(line_no) +
                        ": missing file " + p.string());
      }
    }
    std::string id = night.stem().string();
    if (!ids.insert(id).second) {
      throw DataError(pairs_file.string() + ":" + std::to_string(line_no) +
                      ": duplicate pair id " + id);
    }
    used_day.insert(day);
    used_night.insert(night);
    index.pairs.push_back({day, night, std::move(id)});
  }
  if (index.pairs.empty()) throw DataError("pairs file lists no pairs: " + pairs_file.string());
  for (const auto& p : list_pngs(day_images)) {
    if (!used_day.count(p)) index.unmatched.push_back(p.string());
  }
  for (const auto& p : list_pngs(night_images)) {
    if (!used_night.count(p)) index.unmatched.push_back(p.string());
  }
  return index;
}

std::vector<LabeledImage> load_images(const DatasetIndex& index) {
  std::vector<LabeledImage> out;
  out.reserve(index.records.size());
  for (const auto& r : index.records) {
    LabeledImage li{r.id, raster_to_tensor(read_png(r.image_path)), std::nullopt};
    if (r.label_path) {
      li.label = raster_to_labels(read_png(*r.label_path));
      if (li.label->h != li.image.shape().h || li.label->w != li.image.shape().w) {
        throw DataError("label size differs from image for " + r.id);
      }
    }
    out.push_back(std::move(li));
  }
  return out;
}

std::vector<ImagePair> load_pairs(const DatasetIndex& index) {
  std::vector<ImagePair> out;
  out.reserve(index.pairs.size());
  for (const auto& p : index.pairs) {
    ImagePair ip{p.pair_id, raster_to_tensor(read_png(p.day_path)),
                 raster_to_tensor(read_png(p.night_path))};
    if (!(ip.day.shape() == ip.night.shape())) {
      throw DataError("day and night images differ in size for pair " + p.pair_id);
    }
    out.push_back(std::move(ip));
  }
  return out;
}

std::vector<double> class_proportions(const std::vector<LabelBatch>& labels, const LabelSet& set) {
  const int k = set.size();
  std::vector<std::uint64_t> counts(k, 0);
  std::uint64_t valid = 0;
  for (const auto& l : labels) {
    for (auto v : l.data) {
      if (v == set.ignore_index()) continue;
      if (v < 0 || v >= k) throw DataError("label value " + std::to_string(v) + " outside taxonomy");
      ++counts[v];
      ++valid;
    }
  }
  if (valid == 0) throw DegenerateInputError("class_proportions: no valid pixel");
  std::vector<double> a(k);
  for (int i = 0; i < k; ++i) a[i] = static_cast<double>(counts[i]) / static_cast<double>(valid);
  return a;
}

std::vector<double> class_proportions(const DatasetIndex& index, const LabelSet& set) {
  std::vector<LabelBatch> labels;
  for (const auto& r : index.records) {
    if (!r.label_path) throw DataError("record " + r.id + " has no label");
    labels.push_back(raster_to_labels(read_png(*r.label_path)));
  }
  return class_proportions(labels, set);
}

}  // namespace dannet::data
