#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pwseg/synthdata.hpp"
#include "pwseg/trainer.hpp"

namespace pwseg {

// Flat `key = value` run configuration covering the dataset spec and the
// training setup. Lines starting with # are comments; unknown keys are
// rejected.
struct RunConfig {
  DatasetSpec dataset;
  double partition_fraction = 1.0 / 16.0;
  std::uint64_t partition_seed = 1;
  TrainConfig train;
};

struct ConfigKeyDoc {
  const char* key;
  const char* default_value;
  const char* doc;
};

inline const std::vector<ConfigKeyDoc>& config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = {
      {"num_images", "160", "training-pool images (labeled + unlabeled)"},
      {"val_images", "40", "held-out validation images"},
      {"height", "32", "image height in pixels"},
      {"width", "32", "image width in pixels"},
      {"num_classes", "5", "classes including background class 0"},
      {"shapes_min", "1", "minimum shapes per image"},
      {"shapes_max", "3", "maximum shapes per image"},
      {"shape_size_min", "10", "minimum shape extent in pixels"},
      {"shape_size_max", "18", "maximum shape extent in pixels"},
      {"background_base", "0.15", "background texture base intensity"},
      {"texture_noise", "0.06", "uniform +- texture noise per pixel"},
      {"confusable_gap", "0.05", "intensity gap of the confusable class pair"},
      {"edge_blend", "0.7", "texture mixing amplitude of shape boundary rings"},
      {"rare_class_factor", "0.35", "relative sampling weight of the last class"},
      {"data_seed", "1", "dataset generation seed"},
      {"partition_fraction", "0.0625", "labeled fraction of the training pool"},
      {"partition_seed", "1", "labeled/unlabeled split seed"},
      {"alpha", "0.4", "unsupervised loss weight"},
      {"tau", "0.95", "pseudo-label confidence threshold"},
      {"k", "5", "top-k size for rank-statistics similarity"},
      {"bbox_conf", "0.85", "detector box confidence threshold"},
      {"ema_momentum", "0.99", "teacher EMA momentum"},
      {"lr", "2", "student learning rate"},
      {"epochs", "30", "training epochs"},
      {"batch_labeled", "4", "labeled images per step"},
      {"batch_unlabeled", "4", "unlabeled images per step"},
      {"train_seed", "1", "training seed (init, shuffles, augmentations)"},
      {"bank_capacity", "256", "per-class FIFO memory bank capacity"},
      {"per_image_limit", "32", "labeled features pushed per class per image"},
      {"per_image_limit_unlabeled", "8", "reliable features pushed per class per image"},
      {"hidden_dim", "16", "segmentation model hidden feature width"},
      {"use_rppi", "true", "feed the bank from reliable unlabeled pixels"},
      {"use_ppw", "true", "apply per-pixel pseudo-label weights"},
      {"similarity", "rank", "weighting similarity: rank | cosine"},
      {"det_epochs", "3000", "detector training epochs"},
      {"det_lr", "1.5", "detector learning rate"},
      {"det_neg_per_image", "4", "background crops sampled per labeled image"},
      {"det_scales", "8,16", "sliding-window box sizes (comma separated)"},
      {"det_nms_iou", "0.5", "NMS IoU threshold"},
      {"threads", "0", "worker threads for ablations (0 = auto)"},
  };
  return docs;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false, got '" +
                              value + "'");
}

inline std::vector<int> parse_int_list(const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace detail

inline void apply_config_line(RunConfig& cfg, const std::string& key,
                              const std::string& value) {
  try {
    if (key == "num_images") cfg.dataset.num_images = std::stoi(value);
    else if (key == "val_images") cfg.dataset.val_images = std::stoi(value);
    else if (key == "height") cfg.dataset.height = std::stoi(value);
    else if (key == "width") cfg.dataset.width = std::stoi(value);
    else if (key == "num_classes") cfg.dataset.num_classes = std::stoi(value);
    else if (key == "shapes_min") cfg.dataset.shapes_min = std::stoi(value);
    else if (key == "shapes_max") cfg.dataset.shapes_max = std::stoi(value);
    else if (key == "shape_size_min") cfg.dataset.shape_size_min = std::stoi(value);
    else if (key == "shape_size_max") cfg.dataset.shape_size_max = std::stoi(value);
    else if (key == "background_base") cfg.dataset.background_base = std::stod(value);
    else if (key == "texture_noise") cfg.dataset.texture_noise = std::stod(value);
    else if (key == "confusable_gap") cfg.dataset.confusable_gap = std::stod(value);
    else if (key == "edge_blend") cfg.dataset.edge_blend = std::stod(value);
    else if (key == "rare_class_factor") cfg.dataset.rare_class_factor = std::stod(value);
    else if (key == "data_seed") cfg.dataset.seed = std::stoull(value);
    else if (key == "partition_fraction") cfg.partition_fraction = std::stod(value);
    else if (key == "partition_seed") cfg.partition_seed = std::stoull(value);
    else if (key == "alpha") cfg.train.alpha = std::stod(value);
    else if (key == "tau") cfg.train.tau = std::stod(value);
    else if (key == "k") cfg.train.k = std::stoi(value);
    else if (key == "bbox_conf") cfg.train.bbox_conf = std::stod(value);
    else if (key == "ema_momentum") cfg.train.ema_momentum = std::stod(value);
    else if (key == "lr") cfg.train.lr = std::stod(value);
    else if (key == "epochs") cfg.train.epochs = std::stoi(value);
    else if (key == "batch_labeled") cfg.train.batch_labeled = std::stoi(value);
    else if (key == "batch_unlabeled") cfg.train.batch_unlabeled = std::stoi(value);
    else if (key == "train_seed") cfg.train.train_seed = std::stoull(value);
    else if (key == "bank_capacity") cfg.train.bank_capacity = std::stoi(value);
    else if (key == "per_image_limit") cfg.train.per_image_limit = std::stoi(value);
    else if (key == "per_image_limit_unlabeled") {
      cfg.train.per_image_limit_unlabeled = std::stoi(value);
    }
    else if (key == "hidden_dim") cfg.train.hidden_dim = std::stoi(value);
    else if (key == "use_rppi") cfg.train.use_rppi = detail::parse_bool(value, key);
    else if (key == "use_ppw") cfg.train.use_ppw = detail::parse_bool(value, key);
    else if (key == "similarity") cfg.train.similarity = similarity_from_string(value);
    else if (key == "det_epochs") cfg.train.det_epochs = std::stoi(value);
    else if (key == "det_lr") cfg.train.det_lr = std::stod(value);
    else if (key == "det_neg_per_image") cfg.train.det_neg_per_image = std::stoi(value);
    else if (key == "det_scales") cfg.train.det_scales = detail::parse_int_list(value);
    else if (key == "det_nms_iou") cfg.train.det_nms_iou = std::stod(value);
    else if (key == "threads") cfg.train.threads = std::stoi(value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': cannot parse value '" +
                                value + "'");
  }
}

inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    }
    apply_config_line(cfg, key, value);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  return parse_run_config(in);
}

}  // namespace pwseg
