#pragma once

#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwseg/trainer.hpp"

namespace pwseg {

// Checkpoint container: one u64-length-prefixed JSON header followed by
// u64-count-prefixed blocks of little-endian float64 parameters, in order
// student, teacher, detector, bank (class queues concatenated in the order
// listed by the header). All integers little-endian.

namespace detail {

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open checkpoint: " + path.string());
  }

  std::uint64_t read_u64() {
    std::uint64_t v = 0;
    read_bytes(&v, sizeof(v));
    return v;
  }

  void read_bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) {
      throw std::runtime_error("corrupt checkpoint " + path_.string() +
                               ": truncated read at offset " + std::to_string(offset_));
    }
    offset_ += n;
  }

  std::vector<double> read_block(std::size_t expected_count) {
    const std::uint64_t count = read_u64();
    if (count != expected_count) {
      throw std::runtime_error("corrupt checkpoint " + path_.string() + ": block at offset " +
                               std::to_string(offset_ - sizeof(std::uint64_t)) + " holds " +
                               std::to_string(count) + " values, expected " +
                               std::to_string(expected_count));
    }
    std::vector<double> block(count);
    if (count > 0) read_bytes(block.data(), count * sizeof(double));
    return block;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

inline void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_block(std::ofstream& out, const std::vector<double>& block) {
  write_u64(out, block.size());
  out.write(reinterpret_cast<const char*>(block.data()),
            static_cast<std::streamsize>(block.size() * sizeof(double)));
}

}  // namespace detail

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"alpha", cfg.alpha},
                        {"tau", cfg.tau},
                        {"k", cfg.k},
                        {"bbox_conf", cfg.bbox_conf},
                        {"ema_momentum", cfg.ema_momentum},
                        {"lr", cfg.lr},
                        {"epochs", cfg.epochs},
                        {"batch_labeled", cfg.batch_labeled},
                        {"batch_unlabeled", cfg.batch_unlabeled},
                        {"train_seed", cfg.train_seed},
                        {"bank_capacity", cfg.bank_capacity},
                        {"per_image_limit", cfg.per_image_limit},
                        {"per_image_limit_unlabeled", cfg.per_image_limit_unlabeled},
                        {"hidden_dim", cfg.hidden_dim},
                        {"use_rppi", cfg.use_rppi},
                        {"use_ppw", cfg.use_ppw},
                        {"similarity", to_string(cfg.similarity)},
                        {"det_epochs", cfg.det_epochs},
                        {"det_lr", cfg.det_lr},
                        {"det_neg_per_image", cfg.det_neg_per_image},
                        {"det_scales", cfg.det_scales},
                        {"det_nms_iou", cfg.det_nms_iou}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.alpha = j.at("alpha").get<double>();
  cfg.tau = j.at("tau").get<double>();
  cfg.k = j.at("k").get<int>();
  cfg.bbox_conf = j.at("bbox_conf").get<double>();
  cfg.ema_momentum = j.at("ema_momentum").get<double>();
  cfg.lr = j.at("lr").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_labeled = j.at("batch_labeled").get<int>();
  cfg.batch_unlabeled = j.at("batch_unlabeled").get<int>();
  cfg.train_seed = j.at("train_seed").get<std::uint64_t>();
  cfg.bank_capacity = j.at("bank_capacity").get<int>();
  cfg.per_image_limit = j.at("per_image_limit").get<int>();
  cfg.per_image_limit_unlabeled = j.at("per_image_limit_unlabeled").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.use_rppi = j.at("use_rppi").get<bool>();
  cfg.use_ppw = j.at("use_ppw").get<bool>();
  cfg.similarity = similarity_from_string(j.at("similarity").get<std::string>());
  cfg.det_epochs = j.at("det_epochs").get<int>();
  cfg.det_lr = j.at("det_lr").get<double>();
  cfg.det_neg_per_image = j.at("det_neg_per_image").get<int>();
  cfg.det_scales = j.at("det_scales").get<std::vector<int>>();
  cfg.det_nms_iou = j.at("det_nms_iou").get<double>();
  return cfg;
}

inline void save_checkpoint(const TrainState& state, const TrainConfig& cfg,
                            int num_classes, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "pwseg-checkpoint-v1";
  header["epoch"] = state.epoch;
  header["num_classes"] = num_classes;
  header["config"] = train_config_to_json(cfg);
  header["model"] = {{"hidden_dim", state.student.hidden_dim()},
                     {"num_classes", state.student.num_classes()}};
  header["detector"] = {{"trained", state.detector_trained},
                        {"num_classes", state.detector_trained ? state.detector.num_classes() : 0},
                        {"pool", state.detector_trained ? state.detector.pool() : 0}};
  nlohmann::json bank_classes = nlohmann::json::array();
  for (int class_id : state.bank.class_ids()) {
    bank_classes.push_back(
        {{"class_id", class_id},
         {"count", static_cast<int>(state.bank.queue(class_id).size())}});
  }
  header["bank"] = {{"capacity", state.bank.capacity_per_class()},
                    {"dim", state.bank.dim()},
                    {"classes", bank_classes}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  detail::write_u64(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  detail::write_block(out, state.student.parameters());
  detail::write_block(out, state.teacher.parameters());
  detail::write_block(out, state.detector_trained ? state.detector.parameters()
                                                  : std::vector<double>{});
  std::vector<double> bank_block;
  for (int class_id : state.bank.class_ids()) {
    for (const auto& f : state.bank.queue(class_id)) {
      bank_block.insert(bank_block.end(), f.begin(), f.end());
    }
  }
  detail::write_block(out, bank_block);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

struct LoadedCheckpoint {
  TrainConfig config;
  int num_classes = 0;
  int epoch = 0;
  TrainState state;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  detail::CheckpointReader reader(path);
  const std::uint64_t header_len = reader.read_u64();
  if (header_len == 0 || header_len > (1ull << 24)) {
    throw std::runtime_error("corrupt checkpoint " + path.string() +
                             ": implausible header length at offset 0");
  }
  std::string header_str(header_len, '\0');
  reader.read_bytes(header_str.data(), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const std::exception& e) {
    throw std::runtime_error("corrupt checkpoint " + path.string() +
                             ": bad JSON header at offset 8 (" + e.what() + ")");
  }
  if (header.value("format", "") != "pwseg-checkpoint-v1") {
    throw std::runtime_error("corrupt checkpoint " + path.string() +
                             ": unknown format tag at offset 8");
  }

  LoadedCheckpoint loaded;
  loaded.config = train_config_from_json(header.at("config"));
  loaded.num_classes = header.at("num_classes").get<int>();
  loaded.epoch = header.at("epoch").get<int>();

  const int hidden = header.at("model").at("hidden_dim").get<int>();
  const int classes = header.at("model").at("num_classes").get<int>();
  loaded.state.student = SegModel(hidden, classes, 0);
  loaded.state.student.set_parameters(
      reader.read_block(SegModel::param_count(hidden, classes)));
  loaded.state.teacher = SegModel(hidden, classes, 0);
  loaded.state.teacher.set_parameters(
      reader.read_block(SegModel::param_count(hidden, classes)));

  const bool det_trained = header.at("detector").at("trained").get<bool>();
  if (det_trained) {
    const int det_classes = header.at("detector").at("num_classes").get<int>();
    const int pool = header.at("detector").at("pool").get<int>();
    loaded.state.detector = RegionClassifier(det_classes, pool, 0);
    loaded.state.detector.parameters() =
        reader.read_block(RegionClassifier::param_count(det_classes, pool));
    loaded.state.detector.mark_trained();
    loaded.state.detector_trained = true;
  } else {
    reader.read_block(0);
  }

  const auto& bank_json = header.at("bank");
  const int capacity = bank_json.at("capacity").get<int>();
  const int dim = bank_json.at("dim").get<int>();
  loaded.state.bank = PrototypeBank(capacity, 0);
  std::size_t expected = 0;
  for (const auto& entry : bank_json.at("classes")) {
    expected += static_cast<std::size_t>(entry.at("count").get<int>()) * dim;
  }
  const std::vector<double> bank_block = reader.read_block(expected);
  std::size_t cursor = 0;
  for (const auto& entry : bank_json.at("classes")) {
    const int class_id = entry.at("class_id").get<int>();
    const int count = entry.at("count").get<int>();
    std::deque<FeatureVector> queue;
    for (int i = 0; i < count; ++i) {
      queue.emplace_back(bank_block.begin() + cursor, bank_block.begin() + cursor + dim);
      cursor += dim;
    }
    loaded.state.bank.restore_queue(class_id, std::move(queue));
  }
  loaded.state.epoch = loaded.epoch;
  return loaded;
}

}  // namespace pwseg
