#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwseg/synthdata.hpp"
#include "pwseg/tensor.hpp"

namespace pwseg {

// On-disk layout: manifest.json plus one .img / .msk pair per image.
// .img = rows*cols little-endian float64, row-major.
// .msk = rows*cols uint8, row-major (255 = ignore).

namespace detail {

inline void write_file(const std::filesystem::path& path, const void* data,
                       std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  in.read(buf.data(), size);
  if (!in) throw std::runtime_error("read failed: " + path.string());
  return buf;
}

inline void save_image_files(const std::filesystem::path& dir, const std::string& stem,
                             const LabeledImage& item) {
  write_file(dir / (stem + ".img"), item.image.data.data(),
             item.image.data.size() * sizeof(double));
  std::vector<std::uint8_t> mask_bytes(item.mask.size());
  for (std::size_t i = 0; i < item.mask.size(); ++i) {
    mask_bytes[i] = static_cast<std::uint8_t>(item.mask.labels[i]);
  }
  write_file(dir / (stem + ".msk"), mask_bytes.data(), mask_bytes.size());
}

inline LabeledImage load_image_files(const std::filesystem::path& dir,
                                     const std::string& stem, int rows, int cols) {
  LabeledImage item;
  item.image = Tensor2D(rows, cols);
  item.mask = SegmentationMask(rows, cols);
  const auto img = read_file(dir / (stem + ".img"));
  if (img.size() != item.image.size() * sizeof(double)) {
    throw std::runtime_error("image size mismatch: " + stem);
  }
  std::memcpy(item.image.data.data(), img.data(), img.size());
  const auto msk = read_file(dir / (stem + ".msk"));
  if (msk.size() != item.mask.size()) {
    throw std::runtime_error("mask size mismatch: " + stem);
  }
  for (std::size_t i = 0; i < msk.size(); ++i) {
    item.mask.labels[i] = static_cast<std::uint8_t>(msk[i]);
  }
  return item;
}

inline std::string image_stem(const char* split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", split, index);
  return buf;
}

}  // namespace detail

inline nlohmann::json spec_to_json(const DatasetSpec& spec) {
  return nlohmann::json{{"num_images", spec.num_images},
                        {"val_images", spec.val_images},
                        {"height", spec.height},
                        {"width", spec.width},
                        {"num_classes", spec.num_classes},
                        {"shapes_min", spec.shapes_min},
                        {"shapes_max", spec.shapes_max},
                        {"shape_size_min", spec.shape_size_min},
                        {"shape_size_max", spec.shape_size_max},
                        {"background_base", spec.background_base},
                        {"texture_noise", spec.texture_noise},
                        {"confusable_gap", spec.confusable_gap},
                        {"edge_blend", spec.edge_blend},
                        {"rare_class_factor", spec.rare_class_factor},
                        {"seed", spec.seed}};
}

inline DatasetSpec spec_from_json(const nlohmann::json& j) {
  DatasetSpec spec;
  spec.num_images = j.at("num_images").get<int>();
  spec.val_images = j.at("val_images").get<int>();
  spec.height = j.at("height").get<int>();
  spec.width = j.at("width").get<int>();
  spec.num_classes = j.at("num_classes").get<int>();
  spec.shapes_min = j.at("shapes_min").get<int>();
  spec.shapes_max = j.at("shapes_max").get<int>();
  spec.shape_size_min = j.at("shape_size_min").get<int>();
  spec.shape_size_max = j.at("shape_size_max").get<int>();
  spec.background_base = j.at("background_base").get<double>();
  spec.texture_noise = j.at("texture_noise").get<double>();
  spec.confusable_gap = j.at("confusable_gap").get<double>();
  spec.edge_blend = j.at("edge_blend").get<double>();
  spec.rare_class_factor = j.at("rare_class_factor").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir.parent_path()) && dir.has_parent_path()) {
    throw std::runtime_error("parent directory does not exist: " +
                             dir.parent_path().string());
  }
  std::filesystem::create_directory(dir);
  const auto images_dir = dir / "images";
  std::filesystem::create_directory(images_dir);

  nlohmann::json manifest;
  manifest["format"] = "pwseg-dataset-v1";
  manifest["byte_layout"] = {
      {"image", "rows*cols little-endian float64, row-major"},
      {"mask", "rows*cols uint8, row-major, 255 = ignore"}};
  manifest["spec"] = spec_to_json(ds.spec);
  manifest["partition_fraction"] = ds.partition_fraction;
  manifest["partition_seed"] = ds.partition_seed;
  manifest["labeled"] = ds.labeled_idx;
  manifest["unlabeled"] = ds.unlabeled_idx;

  nlohmann::json train_files = nlohmann::json::array();
  for (int i = 0; i < static_cast<int>(ds.train.size()); ++i) {
    const std::string stem = detail::image_stem("train", i);
    detail::save_image_files(images_dir, stem, ds.train[i]);
    train_files.push_back(stem);
  }
  nlohmann::json val_files = nlohmann::json::array();
  for (int i = 0; i < static_cast<int>(ds.val.size()); ++i) {
    const std::string stem = detail::image_stem("val", i);
    detail::save_image_files(images_dir, stem, ds.val[i]);
    val_files.push_back(stem);
  }
  manifest["train_files"] = train_files;
  manifest["val_files"] = val_files;

  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("missing manifest: " + manifest_path.string());
  nlohmann::json manifest;
  in >> manifest;
  if (manifest.value("format", "") != "pwseg-dataset-v1") {
    throw std::runtime_error("unknown dataset format in " + manifest_path.string());
  }
  Dataset ds;
  ds.spec = spec_from_json(manifest.at("spec"));
  ds.partition_fraction = manifest.at("partition_fraction").get<double>();
  ds.partition_seed = manifest.at("partition_seed").get<std::uint64_t>();
  ds.labeled_idx = manifest.at("labeled").get<std::vector<int>>();
  ds.unlabeled_idx = manifest.at("unlabeled").get<std::vector<int>>();
  const auto images_dir = dir / "images";
  for (const auto& stem : manifest.at("train_files")) {
    ds.train.push_back(detail::load_image_files(images_dir, stem.get<std::string>(),
                                                ds.spec.height, ds.spec.width));
  }
  for (const auto& stem : manifest.at("val_files")) {
    ds.val.push_back(detail::load_image_files(images_dir, stem.get<std::string>(),
                                              ds.spec.height, ds.spec.width));
  }
  return ds;
}

}  // namespace pwseg
