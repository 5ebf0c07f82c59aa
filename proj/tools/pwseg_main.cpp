// Command line front end: dataset generation, box extraction, SSL training,
// evaluation, and ablation sweeps. All file formats are owned by the library
// headers; this file only wires them to flags.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pwseg/pwseg.hpp"

namespace fs = std::filesystem;

namespace {

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void require_parent_exists(const fs::path& path) {
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::exists(parent)) {
    throw std::runtime_error("parent directory does not exist: " + parent.string());
  }
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string config_docs_epilog() {
  std::string out = "Config file keys (key = value per line, # comments):\n";
  for (const auto& doc : pwseg::config_key_docs()) {
    out += "  ";
    out += doc.key;
    out += " (default ";
    out += doc.default_value;
    out += ") - ";
    out += doc.doc;
    out += '\n';
  }
  return out;
}

const std::vector<pwseg::LabeledImage>* split_images(const pwseg::Dataset& ds,
                                                     const std::string& split,
                                                     std::vector<pwseg::LabeledImage>& storage) {
  if (split == "val") return &ds.val;
  if (split == "labeled") {
    for (int idx : ds.labeled_idx) storage.push_back(ds.train[idx]);
    return &storage;
  }
  if (split == "unlabeled") {
    for (int idx : ds.unlabeled_idx) storage.push_back(ds.train[idx]);
    return &storage;
  }
  throw std::runtime_error("unknown split '" + split + "' (expected labeled|unlabeled|val)");
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
  const pwseg::RunConfig cfg = pwseg::load_run_config(spec_path);
  cfg.dataset.validate();
  const pwseg::Dataset ds =
      pwseg::build_dataset(cfg.dataset, cfg.partition_fraction, cfg.partition_seed);
  require_parent_exists(fs::path(out_dir));
  pwseg::save_dataset(ds, out_dir);
  std::cout << "wrote " << ds.train.size() << " train images ("
            << ds.labeled_idx.size() << " labeled, " << ds.unlabeled_idx.size()
            << " unlabeled) and " << ds.val.size() << " val images with "
            << ds.spec.num_classes << " classes to " << out_dir << "\n";
  return 0;
}

int cmd_gen_boxes(const std::string& data_dir, const std::string& split,
                  const std::string& out_csv) {
  const pwseg::Dataset ds = pwseg::load_dataset(data_dir);
  std::vector<pwseg::LabeledImage> storage;
  const auto* images = split_images(ds, split, storage);
  std::string csv = pwseg::box_csv_header();
  csv += '\n';
  for (const auto& item : *images) {
    for (const auto& box : pwseg::boxes_from_mask(item.mask, {0})) {
      csv += pwseg::box_csv_row(box);
      csv += '\n';
    }
  }
  require_parent_exists(fs::path(out_csv));
  write_text_file(out_csv, csv);
  std::cout << "wrote boxes for split '" << split << "' to " << out_csv << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, bool disable_rppi, bool disable_ppw,
              const std::string& similarity) {
  pwseg::RunConfig cfg = pwseg::load_run_config(config_path);
  if (disable_rppi) cfg.train.use_rppi = false;
  if (disable_ppw) cfg.train.use_ppw = false;
  if (!similarity.empty()) cfg.train.similarity = pwseg::similarity_from_string(similarity);
  cfg.train.validate();

  const pwseg::Dataset ds = pwseg::load_dataset(data_dir);
  require_parent_exists(fs::path(out_dir));
  fs::create_directory(out_dir);
  const fs::path out(out_dir);

  std::ostringstream log;
  log << timestamp_now() << " start train config=" << config_path << " data=" << data_dir
      << "\n";
  const auto t0 = std::chrono::steady_clock::now();
  const pwseg::TrainState state = pwseg::train(cfg.train, ds);
  const auto t1 = std::chrono::steady_clock::now();
  log << timestamp_now() << " trained " << state.epoch << " epochs in "
      << std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() << " ms\n";

  {
    std::ifstream in(config_path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    write_text_file(out / "config.txt", buf.str());
  }
  write_text_file(out / "metrics.csv", pwseg::metrics_csv(state.history));
  pwseg::save_checkpoint(state, cfg.train, ds.spec.num_classes, out / "checkpoint.bin");
  log << timestamp_now() << " final miou=" << state.history.back().miou << "\n";
  write_text_file(out / "run.log", log.str());
  std::cout << "run complete: " << out_dir << " (final miou "
            << state.history.back().miou << ")\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& split, const std::string& out_csv) {
  const pwseg::LoadedCheckpoint loaded = pwseg::load_checkpoint(checkpoint_path);
  const pwseg::Dataset ds = pwseg::load_dataset(data_dir);
  if (loaded.num_classes != ds.spec.num_classes) {
    throw std::runtime_error("checkpoint has " + std::to_string(loaded.num_classes) +
                             " classes but dataset has " +
                             std::to_string(ds.spec.num_classes));
  }
  std::vector<pwseg::LabeledImage> storage;
  const auto* images = split_images(ds, split, storage);
  pwseg::ConfusionMatrix cm(ds.spec.num_classes);
  pwseg::SegmentationMask pred;
  for (const auto& item : *images) {
    loaded.state.teacher.predict(item.image, &pred, nullptr);
    cm.add(item.mask, pred);
  }
  const pwseg::IouReport report = pwseg::iou_from_confusion(cm);
  std::string csv = "class_id,iou\n";
  char buf[64];
  for (int c = 0; c < ds.spec.num_classes; ++c) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", c, report.per_class[c]);
    csv += buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.17g\n", report.mean);
  csv += buf;
  require_parent_exists(fs::path(out_csv));
  write_text_file(out_csv, csv);
  std::cout << "split '" << split << "' miou " << report.mean << " -> " << out_csv << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& axis, const std::string& values_csv,
               const std::string& seeds_csv, const std::string& out_csv) {
  const pwseg::RunConfig cfg = pwseg::load_run_config(config_path);
  const pwseg::Dataset ds = pwseg::load_dataset(data_dir);
  const std::vector<std::string> values = split_list(values_csv);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_csv)) seeds.push_back(std::stoull(s));
  const auto rows = pwseg::ablate(cfg.train, ds, axis, values, seeds);
  require_parent_exists(fs::path(out_csv));
  write_text_file(out_csv, pwseg::ablate_csv(rows));
  std::cout << "wrote " << rows.size() << " ablation rows to " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised segmentation lab: rank-statistics pseudo-label "
               "weighting with detector-gated reliability"};
  app.footer(config_docs_epilog());
  app.require_subcommand(1);

  std::string spec_path, out_path, data_dir, split = "labeled", config_path;
  std::string checkpoint_path, axis, values_csv, seeds_csv, similarity;
  bool disable_rppi = false, disable_ppw = false;

  auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
  gen_data->add_option("--spec", spec_path, "run config file")->required();
  gen_data->add_option("--out", out_path, "output dataset directory")->required();

  auto* gen_boxes =
      app.add_subcommand("gen-boxes", "extract component bounding boxes from masks");
  gen_boxes->add_option("--data", data_dir, "dataset directory")->required();
  gen_boxes->add_option("--split", split, "labeled|unlabeled|val (default labeled)");
  gen_boxes->add_option("--out", out_path, "output CSV path")->required();

  auto* train = app.add_subcommand("train", "run semi-supervised training");
  train->add_option("--config", config_path, "run config file")->required();
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_path, "run output directory")->required();
  train->add_flag("--disable-rppi", disable_rppi,
                  "bank sources restricted to labeled pixels");
  train->add_flag("--disable-ppw", disable_ppw, "force all pixel weights to 1");
  train->add_option("--similarity", similarity, "rank|cosine (overrides config)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--split", split, "labeled|unlabeled|val")->required();
  eval->add_option("--out", out_path, "output CSV path")->required();

  auto* ablate = app.add_subcommand("ablate", "sweep one config axis over seeds");
  ablate->add_option("--config", config_path, "run config file")->required();
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--axis", axis, "k|alpha|bbox_conf|bank_capacity|similarity")
      ->required();
  ablate->add_option("--values", values_csv, "comma-separated axis values")->required();
  ablate->add_option("--seeds", seeds_csv, "comma-separated train seeds")->required();
  ablate->add_option("--out", out_path, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_data->parsed()) return cmd_gen_data(spec_path, out_path);
    if (gen_boxes->parsed()) return cmd_gen_boxes(data_dir, split, out_path);
    if (train->parsed()) {
      return cmd_train(config_path, data_dir, out_path, disable_rppi, disable_ppw,
                       similarity);
    }
    if (eval->parsed()) return cmd_eval(checkpoint_path, data_dir, split, out_path);
    if (ablate->parsed()) {
      return cmd_ablate(config_path, data_dir, axis, values_csv, seeds_csv, out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
