// dced: batch CLI for the multi-level encoder-decoder segmentation pipeline.
// Subcommands: generate, preprocess, train, segment, evaluate.
//
// Exit codes: 0 ok, 2 bad config/usage, 3 generate I/O failure,
// 4 unreadable preprocess pair, 5 non-finite loss, 6 checkpoint corruption,
// 7 evaluate filename set mismatch.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dced/checkpoint.hpp"
#include "dced/config.hpp"
#include "dced/dataset.hpp"
#include "dced/metrics.hpp"
#include "dced/net.hpp"
#include "dced/preprocess.hpp"
#include "dced/synthgen.hpp"
#include "dced/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitGenerateIo = 3;
constexpr int kExitPreprocessIo = 4;
constexpr int kExitNonFiniteLoss = 5;
constexpr int kExitCheckpoint = 6;
constexpr int kExitEvaluateMismatch = 7;

dced::AppConfig load_app_config(const std::string& path) {
  if (path.empty()) return dced::AppConfig{};
  return dced::parse_config_file(path);
}

int cmd_generate(const std::string& config_path, const std::string& out_dir, int images,
                 std::int64_t seed, const std::string& tag) {
  dced::AppConfig cfg;
  try {
    cfg = load_app_config(config_path);
    if (tag != "healthy" && tag != "anaemic") {
      throw dced::ConfigError("--tag must be healthy or anaemic, got '" + tag + "'");
    }
    if (images < 1) throw dced::ConfigError("--images must be >= 1");
  } catch (const dced::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (!cfg.synthgen_weights_overridden) {
    cfg.synthgen.weights = dced::SceneConfig::preset_weights(tag);
  }
  if (seed >= 0) cfg.synthgen.seed = static_cast<std::uint64_t>(seed);
  try {
    dced::generate_dataset(cfg.synthgen, images, out_dir, tag);
  } catch (const dced::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitGenerateIo;
  }
  std::cout << "generated " << images << " " << tag << " image/mask pairs in " << out_dir
            << "\n";
  return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir,
                   const std::string& config_path) {
  dced::AppConfig cfg;
  try {
    cfg = load_app_config(config_path);
    cfg.network.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const auto rows = dced::load_manifest(fs::path(in_dir) / "manifest.csv");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw dced::IoError("cannot create output directory: " + out_dir);
    for (const dced::ManifestRow& row : rows) {
      dced::RawImage raw, truth;
      try {
        raw = dced::load_image(fs::path(in_dir) / row.image);
        truth = dced::load_image(fs::path(in_dir) / row.mask);
      } catch (const dced::IoError& e) {
        throw dced::IoError("pair " + row.image + " / " + row.mask + ": " + e.what());
      }
      dced::LabeledImage sample = dced::preprocess_pipeline(
          raw, truth, cfg.network.base_size, cfg.preprocess, row.tag);
      dced::save_labeled_image(sample, fs::path(out_dir) / row.image,
                               fs::path(out_dir) / row.mask);
    }
    dced::save_manifest(rows, fs::path(out_dir) / "manifest.csv");
    std::cout << "preprocessed " << rows.size() << " pairs into " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "preprocess error: " << e.what() << "\n";
    return kExitPreprocessIo;
  }
  return 0;
}

void write_reports(const dced::MetricsReport& report, const fs::path& checkpoint_path) {
  dced::atomic_write(checkpoint_path.string() + ".report.txt", dced::report_to_text(report));
  dced::atomic_write(checkpoint_path.string() + ".report.json", dced::report_to_json(report));
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& checkpoint_path, int folds) {
  dced::AppConfig cfg;
  try {
    cfg = load_app_config(config_path);
    cfg.network.validate();
    cfg.train.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const std::vector<dced::LabeledImage> dataset = dced::load_dataset(data_dir);
    if (dataset.empty()) throw dced::IoError("dataset is empty: " + data_dir);
    const std::uint64_t hash = dced::config_hash(cfg);
    const fs::path ckpt(checkpoint_path);

    if (folds > 0) {
      cfg.train.folds = folds;
      dced::KFoldOutcome outcome = dced::run_kfold(dataset, cfg.network, cfg.train);
      dced::save_checkpoint(outcome.best_net, ckpt, hash);
      for (std::size_t f = 0; f < outcome.histories.size(); ++f) {
        dced::atomic_write(checkpoint_path + ".fold" + std::to_string(f + 1) + ".history.csv",
                           dced::history_to_csv(outcome.histories[f]));
      }
      write_reports(outcome.report, ckpt);
      std::cout << dced::report_to_text(outcome.report);
      std::cout << "checkpoint (best fold " << outcome.best_fold << ") written to "
                << checkpoint_path << "\n";
    } else {
      dced::SingleRunOutcome outcome = dced::run_single(dataset, cfg.network, cfg.train);
      dced::save_checkpoint(outcome.net, ckpt, hash);
      dced::atomic_write(checkpoint_path + ".history.csv",
                         dced::history_to_csv(outcome.history));
      write_reports(outcome.report, ckpt);
      std::cout << dced::report_to_text(outcome.report);
      std::cout << "checkpoint written to " << checkpoint_path << "\n";
    }
  } catch (const dced::NonFiniteLossError& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitNonFiniteLoss;
  } catch (const std::exception& e) {
    std::cerr << "train error: " << e.what() << "\n";
    return kExitGenerateIo;
  }
  return 0;
}

int cmd_segment(const std::string& checkpoint_path, const std::string& in_path,
                const std::string& out_path) {
  try {
    const dced::LoadedCheckpoint loaded = dced::load_checkpoint(checkpoint_path);
    const dced::RawImage raw = dced::load_image(in_path);
    const dced::Tensor image =
        dced::preprocess_image(raw, loaded.net.config.base_size, dced::PreprocessConfig{});
    const dced::Tensor prob = dced::multi_level_forward(loaded.net, image);
    dced::save_mask(dced::prob_to_mask(prob), out_path);
  } catch (const dced::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "segment error: " << e.what() << "\n";
    return kExitGenerateIo;
  }
  return 0;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& truth_dir,
                 const std::string& report_path) {
  try {
    const auto list_masks = [](const fs::path& dir) {
      std::vector<std::string> names;
      if (!fs::is_directory(dir)) throw dced::IoError("not a directory: " + dir.string());
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".pgm") names.push_back(entry.path().filename().string());
      }
      std::sort(names.begin(), names.end());
      return names;
    };
    const std::vector<std::string> pred_names = list_masks(pred_dir);
    const std::vector<std::string> truth_names = list_masks(truth_dir);
    if (pred_names != truth_names) {
      std::cerr << "filename sets differ between " << pred_dir << " and " << truth_dir << "\n";
      std::set<std::string> p(pred_names.begin(), pred_names.end());
      std::set<std::string> t(truth_names.begin(), truth_names.end());
      for (const auto& n : p) {
        if (!t.count(n)) std::cerr << "  only in pred:  " << n << "\n";
      }
      for (const auto& n : t) {
        if (!p.count(n)) std::cerr << "  only in truth: " << n << "\n";
      }
      return kExitEvaluateMismatch;
    }
    if (pred_names.empty()) throw dced::IoError("no .pgm masks found in " + pred_dir);

    // Tags come from the truth-side manifest when one exists.
    std::map<std::string, std::string> tag_by_mask;
    if (fs::exists(fs::path(truth_dir) / "manifest.csv")) {
      for (const dced::ManifestRow& row :
           dced::load_manifest(fs::path(truth_dir) / "manifest.csv")) {
        tag_by_mask[row.mask] = row.tag;
      }
    }

    std::map<std::string, dced::ConfusionCounts> conf_by_tag;
    std::map<std::string, double> bf_by_tag;
    std::map<std::string, int> n_by_tag;
    dced::PixelCounts counts;
    for (const std::string& name : pred_names) {
      const dced::Mask pred = dced::load_mask(fs::path(pred_dir) / name);
      const dced::Mask truth = dced::load_mask(fs::path(truth_dir) / name);
      const auto tag_it = tag_by_mask.find(name);
      const std::string tag = tag_it == tag_by_mask.end() ? "all" : tag_it->second;
      conf_by_tag[tag] += dced::confusion(pred, truth);
      bf_by_tag[tag] +=
          dced::bfscore(pred, truth, dced::default_bf_theta(truth.width, truth.height));
      counts.add_mask(truth, tag);
      ++n_by_tag[tag];
    }

    dced::FoldReport fold;
    fold.fold_index = 1;
    fold.pixel_counts = counts;
    dced::ConfusionCounts pooled;
    double bf_total = 0.0;
    int n_total = 0;
    for (const auto& [tag, conf] : conf_by_tag) {
      dced::DatasetColumn col;
      col.test.accuracy = dced::pixel_accuracy(conf);
      col.test.loss = 1.0 - col.test.accuracy;  // MSE between 0/1 masks
      col.bfscore = bf_by_tag[tag] / n_by_tag[tag];
      col.iou = dced::iou_breakdown(conf);
      fold.columns[tag] = col;
      pooled += conf;
      bf_total += bf_by_tag[tag];
      n_total += n_by_tag[tag];
    }
    dced::DatasetColumn global;
    global.test.accuracy = dced::pixel_accuracy(pooled);
    global.test.loss = 1.0 - global.test.accuracy;
    global.bfscore = bf_total / n_total;
    global.iou = dced::iou_breakdown(pooled);
    fold.columns["global"] = global;

    const dced::MetricsReport report = dced::build_report({fold});
    dced::atomic_write(report_path, dced::report_to_text(report));
    dced::atomic_write(report_path + ".json", dced::report_to_json(report));
    std::cout << dced::report_to_text(report);
  } catch (const std::exception& e) {
    std::cerr << "evaluate error: " << e.what() << "\n";
    return kExitGenerateIo;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-level encoder-decoder RBC segmentation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir, tag = "healthy";
  std::string data_dir, checkpoint_path, in_path, out_path, pred_dir, truth_dir, report_path;
  int images = 0, folds = 0;
  std::int64_t seed = -1;

  CLI::App* generate = app.add_subcommand("generate", "render a synthetic dataset");
  generate->add_option("--config", config_path, "config file");
  generate->add_option("--out", out_dir, "output directory")->required();
  generate->add_option("--images", images, "number of images")->required();
  generate->add_option("--seed", seed, "scene seed");
  generate->add_option("--tag", tag, "healthy|anaemic");

  CLI::App* preprocess = app.add_subcommand("preprocess", "run the filter pipeline");
  preprocess->add_option("--in", in_dir, "raw dataset directory")->required();
  preprocess->add_option("--out", out_dir, "output directory")->required();
  preprocess->add_option("--config", config_path, "config file");

  CLI::App* train = app.add_subcommand("train", "train the multi-level network");
  train->add_option("--data", data_dir, "preprocessed dataset directory")->required();
  train->add_option("--config", config_path, "config file");
  train->add_option("--checkpoint", checkpoint_path, "checkpoint output path")->required();
  train->add_option("--folds", folds, "run k-fold cross validation");

  CLI::App* segment = app.add_subcommand("segment", "segment one image");
  segment->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  segment->add_option("--in", in_path, "input image (PPM/PGM)")->required();
  segment->add_option("--out", out_path, "output mask (PGM)")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "compare mask directories");
  evaluate->add_option("--pred", pred_dir, "predicted masks")->required();
  evaluate->add_option("--truth", truth_dir, "ground-truth masks")->required();
  evaluate->add_option("--report", report_path, "report output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (generate->parsed()) return cmd_generate(config_path, out_dir, images, seed, tag);
    if (preprocess->parsed()) return cmd_preprocess(in_dir, out_dir, config_path);
    if (train->parsed()) return cmd_train(data_dir, config_path, checkpoint_path, folds);
    if (segment->parsed()) return cmd_segment(checkpoint_path, in_path, out_path);
    if (evaluate->parsed()) return cmd_evaluate(pred_dir, truth_dir, report_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
