#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dced/errors.hpp"
#include "dced/image.hpp"

namespace dced {

// Pixel-level confusion counts with ROI (label 0) as the positive class.
struct ConfusionCounts {
  long long tp = 0, tn = 0, fp = 0, fn = 0;

  long long total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

namespace detail {

inline void check_binary(const Mask& m, const char* what) {
  for (std::uint8_t v : m.values) {
    if (v > 1) throw std::invalid_argument(std::string(what) + ": mask values must be 0 or 1");
  }
}

}  // namespace detail

inline ConfusionCounts confusion(const Mask& pred, const Mask& truth) {
  if (pred.width != truth.width || pred.height != truth.height) {
    throw ShapeError("confusion: mask size mismatch");
  }
  detail::check_binary(pred, "confusion");
  detail::check_binary(truth, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool pred_roi = pred.values[i] == 0;
    const bool truth_roi = truth.values[i] == 0;
    if (pred_roi && truth_roi) ++c.tp;
    else if (!pred_roi && !truth_roi) ++c.tn;
    else if (pred_roi) ++c.fp;
    else ++c.fn;
  }
  return c;
}

inline double pixel_accuracy(const ConfusionCounts& c) {
  if (c.total() <= 0) throw std::invalid_argument("pixel_accuracy: empty comparison");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

// Per-class intersection-over-union; an empty union scores 1.0 so perfect
// predictions stay perfect on degenerate images.
inline double iou_from_counts(const ConfusionCounts& c, int cls) {
  const long long inter = cls == 0 ? c.tp : c.tn;
  const long long uni = inter + c.fp + c.fn;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct IouBreakdown {
  double roi = 1.0, background = 1.0, mean = 1.0, weighted = 1.0;
};

inline IouBreakdown iou_breakdown(const ConfusionCounts& c) {
  IouBreakdown b;
  b.roi = iou_from_counts(c, 0);
  b.background = iou_from_counts(c, 1);
  b.mean = 0.5 * (b.roi + b.background);
  const long long total = c.total();
  if (total > 0) {
    const double roi_freq = static_cast<double>(c.tp + c.fn) / total;
    b.weighted = roi_freq * b.roi + (1.0 - roi_freq) * b.background;
  }
  return b;
}

inline double iou(const Mask& pred, const Mask& truth, int cls) {
  return iou_from_counts(confusion(pred, truth), cls);
}
inline double mean_iou(const Mask& pred, const Mask& truth) {
  return iou_breakdown(confusion(pred, truth)).mean;
}
inline double weighted_iou(const Mask& pred, const Mask& truth) {
  return iou_breakdown(confusion(pred, truth)).weighted;
}

// ROI pixels with at least one 4-neighbor that is background or off-image.
inline std::vector<std::pair<int, int>> boundary_extract(const Mask& mask) {
  detail::check_binary(mask, "boundary_extract");
  std::vector<std::pair<int, int>> boundary;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(y, x) != 0) continue;
      const bool edge = y == 0 || y == mask.height - 1 || x == 0 || x == mask.width - 1 ||
                        mask.at(y - 1, x) == 1 || mask.at(y + 1, x) == 1 ||
                        mask.at(y, x - 1) == 1 || mask.at(y, x + 1) == 1;
      if (edge) boundary.emplace_back(y, x);
    }
  }
  return boundary;
}

namespace detail {

// Fraction of `from` boundary pixels with some `to` boundary pixel within
// Euclidean distance theta, found by scanning the theta-radius window in a
// presence grid.
inline double boundary_match_fraction(const std::vector<std::pair<int, int>>& from,
                                      const std::vector<std::pair<int, int>>& to, double theta,
                                      int width, int height) {
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(width) * height, 0);
  for (const auto& [y, x] : to) grid[static_cast<std::size_t>(y) * width + x] = 1;
  const int radius = static_cast<int>(theta);
  const double theta_sq = theta * theta;
  long long matched = 0;
  for (const auto& [y, x] : from) {
    bool hit = false;
    for (int dy = -radius; dy <= radius && !hit; ++dy) {
      const int yy = y + dy;
      if (yy < 0 || yy >= height) continue;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = x + dx;
        if (xx < 0 || xx >= width) continue;
        if (static_cast<double>(dy) * dy + static_cast<double>(dx) * dx > theta_sq) continue;
        if (grid[static_cast<std::size_t>(yy) * width + xx]) {
          hit = true;
          break;
        }
      }
    }
    if (hit) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(from.size());
}

}  // namespace detail

// Boundary F1 at pixel tolerance theta: harmonic mean of boundary precision
// and recall. Both boundaries empty -> 1.0, exactly one empty -> 0.0.
inline double bfscore(const Mask& pred, const Mask& truth, double theta) {
  if (pred.width != truth.width || pred.height != truth.height) {
    throw ShapeError("bfscore: mask size mismatch");
  }
  if (!(theta >= 1.0)) throw std::invalid_argument("bfscore: theta must be >= 1");
  const auto bp = boundary_extract(pred);
  const auto bt = boundary_extract(truth);
  if (bp.empty() && bt.empty()) return 1.0;
  if (bp.empty() || bt.empty()) return 0.0;
  const double precision =
      detail::boundary_match_fraction(bp, bt, theta, pred.width, pred.height);
  const double recall = detail::boundary_match_fraction(bt, bp, theta, pred.width, pred.height);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// Boundary-matching tolerance: ceil(0.0075 * image diagonal), 4 px at 320x320.
inline double default_bf_theta(int width, int height) {
  const double diag = std::sqrt(static_cast<double>(width) * width +
                                static_cast<double>(height) * height);
  return std::max(1.0, std::ceil(0.0075 * diag));
}

// --- pixel counting ----------------------------------------------------------

struct PixelCounts {
  // tag -> {ROI pixels, background pixels}
  std::map<std::string, std::array<long long, 2>> per_tag;

  void add_mask(const Mask& mask, const std::string& tag) {
    auto& entry = per_tag[tag];
    for (std::uint8_t v : mask.values) {
      ++entry[v == 0 ? 0 : 1];
    }
  }
  long long roi_total() const {
    long long t = 0;
    for (const auto& [tag, c] : per_tag) t += c[0];
    return t;
  }
  long long background_total() const {
    long long t = 0;
    for (const auto& [tag, c] : per_tag) t += c[1];
    return t;
  }
  long long grand_total() const { return roi_total() + background_total(); }
};

inline PixelCounts pixel_count(const std::vector<Mask>& masks, const std::string& tag) {
  PixelCounts counts;
  for (const Mask& m : masks) counts.add_mask(m, tag);
  return counts;
}

// --- evaluation report ---------------------------------------------------------

inline double metrics_nan() { return std::numeric_limits<double>::quiet_NaN(); }

struct SplitMetrics {
  double accuracy = metrics_nan();
  double loss = metrics_nan();
};

// One report column: the eight summary rows plus the IoU breakdown of row 8.
struct DatasetColumn {
  SplitMetrics training, validation, test;
  double bfscore = metrics_nan();
  IouBreakdown iou;
};

struct FoldReport {
  int fold_index = 0;
  std::map<std::string, DatasetColumn> columns;  // dataset tags plus "global"
  PixelCounts pixel_counts;
};

struct MetricsReport {
  std::vector<FoldReport> folds;
  FoldReport mean;  // arithmetic mean of fold values, field by field
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? metrics_nan() : s / static_cast<double>(v.size());
}

template <typename Getter>
inline double fold_mean(const std::vector<FoldReport>& folds, const std::string& tag,
                        Getter get) {
  std::vector<double> vals;
  for (const FoldReport& f : folds) {
    auto it = f.columns.find(tag);
    if (it != f.columns.end()) vals.push_back(get(it->second));
  }
  return mean_of(vals);
}

}  // namespace detail

inline FoldReport mean_report(const std::vector<FoldReport>& folds) {
  FoldReport mean;
  mean.fold_index = -1;
  std::map<std::string, int> tags;
  for (const FoldReport& f : folds) {
    for (const auto& [tag, col] : f.columns) ++tags[tag];
    for (const auto& [tag, c] : f.pixel_counts.per_tag) {
      auto& e = mean.pixel_counts.per_tag[tag];
      e[0] += c[0];
      e[1] += c[1];
    }
  }
  for (const auto& [tag, n] : tags) {
    DatasetColumn col;
    col.training.accuracy = detail::fold_mean(folds, tag, [](const DatasetColumn& c) {
      return c.training.accuracy;
    });
    col.training.loss =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.training.loss; });
    col.validation.accuracy = detail::fold_mean(
        folds, tag, [](const DatasetColumn& c) { return c.validation.accuracy; });
    col.validation.loss =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.validation.loss; });
    col.test.accuracy =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.test.accuracy; });
    col.test.loss =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.test.loss; });
    col.bfscore =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.bfscore; });
    col.iou.roi = detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.iou.roi; });
    col.iou.background =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.iou.background; });
    col.iou.mean =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.iou.mean; });
    col.iou.weighted =
        detail::fold_mean(folds, tag, [](const DatasetColumn& c) { return c.iou.weighted; });
    mean.columns[tag] = col;
  }
  return mean;
}

inline MetricsReport build_report(std::vector<FoldReport> folds) {
  if (folds.empty()) throw std::invalid_argument("build_report: no fold results");
  MetricsReport report;
  report.mean = mean_report(folds);
  report.folds = std::move(folds);
  return report;
}

namespace detail {

inline std::string fmt_rate(double v) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << v;
  return ss.str();
}

inline std::string fmt_sci(long long v) {
  std::ostringstream ss;
  ss << std::scientific << std::setprecision(4) << static_cast<double>(v);
  return ss.str();
}

inline void fold_to_text(std::ostream& out, const FoldReport& f, const std::string& title) {
  out << "== " << title << " ==\n";
  std::vector<std::string> tags;
  for (const auto& [tag, col] : f.columns) {
    if (tag != "global") tags.push_back(tag);
  }
  tags.push_back("global");
  out << std::left << std::setw(26) << "Metric";
  for (const auto& tag : tags) out << std::right << std::setw(12) << tag;
  out << "\n";
  const auto row = [&](const std::string& label, auto get) {
    out << std::left << std::setw(26) << label;
    for (const auto& tag : tags) {
      auto it = f.columns.find(tag);
      out << std::right << std::setw(12)
          << (it == f.columns.end() ? "n/a" : fmt_rate(get(it->second)));
    }
    out << "\n";
  };
  row("1 Training Accuracy", [](const DatasetColumn& c) { return c.training.accuracy; });
  row("2 Training Loss", [](const DatasetColumn& c) { return c.training.loss; });
  row("3 Validation Accuracy", [](const DatasetColumn& c) { return c.validation.accuracy; });
  row("4 Validation Loss", [](const DatasetColumn& c) { return c.validation.loss; });
  row("5 Test Accuracy", [](const DatasetColumn& c) { return c.test.accuracy; });
  row("6 Test Loss", [](const DatasetColumn& c) { return c.test.loss; });
  row("7 BFScore", [](const DatasetColumn& c) { return c.bfscore; });
  row("8 IoU", [](const DatasetColumn& c) { return c.iou.roi; });
  row("IoU (background)", [](const DatasetColumn& c) { return c.iou.background; });
  row("Mean IoU", [](const DatasetColumn& c) { return c.iou.mean; });
  row("Weighted IoU", [](const DatasetColumn& c) { return c.iou.weighted; });
  out << "Pixel count:\n";
  for (const auto& [tag, c] : f.pixel_counts.per_tag) {
    out << "  " << std::left << std::setw(12) << tag << " ROI " << fmt_sci(c[0])
        << "  background " << fmt_sci(c[1]) << "  total " << fmt_sci(c[0] + c[1]) << "\n";
  }
  out << "  " << std::left << std::setw(12) << "global" << " ROI "
      << fmt_sci(f.pixel_counts.roi_total()) << "  background "
      << fmt_sci(f.pixel_counts.background_total()) << "  total "
      << fmt_sci(f.pixel_counts.grand_total()) << "\n";
}

inline nlohmann::json column_to_json(const DatasetColumn& c) {
  return nlohmann::json{
      {"training_accuracy", c.training.accuracy},
      {"training_loss", c.training.loss},
      {"validation_accuracy", c.validation.accuracy},
      {"validation_loss", c.validation.loss},
      {"test_accuracy", c.test.accuracy},
      {"test_loss", c.test.loss},
      {"bfscore", c.bfscore},
      {"iou", {{"roi", c.iou.roi},
               {"background", c.iou.background},
               {"mean", c.iou.mean},
               {"weighted", c.iou.weighted}}}};
}

inline nlohmann::json fold_to_json(const FoldReport& f) {
  nlohmann::json columns = nlohmann::json::object();
  for (const auto& [tag, col] : f.columns) columns[tag] = column_to_json(col);
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [tag, c] : f.pixel_counts.per_tag) {
    counts[tag] = {{"roi", c[0]}, {"background", c[1]}, {"total", c[0] + c[1]}};
  }
  counts["global"] = {{"roi", f.pixel_counts.roi_total()},
                      {"background", f.pixel_counts.background_total()},
                      {"total", f.pixel_counts.grand_total()}};
  return nlohmann::json{{"fold", f.fold_index}, {"columns", columns}, {"pixel_counts", counts}};
}

}  // namespace detail

inline std::string report_to_text(const MetricsReport& report) {
  std::ostringstream out;
  for (const FoldReport& f : report.folds) {
    detail::fold_to_text(out, f, "fold " + std::to_string(f.fold_index));
    out << "\n";
  }
  detail::fold_to_text(out, report.mean,
                       report.folds.size() > 1 ? "mean over folds" : "summary");
  return out.str();
}

inline std::string report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["folds"] = nlohmann::json::array();
  for (const FoldReport& f : report.folds) j["folds"].push_back(detail::fold_to_json(f));
  j["mean"] = detail::fold_to_json(report.mean);
  return j.dump(2) + "\n";
}

}  // namespace dced
