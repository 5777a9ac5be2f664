#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dced/metrics.hpp"
#include "dced/net.hpp"
#include "dced/preprocess.hpp"
#include "dced/tensor.hpp"

namespace dced {

struct TrainConfig {
  double learning_rate = 1e-4;
  int minibatch = 2;
  int max_epochs_per_level = 400;
  int iterations_per_epoch = 150;
  int max_global_rounds = 2;
  std::uint64_t seed = 42;
  double split_fraction = 0.9;
  int folds = 5;
  bool sample_with_replacement = false;
  double beta1 = 0.9, beta2 = 0.999, adam_epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (minibatch < 1) throw std::invalid_argument("TrainConfig: minibatch must be >= 1");
    if (folds < 2) throw std::invalid_argument("TrainConfig: folds must be >= 2");
    if (max_epochs_per_level < 1 || iterations_per_epoch < 1) {
      throw std::invalid_argument("TrainConfig: epoch limits must be >= 1");
    }
    if (!(split_fraction > 0.0 && split_fraction <= 1.0)) {
      throw std::invalid_argument("TrainConfig: split_fraction must lie in (0,1]");
    }
  }
};

// --- MSE loss (the network's only training signal) ---------------------------

struct MseResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d pred
};

// loss = (1/n) sum (g_i - p_i)^2, grad = (2/n)(p - g), n = element count.
inline MseResult mse_loss(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("mse_loss: shape mismatch " + pred.shape().str() + " vs " +
                     truth.shape().str());
  }
  MseResult r;
  r.grad = Tensor(pred.shape());
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(truth[i]) - pred[i];
    acc += d * d;
    r.grad[i] = static_cast<float>(2.0 / n * (static_cast<double>(pred[i]) - truth[i]));
  }
  r.loss = acc / n;
  return r;
}

// --- Adam ----------------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<float>> m, v;
  long long step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  static AdamState create(const std::vector<ParamView>& params, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    for (const ParamView& p : params) {
      s.m.emplace_back(p.size, 0.0f);
      s.v.emplace_back(p.size, 0.0f);
    }
    return s;
  }
};

// Standard bias-corrected adaptive-moment update, computed in double and
// stored back to float32; fully deterministic.
inline void adam_step(const std::vector<ParamView>& params,
                      const std::vector<ParamView>& grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size || params[i].size != state.m[i].size()) {
      throw ShapeError("adam_step: tensor size mismatch at parameter " + std::to_string(i));
    }
    float* p = params[i].data;
    const float* g = grads[i].data;
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i].size; ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p[j] = static_cast<float>(p[j] - lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

// --- training samples -------------------------------------------------------------

// One training example at some level: the level input (3-channel image for
// level 1, previous level's probability map after that) and the mask target.
struct Sample {
  Tensor input;   // (1, c, S, S)
  Tensor target;  // (1, 1, S, S) of 0/1 mask values
  std::string tag;
};

inline std::vector<Sample> make_samples(const std::vector<LabeledImage>& images) {
  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (const LabeledImage& img : images) {
    samples.push_back(Sample{img.image, mask_to_tensor(img.mask), img.tag});
  }
  return samples;
}

namespace detail {

inline Tensor stack_batch(const std::vector<Sample>& samples,
                          const std::vector<std::size_t>& ids, bool targets) {
  const Tensor& first = targets ? samples[ids[0]].target : samples[ids[0]].input;
  Shape s = first.shape();
  s.n = static_cast<int>(ids.size());
  Tensor out(s);
  const std::size_t item = first.size();
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const Tensor& t = targets ? samples[ids[b]].target : samples[ids[b]].input;
    if (t.size() != item) throw ShapeError("stack_batch: inconsistent sample shapes");
    std::copy(t.data(), t.data() + item, out.data() + b * item);
  }
  return out;
}

}  // namespace detail

// Mean per-image gate value of a level over a sample set (inference mode).
inline double evaluate_level_co(const Level& level, const std::vector<Sample>& samples) {
  double acc = 0.0;
  for (const Sample& s : samples) {
    acc += compute_gate(level_infer(level, s.input), s.target);
  }
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

// --- gated per-level training --------------------------------------------------------

struct HistoryRow {
  int epoch = 0;  // global epoch counter across the whole run
  int level = 0;  // 1-based
  double loss = 0.0;
  double co = 0.0;
  GateDecision decision = GateDecision::Repeat;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;
  std::vector<double> level_final_co;
  double final_co = metrics_nan();
  bool final_reached = false;
  double wall_seconds = 0.0;
};

inline std::string history_to_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,level,loss,co,decision\n";
  out.precision(9);
  for (const HistoryRow& r : history.rows) {
    out << r.epoch << "," << r.level << "," << r.loss << "," << r.co << ","
        << (r.decision == GateDecision::Advance ? "advance" : "repeat") << "\n";
  }
  return out.str();
}

struct TrainLevelResult {
  bool reached = false;  // hit C_o >= T_o before the epoch cap
  double final_co = 0.0;
  int epochs = 0;
};

// Test hook: overrides the epoch-end C_o evaluation (epoch is 1-based).
using GateHook = std::function<double(int epoch)>;

// Minibatch MSE training with the comparison gate: after every epoch the
// level's C_o on the validation set decides Advance (stop) or Repeat. Stops
// unconditionally at max_epochs_per_level with reached = false.
inline TrainLevelResult train_level(Level& level, const std::vector<Sample>& train,
                                    const std::vector<Sample>& val, const TrainConfig& cfg,
                                    Rng& rng, TrainHistory& history, int level_index,
                                    int& epoch_counter, const GateHook& gate_hook = nullptr) {
  cfg.validate();
  if (train.empty() || val.empty()) {
    throw std::invalid_argument("train_level: empty train or validation set");
  }
  std::vector<ParamView> params = level_param_views(level);
  AdamState adam = AdamState::create(params, cfg.beta1, cfg.beta2, cfg.adam_epsilon);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLevelResult result;
  for (int epoch = 1; epoch <= cfg.max_epochs_per_level; ++epoch) {
    const int full_batches =
        static_cast<int>((train.size() + cfg.minibatch - 1) / cfg.minibatch);
    const int iterations = cfg.sample_with_replacement
                               ? cfg.iterations_per_epoch
                               : std::min(cfg.iterations_per_epoch, full_batches);
    if (!cfg.sample_with_replacement) rng.shuffle(order);

    double loss_sum = 0.0;
    for (int it = 0; it < iterations; ++it) {
      std::vector<std::size_t> batch;
      if (cfg.sample_with_replacement) {
        for (int b = 0; b < cfg.minibatch; ++b) {
          batch.push_back(static_cast<std::size_t>(rng.below(train.size())));
        }
      } else {
        for (int b = 0; b < cfg.minibatch; ++b) {
          const std::size_t pos = static_cast<std::size_t>(it) * cfg.minibatch + b;
          if (pos >= order.size()) break;
          batch.push_back(order[pos]);
        }
      }
      Tensor input = detail::stack_batch(train, batch, false);
      Tensor target = detail::stack_batch(train, batch, true);

      LevelCache cache;
      Tensor pred = level_forward(level, input, Mode::Training, rng, &cache);
      MseResult mse = mse_loss(pred, target);
      if (!std::isfinite(mse.loss)) {
        throw NonFiniteLossError("train_level: non-finite loss at level " +
                                 std::to_string(level_index) + ", epoch " +
                                 std::to_string(epoch));
      }
      loss_sum += mse.loss;
      LevelGrads grads = level_backward(level, cache, mse.grad);
      std::vector<ParamView> grad_views = level_grad_views(level, grads);
      adam_step(params, grad_views, adam, cfg.learning_rate);
    }

    const double co = gate_hook ? gate_hook(epoch) : evaluate_level_co(level, val);
    const GateDecision decision = gate_decision(co, level.threshold);
    history.rows.push_back(
        HistoryRow{++epoch_counter, level_index, loss_sum / std::max(1, iterations), co,
                   decision});
    result.final_co = co;
    result.epochs = epoch;
    if (decision == GateDecision::Advance) {
      result.reached = true;
      break;
    }
  }
  return result;
}

// --- whole-network orchestration -------------------------------------------------------

namespace detail {

// Level n+1 consumes level n's output maps, computed with level n frozen in
// inference mode.
inline std::vector<Sample> advance_samples(const Level& level,
                                           const std::vector<Sample>& samples) {
  std::vector<Sample> next;
  next.reserve(samples.size());
  for (const Sample& s : samples) {
    next.push_back(Sample{level_infer(level, s.input), s.target, s.tag});
  }
  return next;
}

inline double evaluate_net_co(const MultiLevelNet& net, const std::vector<Sample>& samples) {
  double acc = 0.0;
  for (const Sample& s : samples) {
    acc += compute_gate(multi_level_forward(net, s.input), s.target);
  }
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

}  // namespace detail

// Trains levels in order behind their gates. If the final validation C_o
// misses final_threshold, the level with the lowest recorded C_o is retrained
// once per global round, up to max_global_rounds rounds.
inline TrainHistory train_network(MultiLevelNet& net, const std::vector<Sample>& train,
                                  const std::vector<Sample>& val, const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainHistory history;
  history.level_final_co.assign(net.levels.size(), 0.0);
  Rng rng(cfg.seed);
  int epoch_counter = 0;

  std::vector<Sample> level_train = train;
  std::vector<Sample> level_val = val;
  for (std::size_t i = 0; i < net.levels.size(); ++i) {
    TrainLevelResult r = train_level(net.levels[i], level_train, level_val, cfg, rng, history,
                                     static_cast<int>(i) + 1, epoch_counter);
    history.level_final_co[i] = r.final_co;
    if (i + 1 < net.levels.size()) {
      level_train = detail::advance_samples(net.levels[i], level_train);
      level_val = detail::advance_samples(net.levels[i], level_val);
    }
  }

  history.final_co = detail::evaluate_net_co(net, val);
  for (int round = 0; round < cfg.max_global_rounds && history.final_co < net.config.final_threshold;
       ++round) {
    // Send feedback to the weakest level and retrain it once.
    std::size_t worst = 0;
    for (std::size_t i = 1; i < net.levels.size(); ++i) {
      if (history.level_final_co[i] < history.level_final_co[worst]) worst = i;
    }
    std::vector<Sample> round_train = train;
    std::vector<Sample> round_val = val;
    for (std::size_t i = 0; i < worst; ++i) {
      round_train = detail::advance_samples(net.levels[i], round_train);
      round_val = detail::advance_samples(net.levels[i], round_val);
    }
    TrainLevelResult r = train_level(net.levels[worst], round_train, round_val, cfg, rng,
                                     history, static_cast<int>(worst) + 1, epoch_counter);
    history.level_final_co[worst] = r.final_co;
    history.final_co = detail::evaluate_net_co(net, val);
  }
  history.final_reached = history.final_co >= net.config.final_threshold;
  history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return history;
}

// --- k-fold protocol ----------------------------------------------------------------------

struct FoldSplit {
  std::vector<std::size_t> train, val, test;
};

// Deterministic shuffle, one shared test holdout of (1 - split_fraction)
// carved before folding, then k disjoint validation folds covering the rest.
inline std::vector<FoldSplit> kfold_split(std::size_t dataset_size, int k, std::uint64_t seed,
                                          double split_fraction = 0.9) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (static_cast<std::size_t>(k) > dataset_size) {
    throw std::invalid_argument("kfold_split: k exceeds dataset size");
  }
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t test_count = static_cast<std::size_t>(
      std::llround((1.0 - split_fraction) * static_cast<double>(dataset_size)));
  std::vector<std::size_t> test(order.begin(), order.begin() + test_count);
  std::vector<std::size_t> rest(order.begin() + test_count, order.end());
  if (rest.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("kfold_split: not enough non-test items for k folds");
  }

  std::vector<FoldSplit> folds(k);
  const std::size_t base = rest.size() / k, extra = rest.size() % k;
  std::size_t cursor = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    FoldSplit& fold = folds[f];
    fold.test = test;
    fold.val.assign(rest.begin() + cursor, rest.begin() + cursor + len);
    fold.train.reserve(rest.size() - len);
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (i < cursor || i >= cursor + len) fold.train.push_back(rest[i]);
    }
    cursor += len;
  }
  return folds;
}

// --- evaluation of a trained net over labeled images ----------------------------------------

struct SplitEvaluation {
  std::map<std::string, ConfusionCounts> confusion_by_tag;
  std::map<std::string, double> loss_by_tag;      // mean MSE
  std::map<std::string, double> bf_by_tag;        // mean per-image BFScore
  std::map<std::string, int> images_by_tag;
  PixelCounts counts;
};

inline SplitEvaluation evaluate_split(const MultiLevelNet& net,
                                      const std::vector<LabeledImage>& images) {
  SplitEvaluation ev;
  std::map<std::string, double> loss_sum, bf_sum;
  for (const LabeledImage& img : images) {
    const std::string tag = img.tag.empty() ? "all" : img.tag;
    const Tensor prob = multi_level_forward(net, img.image);
    const Mask pred = prob_to_mask(prob);
    ev.confusion_by_tag[tag] += confusion(pred, img.mask);
    loss_sum[tag] += mse_loss(prob, mask_to_tensor(img.mask)).loss;
    bf_sum[tag] += bfscore(pred, img.mask, default_bf_theta(img.mask.width, img.mask.height));
    ev.counts.add_mask(img.mask, tag);
    ++ev.images_by_tag[tag];
  }
  for (const auto& [tag, n] : ev.images_by_tag) {
    ev.loss_by_tag[tag] = loss_sum[tag] / n;
    ev.bf_by_tag[tag] = bf_sum[tag] / n;
  }
  return ev;
}

namespace detail {

inline void fill_columns(FoldReport& report, const SplitEvaluation& train,
                         const SplitEvaluation& val, const SplitEvaluation& test) {
  ConfusionCounts train_all, val_all, test_all;
  double train_loss = 0.0, val_loss = 0.0, test_loss = 0.0, test_bf = 0.0;
  int train_n = 0, val_n = 0, test_n = 0;

  std::map<std::string, bool> tags;
  for (const auto& [t, c] : train.confusion_by_tag) tags[t] = true;
  for (const auto& [t, c] : val.confusion_by_tag) tags[t] = true;
  for (const auto& [t, c] : test.confusion_by_tag) tags[t] = true;

  for (const auto& [tag, unused] : tags) {
    DatasetColumn col;
    if (auto it = train.confusion_by_tag.find(tag); it != train.confusion_by_tag.end()) {
      col.training.accuracy = pixel_accuracy(it->second);
      col.training.loss = train.loss_by_tag.at(tag);
      train_all += it->second;
      train_loss += train.loss_by_tag.at(tag) * train.images_by_tag.at(tag);
      train_n += train.images_by_tag.at(tag);
    }
    if (auto it = val.confusion_by_tag.find(tag); it != val.confusion_by_tag.end()) {
      col.validation.accuracy = pixel_accuracy(it->second);
      col.validation.loss = val.loss_by_tag.at(tag);
      val_all += it->second;
      val_loss += val.loss_by_tag.at(tag) * val.images_by_tag.at(tag);
      val_n += val.images_by_tag.at(tag);
    }
    if (auto it = test.confusion_by_tag.find(tag); it != test.confusion_by_tag.end()) {
      col.test.accuracy = pixel_accuracy(it->second);
      col.test.loss = test.loss_by_tag.at(tag);
      col.bfscore = test.bf_by_tag.at(tag);
      col.iou = iou_breakdown(it->second);
      test_all += it->second;
      test_loss += test.loss_by_tag.at(tag) * test.images_by_tag.at(tag);
      test_bf += test.bf_by_tag.at(tag) * test.images_by_tag.at(tag);
      test_n += test.images_by_tag.at(tag);
    }
    report.columns[tag] = col;
  }

  // Global column recomputed from pooled confusion counts, not averaged rates.
  DatasetColumn global;
  if (train_all.total() > 0) {
    global.training.accuracy = pixel_accuracy(train_all);
    global.training.loss = train_loss / train_n;
  }
  if (val_all.total() > 0) {
    global.validation.accuracy = pixel_accuracy(val_all);
    global.validation.loss = val_loss / val_n;
  }
  if (test_all.total() > 0) {
    global.test.accuracy = pixel_accuracy(test_all);
    global.test.loss = test_loss / test_n;
    global.bfscore = test_bf / test_n;
    global.iou = iou_breakdown(test_all);
  }
  report.columns["global"] = global;
  report.pixel_counts = test.counts;
}

inline std::vector<LabeledImage> pick(const std::vector<LabeledImage>& all,
                                      const std::vector<std::size_t>& ids) {
  std::vector<LabeledImage> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(all[i]);
  return out;
}

}  // namespace detail

struct KFoldOutcome {
  MetricsReport report;
  std::vector<TrainHistory> histories;
  MultiLevelNet best_net;  // highest validation accuracy fold, ties to the lowest index
  int best_fold = 0;
};

// The 5-fold protocol: per fold a fresh net (seed offset by the fold index),
// gated training, evaluation of all three splits, and the summary report;
// aggregate rows are arithmetic means over folds.
inline KFoldOutcome run_kfold(const std::vector<LabeledImage>& dataset,
                              const NetworkConfig& net_cfg, const TrainConfig& cfg) {
  const std::vector<FoldSplit> folds =
      kfold_split(dataset.size(), cfg.folds, cfg.seed, cfg.split_fraction);
  KFoldOutcome outcome;
  double best_val = -1.0;
  std::vector<FoldReport> fold_reports;

  for (std::size_t f = 0; f < folds.size(); ++f) {
    NetworkConfig fold_cfg = net_cfg;
    fold_cfg.seed = net_cfg.seed + f;
    MultiLevelNet net = MultiLevelNet::create(fold_cfg);

    const std::vector<LabeledImage> train_imgs = detail::pick(dataset, folds[f].train);
    const std::vector<LabeledImage> val_imgs = detail::pick(dataset, folds[f].val);
    const std::vector<LabeledImage> test_imgs = detail::pick(dataset, folds[f].test);

    TrainHistory history =
        train_network(net, make_samples(train_imgs), make_samples(val_imgs), cfg);

    FoldReport report;
    report.fold_index = static_cast<int>(f) + 1;
    detail::fill_columns(report, evaluate_split(net, train_imgs), evaluate_split(net, val_imgs),
                         evaluate_split(net, test_imgs));
    const double val_acc = report.columns.at("global").validation.accuracy;
    if (val_acc > best_val) {
      best_val = val_acc;
      outcome.best_net = std::move(net);
      outcome.best_fold = static_cast<int>(f) + 1;
    }
    fold_reports.push_back(std::move(report));
    outcome.histories.push_back(std::move(history));
  }

  outcome.report = build_report(std::move(fold_reports));
  // The mean row's pixel counts describe the whole dataset, not a sum of
  // per-fold test counts.
  outcome.report.mean.pixel_counts = PixelCounts{};
  for (const LabeledImage& img : dataset) {
    outcome.report.mean.pixel_counts.add_mask(img.mask, img.tag.empty() ? "all" : img.tag);
  }
  return outcome;
}

struct SingleRunOutcome {
  MetricsReport report;
  TrainHistory history;
  MultiLevelNet net;
};

// Single split: shared shuffle, (1 - split_fraction) test holdout, the same
// fraction of the remainder held out for the gate's validation set.
inline SingleRunOutcome run_single(const std::vector<LabeledImage>& dataset,
                                   const NetworkConfig& net_cfg, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  rng.shuffle(order);
  const std::size_t test_count = static_cast<std::size_t>(
      std::llround((1.0 - cfg.split_fraction) * static_cast<double>(dataset.size())));
  const std::size_t rest = dataset.size() - test_count;
  std::size_t val_count = static_cast<std::size_t>(
      std::llround((1.0 - cfg.split_fraction) * static_cast<double>(rest)));
  val_count = std::max<std::size_t>(1, val_count);
  if (test_count + val_count >= dataset.size()) {
    throw std::invalid_argument("run_single: dataset too small for the configured split");
  }

  const std::vector<std::size_t> test_ids(order.begin(), order.begin() + test_count);
  const std::vector<std::size_t> val_ids(order.begin() + test_count,
                                         order.begin() + test_count + val_count);
  const std::vector<std::size_t> train_ids(order.begin() + test_count + val_count, order.end());

  SingleRunOutcome out{MetricsReport{}, TrainHistory{}, MultiLevelNet::create(net_cfg)};
  const std::vector<LabeledImage> train_imgs = detail::pick(dataset, train_ids);
  const std::vector<LabeledImage> val_imgs = detail::pick(dataset, val_ids);
  const std::vector<LabeledImage> test_imgs = detail::pick(dataset, test_ids);

  out.history = train_network(out.net, make_samples(train_imgs), make_samples(val_imgs), cfg);

  FoldReport report;
  report.fold_index = 1;
  detail::fill_columns(report, evaluate_split(out.net, train_imgs),
                       evaluate_split(out.net, val_imgs), evaluate_split(out.net, test_imgs));
  out.report = build_report({std::move(report)});
  out.report.mean.pixel_counts = PixelCounts{};
  for (const LabeledImage& img : dataset) {
    out.report.mean.pixel_counts.add_mask(img.mask, img.tag.empty() ? "all" : img.tag);
  }
  return out;
}

}  // namespace dced
