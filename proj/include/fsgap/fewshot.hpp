#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fsgap/error.hpp"
#include "fsgap/features.hpp"
#include "fsgap/nn.hpp"
#include "fsgap/rng.hpp"

namespace fsgap::fewshot {

inline constexpr int kProficient = 0;
inline constexpr int kExpert = 1;
inline constexpr int kTaskGrsMin = 19;  // observed score range the classes are defined on
inline constexpr int kExpertGrsMin = 25;
inline constexpr int kTaskGrsMax = 30;

// 19..24 -> proficient, 25..30 -> expert. Scores outside the observed range
// are an error unless the caller opts into clamping to the nearest class.
inline int binarize_grs(int grs, bool allow_extrapolation = false) {
  if (grs < kTaskGrsMin || grs > kTaskGrsMax) {
    require(allow_extrapolation, errc::grs_out_of_task_range,
            "GRS " + std::to_string(grs) + " outside the class range [" +
                std::to_string(kTaskGrsMin) + ", " + std::to_string(kTaskGrsMax) +
                "] (pass allow_extrapolation to clamp)");
    return grs < kTaskGrsMin ? kProficient : kExpert;
  }
  return grs < kExpertGrsMin ? kProficient : kExpert;
}

struct LabeledItem {
  std::string video_id;
  features::VideoFeatures feats;  // temporal-averaged, so frames_per_snippet == 1
  int label = kProficient;
};

inline std::vector<LabeledItem> make_items(const features::FeatureSet& set,
                                           bool allow_extrapolation = false) {
  std::vector<LabeledItem> items;
  items.reserve(set.videos.size());
  for (const auto& v : set.videos) {
    require(v.grs.has_value(), errc::grs_missing,
            "video '" + v.video_id + "' has no GRS label; evaluation needs labels on every video");
    LabeledItem it;
    it.video_id = v.video_id;
    it.feats = features::temporal_average(v);
    it.label = binarize_grs(*v.grs, allow_extrapolation);
    items.push_back(std::move(it));
  }
  return items;
}

struct Episode {
  int k = 0;
  std::vector<std::size_t> support;  // k per class, class 0 first, draw order
  std::vector<std::size_t> query;    // everything else, ascending index
  std::uint64_t seed = 0;
};

// Episodes are deterministic in (master_seed, episode_index, k); each class
// contributes exactly k support items and must retain at least one query item.
inline std::vector<Episode> sample_episodes(const std::vector<LabeledItem>& items, int k,
                                            int n_episodes, std::uint64_t master_seed) {
  require(k >= 1, errc::invalid_argument, "sample_episodes: k must be >= 1");
  require(n_episodes >= 1, errc::invalid_argument, "sample_episodes: need at least one episode");

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int label = items[i].label;
    require(label == kProficient || label == kExpert, errc::invalid_argument,
            "sample_episodes: label outside {0, 1}");
    by_class[label].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    require(by_class[c].size() >= static_cast<std::size_t>(k) + 1, errc::insufficient_class_size,
            "class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                " items; k = " + std::to_string(k) + " needs at least " + std::to_string(k + 1));

  std::vector<Episode> episodes(static_cast<std::size_t>(n_episodes));
  for (int e = 0; e < n_episodes; ++e) {
    Episode& ep = episodes[static_cast<std::size_t>(e)];
    ep.k = k;
    ep.seed = derive_seed(master_seed, static_cast<std::uint64_t>(e));
    Rng rng(ep.seed);
    std::vector<char> in_support(items.size(), 0);
    for (int c = 0; c < 2; ++c) {
      const auto picks =
          rng.sample_without_replacement(by_class[c].size(), static_cast<std::size_t>(k));
      for (const std::size_t p : picks) {
        const std::size_t idx = by_class[c][p];
        ep.support.push_back(idx);
        in_support[idx] = 1;
      }
    }
    for (std::size_t i = 0; i < items.size(); ++i)
      if (!in_support[i]) ep.query.push_back(i);
  }
  return episodes;
}

struct EpisodeMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
};

// Accuracy and macro-F1 as percentages over the two classes. A class with no
// true instances and no predictions contributes F1 = 0.
inline EpisodeMetrics evaluate(const std::vector<int>& predictions,
                               const std::vector<int>& labels) {
  require(predictions.size() == labels.size(), errc::length_mismatch,
          "evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
              std::to_string(labels.size()) + " labels");
  require(!labels.empty(), errc::empty_input, "evaluate: empty inputs");

  std::size_t correct = 0;
  double tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    require((p == 0 || p == 1) && (y == 0 || y == 1), errc::invalid_argument,
            "evaluate: classes must be 0 or 1");
    if (p == y) {
      ++correct;
      tp[p] += 1;
    } else {
      fp[p] += 1;
      fn[y] += 1;
    }
  }
  EpisodeMetrics m;
  m.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
  double f1_sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  m.f1 = 100.0 * f1_sum / 2.0;
  return m;
}

enum class HeadKind { linear, tcn };

inline std::string head_name(HeadKind k) { return k == HeadKind::linear ? "linear" : "tcn"; }

struct Hyperparams {
  int epochs = 30;
  double base_lr = 1e-3;
  nn::AdamWConfig adamw{};
  Eigen::Index tcn_channels = 64;
  int tcn_layers = 3;
  double init_scale = 1.0;  // 0 gives all-zero parameters
};

namespace detail {

// The linear head sees each video as its snippet-mean d-vector; the TCN sees
// the full (d x K) snippet sequence.
inline Eigen::VectorXd pooled_input(const features::VideoFeatures& v) {
  return v.snippet_matrix().colwise().mean().transpose();
}

inline Eigen::MatrixXd sequence_input(const features::VideoFeatures& v) {
  return v.snippet_matrix().transpose();
}

template <class Head, class Input>
EpisodeMetrics train_and_score(Head head, const std::vector<Input>& inputs,
                               const std::vector<LabeledItem>& items, const Episode& ep,
                               const Hyperparams& hp, Rng& rng) {
  nn::AdamWConfig cfg = hp.adamw;
  cfg.base_lr = hp.base_lr;
  auto opt = nn::OptimizerState::init(head.theta.size(), cfg);
  const Eigen::VectorXd mask = head.decay_mask(cfg.decay_bias);

  std::vector<std::size_t> order = ep.support;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr = nn::cosine_lr(epoch, hp.epochs, hp.base_lr);
    rng.shuffle(order);
    for (const std::size_t idx : order) {
      const auto back = nn::backward(head, inputs[idx], items[idx].label);
      nn::adamw_step(opt, head.theta, back.grad, mask, lr);
    }
  }

  std::vector<int> preds, labels;
  preds.reserve(ep.query.size());
  labels.reserve(ep.query.size());
  for (const std::size_t idx : ep.query) {
    const Eigen::VectorXd logits = head.forward(inputs[idx]);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.size(); ++c)
      if (logits(c) > logits(best)) best = c;  // ties stay on the lower class
    preds.push_back(static_cast<int>(best));
    labels.push_back(items[idx].label);
  }
  return evaluate(preds, labels);
}

}  // namespace detail

// Trains a fresh head on the support set (one AdamW step per sample, batch
// size 1, cosine schedule, per-epoch shuffle) and scores the query set.
// Everything is driven by the episode seed, so reruns are bitwise identical.
inline EpisodeMetrics run_episode(const std::vector<LabeledItem>& items, const Episode& ep,
                                  HeadKind kind, const Hyperparams& hp) {
  require(!items.empty(), errc::empty_input, "run_episode: no items");
  require(!ep.query.empty(), errc::empty_input, "run_episode: empty query set");
  const Eigen::Index d = items.front().feats.dim;
  for (const auto& it : items) {
    require(it.feats.frames_per_snippet == 1, errc::invalid_argument,
            "run_episode: items must be temporal-averaged");
    require(it.feats.dim == d, errc::dimension_mismatch,
            "run_episode: item dim " + std::to_string(it.feats.dim) + " vs " + std::to_string(d));
  }
  for (const std::size_t idx : ep.support)
    require(idx < items.size(), errc::invalid_argument, "run_episode: support index out of range");
  for (const std::size_t idx : ep.query)
    require(idx < items.size(), errc::invalid_argument, "run_episode: query index out of range");

  Rng rng(ep.seed);
  if (kind == HeadKind::linear) {
    std::vector<Eigen::VectorXd> inputs;
    inputs.reserve(items.size());
    for (const auto& it : items) inputs.push_back(detail::pooled_input(it.feats));
    auto head = nn::LinearHead::random(2, d, rng, hp.init_scale);
    return detail::train_and_score(std::move(head), inputs, items, ep, hp, rng);
  }
  std::vector<Eigen::MatrixXd> inputs;
  inputs.reserve(items.size());
  for (const auto& it : items) inputs.push_back(detail::sequence_input(it.feats));
  nn::TcnConfig tc;
  tc.input_dim = d;
  tc.channels = hp.tcn_channels;
  tc.num_layers = hp.tcn_layers;
  tc.num_classes = 2;
  auto head = nn::TcnHead::random(tc, rng, hp.init_scale);
  return detail::train_and_score(std::move(head), inputs, items, ep, hp, rng);
}

struct AggregateStats {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
};

// Arithmetic means and population standard deviations over episodes.
inline AggregateStats aggregate(const std::vector<EpisodeMetrics>& xs) {
  require(!xs.empty(), errc::empty_input, "aggregate: no episodes");
  const double n = static_cast<double>(xs.size());
  AggregateStats s;
  for (const auto& x : xs) {
    s.mean_accuracy += x.accuracy;
    s.mean_f1 += x.f1;
  }
  s.mean_accuracy /= n;
  s.mean_f1 /= n;
  double va = 0.0, vf = 0.0;
  for (const auto& x : xs) {
    va += (x.accuracy - s.mean_accuracy) * (x.accuracy - s.mean_accuracy);
    vf += (x.f1 - s.mean_f1) * (x.f1 - s.mean_f1);
  }
  s.std_accuracy = std::sqrt(va / n);
  s.std_f1 = std::sqrt(vf / n);
  return s;
}

struct EvalConfig {
  HeadKind head = HeadKind::linear;
  int shots = 5;
  int episodes = 100;
  std::uint64_t seed = 0;
  Hyperparams hp{};
  int threads = 1;  // 0 picks hardware concurrency
  bool allow_extrapolation = false;
};

struct EvalReport {
  EvalConfig config;
  std::vector<EpisodeMetrics> per_episode;
  AggregateStats stats;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json cfg;
    cfg["head"] = head_name(config.head);
    if (config.head == HeadKind::tcn) cfg["arch"] = "tcn-v1";
    cfg["shots"] = config.shots;
    cfg["episodes"] = config.episodes;
    cfg["seed"] = config.seed;
    cfg["epochs"] = config.hp.epochs;
    cfg["base_lr"] = config.hp.base_lr;
    cfg["beta1"] = config.hp.adamw.beta1;
    cfg["beta2"] = config.hp.adamw.beta2;
    cfg["eps"] = config.hp.adamw.eps;
    cfg["weight_decay"] = config.hp.adamw.weight_decay;
    cfg["decay_bias"] = config.hp.adamw.decay_bias;
    cfg["init_scale"] = config.hp.init_scale;
    if (config.head == HeadKind::tcn) {
      cfg["tcn_channels"] = config.hp.tcn_channels;
      cfg["tcn_layers"] = config.hp.tcn_layers;
    }
    cfg["f1_variant"] = "macro";

    nlohmann::ordered_json j;
    j["config"] = std::move(cfg);
    j["per_episode"] = nlohmann::ordered_json::array();
    for (const auto& m : per_episode)
      j["per_episode"].push_back({{"accuracy", m.accuracy}, {"f1", m.f1}});
    j["mean_accuracy"] = stats.mean_accuracy;
    j["std_accuracy"] = stats.std_accuracy;
    j["mean_f1"] = stats.mean_f1;
    j["std_f1"] = stats.std_f1;
    return j;
  }
};

// Full protocol: sample episodes, train/score each one, merge in episode
// order. Episodes are independent, so any thread count yields the same bytes.
inline EvalReport run_eval(const features::FeatureSet& set, const EvalConfig& cfg) {
  const auto items = make_items(set, cfg.allow_extrapolation);
  const auto episodes = sample_episodes(items, cfg.shots, cfg.episodes, cfg.seed);

  EvalReport report;
  report.config = cfg;
  report.per_episode.resize(episodes.size());

  unsigned threads = cfg.threads >= 1 ? static_cast<unsigned>(cfg.threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(episodes.size()));
  if (threads <= 1) {
    for (std::size_t e = 0; e < episodes.size(); ++e)
      report.per_episode[e] = run_episode(items, episodes[e], cfg.head, cfg.hp);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t e = next.fetch_add(1);
          if (e >= episodes.size()) return;
          try {
            report.per_episode[e] = run_episode(items, episodes[e], cfg.head, cfg.hp);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  report.stats = aggregate(report.per_episode);
  return report;
}

// ---------------------------------------------------------------------------
// Gain analysis: combined-pretraining report set vs each single-dataset
// baseline, averaged across all (head, shots) cells.
// ---------------------------------------------------------------------------

using CellKey = std::pair<std::string, int>;  // (head, shots)
using ReportSet = std::map<CellKey, AggregateStats>;

struct GainRow {
  std::string comparison;
  double accuracy_gain = 0.0;
  double f1_gain = 0.0;
};

inline GainRow gain_against(const ReportSet& combined, const std::string& combined_name,
                            const ReportSet& baseline, const std::string& baseline_name) {
  require(!combined.empty(), errc::empty_input, "gain_against: no cells");
  require(combined.size() == baseline.size(), errc::cell_mismatch,
          "gain_against: " + combined_name + " has " + std::to_string(combined.size()) +
              " cells, " + baseline_name + " has " + std::to_string(baseline.size()));
  GainRow row;
  row.comparison = combined_name + " vs " + baseline_name;
  for (const auto& [key, stats] : combined) {
    const auto it = baseline.find(key);
    require(it != baseline.end(), errc::cell_mismatch,
            "gain_against: cell (" + key.first + ", " + std::to_string(key.second) +
                "-shot) missing from " + baseline_name);
    row.accuracy_gain += stats.mean_accuracy - it->second.mean_accuracy;
    row.f1_gain += stats.mean_f1 - it->second.mean_f1;
  }
  const double cells = static_cast<double>(combined.size());
  row.accuracy_gain /= cells;
  row.f1_gain /= cells;
  return row;
}

inline std::vector<GainRow> compute_gains(
    const ReportSet& combined, const std::string& combined_name,
    const std::vector<std::pair<std::string, ReportSet>>& baselines) {
  std::vector<GainRow> rows;
  rows.reserve(baselines.size());
  for (const auto& [name, reports] : baselines)
    rows.push_back(gain_against(combined, combined_name, reports, name));
  return rows;
}

inline std::string gains_csv(const std::vector<GainRow>& rows) {
  std::string out = "comparison,avg_accuracy_gain,avg_f1_gain\n";
  char buf[64];
  for (const auto& row : rows) {
    out += row.comparison;
    std::snprintf(buf, sizeof(buf), ",%+.2f,%+.2f\n", row.accuracy_gain, row.f1_gain);
    out += buf;
  }
  return out;
}

}  // namespace fsgap::fewshot
