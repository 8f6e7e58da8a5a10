#pragma once

// Hyper-parameter tuning protocol on labeled data only: hold n_oos of the
// languages out as synthetic out-of-set classes, train on a subset of the
// remaining languages' examples, and split everything else into development
// (used unlabeled during training) and test sets with every language in the
// same proportion. Repeats rotate which languages are out-of-set.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "lid/data.hpp"
#include "lid/metrics.hpp"
#include "lid/training.hpp"

namespace lid {

struct SplitSpec {
  size_t n_inset = 38;
  size_t n_oos = 12;
  size_t repeats = 5;
  uint64_t seed = 7;
  double train_fraction = 2.0 / 3.0;  // share of each in-set language used for training
};

struct CvSplit {
  IvectorDataset train;                 // labeled, k = n_inset remapped classes
  std::vector<UnlabeledExample> dev;    // unlabeled pool during CV training
  std::vector<size_t> dev_truth;        // remapped ids; oos rows carry n_inset
  std::vector<UnlabeledExample> test;
  std::vector<size_t> test_truth;
  std::vector<size_t> oos_languages;    // original class ids held out

  double dev_oos_fraction() const {
    if (dev_truth.empty()) return 0.0;
    size_t oos = 0;
    for (size_t t : dev_truth)
      if (t == train.k()) ++oos;
    return static_cast<double>(oos) / static_cast<double>(dev_truth.size());
  }
};

inline CvSplit cv_split(const IvectorDataset& ds, const SplitSpec& spec, size_t repeat_index) {
  if (!ds.unlabeled.empty())
    throw std::invalid_argument("cv_split: protocol consumes only labeled data");
  const size_t total = ds.k();
  if (spec.n_inset + spec.n_oos != total)
    throw ConfigError("cv_split: n_inset + n_oos = " +
                      std::to_string(spec.n_inset + spec.n_oos) + " != " +
                      std::to_string(total) + " languages");
  if (spec.train_fraction <= 0 || spec.train_fraction >= 1)
    throw ConfigError("cv_split: train_fraction must be in (0,1)");

  std::vector<std::vector<size_t>> by_lang(total);
  for (size_t i = 0; i < ds.labeled.size(); ++i)
    by_lang[ds.labeled[i].class_id].push_back(i);
  for (size_t c = 0; c < total; ++c)
    if (by_lang[c].size() < 4)
      throw DataError("cv_split: language '" + ds.class_names[c] + "' has only " +
                      std::to_string(by_lang[c].size()) + " examples, need at least 4");

  // One fixed language permutation; each repeat takes the next block of
  // n_oos slots (wrapping), so every language gets a turn out-of-set.
  std::vector<size_t> perm(total);
  for (size_t i = 0; i < total; ++i) perm[i] = i;
  Rng perm_rng(Rng::mix(spec.seed, 0xC5));
  perm_rng.shuffle(perm);
  std::vector<bool> is_oos(total, false);
  CvSplit out;
  for (size_t i = 0; i < spec.n_oos; ++i) {
    size_t lang = perm[(repeat_index * spec.n_oos + i) % total];
    is_oos[lang] = true;
    out.oos_languages.push_back(lang);
  }
  std::sort(out.oos_languages.begin(), out.oos_languages.end());

  std::vector<size_t> new_id(total, 0);
  size_t next = 0;
  for (size_t c = 0; c < total; ++c) {
    if (is_oos[c]) continue;
    new_id[c] = next++;
    out.train.class_names.push_back(ds.class_names[c]);
  }
  out.train.dim = ds.dim;
  const size_t oos_label = out.train.k();

  for (size_t c = 0; c < total; ++c) {
    std::vector<size_t> rows = by_lang[c];
    Rng lang_rng(Rng::mix(Rng::mix(spec.seed, repeat_index), c));
    lang_rng.shuffle(rows);
    size_t n_train = 0;
    if (!is_oos[c])
      n_train = static_cast<size_t>(spec.train_fraction * static_cast<double>(rows.size()));
    for (size_t i = 0; i < n_train; ++i) {
      const auto& e = ds.labeled[rows[i]];
      out.train.labeled.push_back({e.id, e.x, new_id[c]});
    }
    // Held-out examples split per language into equal dev/test halves.
    size_t held = rows.size() - n_train;
    size_t n_dev = (held + 1) / 2;
    for (size_t i = n_train; i < rows.size(); ++i) {
      const auto& e = ds.labeled[rows[i]];
      size_t label = is_oos[c] ? oos_label : new_id[c];
      if (i - n_train < n_dev) {
        out.dev.push_back({e.id, e.x});
        out.dev_truth.push_back(label);
      } else {
        out.test.push_back({e.id, e.x});
        out.test_truth.push_back(label);
      }
    }
  }
  return out;
}

struct TuneResult {
  double best_alpha = 0;
  std::vector<double> alphas;
  std::vector<std::vector<double>> scores;  // [repeat][candidate], report scale
  std::vector<double> mean_scores;          // per candidate
};

// Rebuilds the network template for a split: same hidden sizes, input width
// from the data, output width k+1.
inline LadderConfig config_for_dims(LadderConfig cfg, size_t dim, size_t k) {
  cfg.layer_sizes.front() = dim;
  cfg.layer_sizes.back() = k + 1;
  return cfg;
}

// Trains one model per (candidate, repeat) on cv_split outputs and returns
// the candidate with the lowest mean challenge cost (ties -> smaller alpha).
// C2 uses the actual out-of-set fraction of the dev pool; the metric is
// evaluated with k = n_inset.
inline TuneResult tune_alpha(const IvectorDataset& ds, const std::vector<double>& alphas,
                             const SplitSpec& split, const LadderConfig& net_template,
                             const TrainSchedule& sched, const ObjectiveConfig& base_obj,
                             uint64_t seed, double learning_rate = 0.002,
                             double metric_p_oos = 0.23) {
  if (alphas.empty()) throw ConfigError("tune_alpha: need at least one candidate");
  TuneResult result;
  result.alphas = alphas;
  result.scores.assign(split.repeats, std::vector<double>(alphas.size(), 0.0));

  for (size_t r = 0; r < split.repeats; ++r) {
    CvSplit cv = cv_split(ds, split, r);
    LadderConfig cfg = config_for_dims(net_template, ds.dim, cv.train.k());
    TrainData data = to_train_data(cv.train);
    data.unlabeled_x = examples_to_matrix(cv.dev, ds.dim);
    Matrix test_x = examples_to_matrix(cv.test, ds.dim);
    ChallengeMetricSpec metric{.k = cv.train.k(), .p_oos = metric_p_oos};

    for (size_t ci = 0; ci < alphas.size(); ++ci) {
      ObjectiveConfig obj = base_obj;
      obj.alpha = alphas[ci];
      obj.p_oos = cv.dev_oos_fraction();
      uint64_t run_seed = Rng::mix(seed, r * 1000 + ci);
      TrainResult trained = train_loop(data, cfg, sched, obj, run_seed, learning_rate);
      Matrix posteriors = predict(trained.params, cfg, test_x, trained.bn);
      auto score = score_challenge(argmax_rows(posteriors), cv.test_truth, metric);
      result.scores[r][ci] = score.scaled;
    }
  }

  result.mean_scores.assign(alphas.size(), 0.0);
  for (size_t ci = 0; ci < alphas.size(); ++ci) {
    for (size_t r = 0; r < split.repeats; ++r) result.mean_scores[ci] += result.scores[r][ci];
    result.mean_scores[ci] /= static_cast<double>(split.repeats);
  }
  size_t best = 0;
  for (size_t ci = 1; ci < alphas.size(); ++ci) {
    bool better = result.mean_scores[ci] < result.mean_scores[best];
    bool tie_smaller =
        result.mean_scores[ci] == result.mean_scores[best] && alphas[ci] < alphas[best];
    if (better || tie_smaller) best = ci;
  }
  result.best_alpha = alphas[best];
  return result;
}

}  // namespace lid
