#pragma once

// Challenge scoring: the weighted mean of per-class error rates with a
// dedicated weight on the out-of-set class, and the post-processing step
// that pushes the predicted oos ratio toward the assumed prior.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lid/error.hpp"
#include "lid/matrix.hpp"

namespace lid {

struct ChallengeMetricSpec {
  size_t k = 50;        // in-set classes; class id k is out-of-set
  double p_oos = 0.23;  // assumed out-of-set fraction
  double scale = 100.0; // report multiplier (challenge tables use x100)
};

struct ChallengeScore {
  double cost = 0;    // unscaled value of the metric
  double scaled = 0;  // cost * spec.scale, the reporting convention
  std::vector<double> per_class_error;  // size k+1, oos last
  std::vector<size_t> per_class_trials;
  std::vector<size_t> zero_trial_classes;  // contributed 0 with a warning
};

// Cost = ((1-p_oos)/k) sum_i p_error(i) + p_oos * p_error(oos), with
// p_error(i) = errors-class-i / trials-class-i. Classes without trials
// contribute zero and are reported in zero_trial_classes.
inline ChallengeScore score_challenge(const std::vector<size_t>& predictions,
                                      const std::vector<size_t>& truth,
                                      const ChallengeMetricSpec& spec) {
  if (predictions.size() != truth.size())
    throw std::invalid_argument("challenge_cost: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(truth.size()) + " truths");
  ChallengeScore s;
  s.per_class_error.assign(spec.k + 1, 0.0);
  s.per_class_trials.assign(spec.k + 1, 0);
  std::vector<size_t> errors(spec.k + 1, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] > spec.k)
      throw std::invalid_argument("challenge_cost: truth label " + std::to_string(truth[i]) +
                                  " out of range");
    s.per_class_trials[truth[i]] += 1;
    if (predictions[i] != truth[i]) errors[truth[i]] += 1;
  }
  for (size_t c = 0; c <= spec.k; ++c) {
    if (s.per_class_trials[c] == 0) {
      s.zero_trial_classes.push_back(c);
      continue;
    }
    s.per_class_error[c] =
        static_cast<double>(errors[c]) / static_cast<double>(s.per_class_trials[c]);
  }
  double in_set = 0;
  for (size_t c = 0; c < spec.k; ++c) in_set += s.per_class_error[c];
  s.cost = (1.0 - spec.p_oos) / static_cast<double>(spec.k) * in_set +
           spec.p_oos * s.per_class_error[spec.k];
  s.scaled = s.cost * spec.scale;
  return s;
}

inline double challenge_cost(const std::vector<size_t>& predictions,
                             const std::vector<size_t>& truth,
                             const ChallengeMetricSpec& spec) {
  return score_challenge(predictions, truth, spec).cost;
}

inline std::vector<size_t> argmax_rows(const Matrix& posteriors) {
  std::vector<size_t> out(posteriors.rows());
  for (size_t i = 0; i < posteriors.rows(); ++i) {
    size_t best = 0;
    for (size_t j = 1; j < posteriors.cols(); ++j)
      if (posteriors(i, j) > posteriors(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

inline size_t count_equal(const std::vector<size_t>& labels, size_t cls) {
  return static_cast<size_t>(std::count(labels.begin(), labels.end(), cls));
}

namespace detail {

// Argmax labels with the oos posterior multiplied by `bias`.
inline std::vector<size_t> biased_argmax(const Matrix& posteriors, double bias) {
  const size_t oos = posteriors.cols() - 1;
  std::vector<size_t> out(posteriors.rows());
  for (size_t i = 0; i < posteriors.rows(); ++i) {
    size_t best = 0;
    double best_p = posteriors(i, 0);
    for (size_t j = 1; j <= oos; ++j) {
      double p = posteriors(i, j) * (j == oos ? bias : 1.0);
      if (p > best_p) {
        best_p = p;
        best = j;
      }
    }
    out[i] = best;
  }
  return out;
}

}  // namespace detail

// Adjusts argmax decisions so the number of oos labels lands at
// round(p_oos * N). Too few: rows whose strongest in-set posterior is
// smallest are relabeled oos (ties by row index). Too many: the oos
// posterior is multiplied by the largest reduction bias in (0,1] that brings
// the count to or below the target, found by binary search.
inline std::vector<size_t> postprocess_oos(const Matrix& posteriors, double p_oos) {
  const size_t n = posteriors.rows();
  const size_t oos = posteriors.cols() - 1;
  const size_t target = static_cast<size_t>(std::llround(p_oos * static_cast<double>(n)));
  std::vector<size_t> labels = argmax_rows(posteriors);
  size_t have = count_equal(labels, oos);
  if (have == target) return labels;

  if (have < target) {
    std::vector<std::pair<double, size_t>> candidates;  // (max in-set posterior, row)
    for (size_t i = 0; i < n; ++i) {
      if (labels[i] == oos) continue;
      double best_in_set = 0;
      for (size_t j = 0; j < oos; ++j) best_in_set = std::max(best_in_set, posteriors(i, j));
      candidates.push_back({best_in_set, i});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t c = 0; c < candidates.size() && have < target; ++c, ++have)
      labels[candidates[c].second] = oos;
    return labels;
  }

  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-6) {
    double mid = 0.5 * (lo + hi);
    if (count_equal(detail::biased_argmax(posteriors, mid), oos) <= target)
      lo = mid;
    else
      hi = mid;
  }
  return detail::biased_argmax(posteriors, lo);
}

}  // namespace lid
