#pragma once

// Training costs: per-layer denoising cost C_d, supervised cost C1 on the
// noisy posteriors of labeled rows, label-distribution cost C2 on the batch
// average of unlabeled posteriors, the optional entropy cost, and their
// weighted total. Each cost exists as a tape node builder (for gradients)
// and as a plain evaluation on Matrix values.

#include <optional>
#include <string>
#include <vector>

#include "lid/autodiff.hpp"
#include "lid/error.hpp"
#include "lid/matrix.hpp"

namespace lid {

struct ObjectiveConfig {
  double alpha = 0.15;          // weight of C2
  double p_oos = 0.23;          // assumed out-of-set fraction in unlabeled data
  double entropy_weight = 0.0;  // 0 disables C_ent (paper found no gain)
  bool entropy_on_clean = false;
  bool c2_on_clean = false;     // default: C2 uses the noisy posteriors
};

struct CostBreakdown {
  double c1 = 0;
  double c2 = 0;
  std::vector<double> cd_per_layer;  // lambda-weighted, layers 0..L
  std::optional<double> c_ent;
  double alpha = 0;
  double entropy_weight = 0;
  double total = 0;

  double cd_total() const {
    double s = 0;
    for (double v : cd_per_layer) s += v;
    return s;
  }
};

namespace graph {

// -(1/n) sum_t log p(y = c_t | x_t), log clamped at kLogFloor.
inline ad::Ref supervised_cost_node(ad::Tape& t, ad::Ref y, const std::vector<size_t>& labels) {
  const Matrix& Y = t.value(y);
  if (labels.size() != Y.rows())
    throw std::invalid_argument("supervised_cost: labels do not match rows");
  for (size_t c : labels)
    if (c + 1 >= Y.cols())
      throw std::invalid_argument("supervised_cost: label " + std::to_string(c) +
                                  " out of range for " + std::to_string(Y.cols() - 1) +
                                  " in-set classes");
  ad::Ref picked = t.gather_cols(y, labels);
  return t.scale(t.sum_all(t.logc(picked)), -1.0 / static_cast<double>(labels.size()));
}

// C2 = -p_oos log p_av(oos) - ((1-p_oos)/k) sum_i log p_av(i), with p_av the
// column mean of the posteriors over the batch.
inline ad::Ref balance_cost_node(ad::Tape& t, ad::Ref y, size_t k, double p_oos) {
  const Matrix& Y = t.value(y);
  if (Y.rows() == 0) throw std::invalid_argument("balance_cost: empty input");
  if (Y.cols() != k + 1)
    throw std::invalid_argument("balance_cost: want k+1 = " + std::to_string(k + 1) +
                                " columns, got " + std::to_string(Y.cols()));
  Matrix w(1, k + 1, (1.0 - p_oos) / static_cast<double>(k));
  w(0, k) = p_oos;
  ad::Ref pav = t.col_mean(y);
  return t.scale(t.sum_all(t.mul(t.constant(std::move(w)), t.logc(pav))), -1.0);
}

// Mean Shannon entropy of the posterior rows.
inline ad::Ref entropy_cost_node(ad::Tape& t, ad::Ref y) {
  const Matrix& Y = t.value(y);
  return t.scale(t.sum_all(t.mul(y, t.logc(y))), -1.0 / static_cast<double>(Y.rows()));
}

// C_d^(l) = (lambda_l / w_l) (1/m) sum_t |z_t - zhat_t|^2.
inline ad::Ref denoising_layer_node(ad::Tape& t, ad::Ref z, ad::Ref zhat_bn, double lambda_l) {
  const Matrix& Z = t.value(z);
  check_same_shape(Z, t.value(zhat_bn), "denoising_cost");
  ad::Ref d = t.sub(z, zhat_bn);
  double scale = lambda_l / (static_cast<double>(Z.cols()) * static_cast<double>(Z.rows()));
  return t.scale(t.sum_all(t.mul(d, d)), scale);
}

}  // namespace graph

inline double supervised_cost(const Matrix& y_noisy, const std::vector<size_t>& labels) {
  ad::Tape t;
  return t.value(graph::supervised_cost_node(t, t.constant(y_noisy), labels))(0, 0);
}

inline double balance_cost(const Matrix& y_noisy, size_t k, double p_oos) {
  ad::Tape t;
  return t.value(graph::balance_cost_node(t, t.constant(y_noisy), k, p_oos))(0, 0);
}

inline double entropy_cost(const Matrix& y) {
  ad::Tape t;
  return t.value(graph::entropy_cost_node(t, t.constant(y)))(0, 0);
}

// Per-layer lambda-weighted denoising costs over the whole batch (labeled
// and unlabeled rows alike).
inline std::vector<double> denoising_cost(const std::vector<Matrix>& targets,
                                          const std::vector<Matrix>& reconstructions,
                                          const std::vector<double>& lambda) {
  if (targets.size() != reconstructions.size() || targets.size() != lambda.size())
    throw std::invalid_argument("denoising_cost: layer count mismatch");
  ad::Tape t;
  std::vector<double> out;
  for (size_t l = 0; l < targets.size(); ++l)
    out.push_back(t.value(graph::denoising_layer_node(t, t.constant(targets[l]),
                                                      t.constant(reconstructions[l]),
                                                      lambda[l]))(0, 0));
  return out;
}

// Combined objective. The ladder term carries implicit weight 1; alpha=0
// with all-zero lambda reproduces the plain supervised noisy-training
// baseline.
inline CostBreakdown total_cost(double c1, double c2, std::vector<double> cd_per_layer,
                                double alpha, std::optional<double> c_ent = std::nullopt,
                                double entropy_weight = 0.0) {
  CostBreakdown b;
  b.c1 = c1;
  b.c2 = c2;
  b.cd_per_layer = std::move(cd_per_layer);
  b.alpha = alpha;
  b.c_ent = c_ent;
  b.entropy_weight = entropy_weight;
  b.total = c1 + alpha * c2 + b.cd_total() + (c_ent ? entropy_weight * *c_ent : 0.0);
  return b;
}

}  // namespace lid
