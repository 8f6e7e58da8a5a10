#pragma once

// Reverse-mode gradients through the clean pass, the noisy pass and the
// decoder; adaptive-moment parameter updates; mixed labeled/unlabeled batch
// construction; the epoch loop; and finite-difference gradient verification.
//
// Batch statistics are differentiated through, not treated as constants:
// the clean-pass mean/stddev enter the objective both as normalizers and as
// the standardization of the reconstructions, so gradients must flow through
// them for the finite-difference oracle to agree.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lid/ladder.hpp"
#include "lid/objective.hpp"

namespace lid {

// Rows [0, n_labeled) of x are labeled; the rest are unlabeled.
struct Batch {
  Matrix x;
  std::vector<size_t> labels;
  size_t n_labeled = 0;
};

namespace detail {

struct TrainingGraph {
  graph::Params params;
  graph::Encoder clean, noisy;
  graph::Decoder dec;
  ad::Ref total;
  CostBreakdown costs;
};

inline TrainingGraph build_training_graph(ad::Tape& t, const LadderParams& params,
                                          const LadderConfig& cfg, const ObjectiveConfig& obj,
                                          const Batch& batch, const NoisePack& noise,
                                          bool params_as_leaves) {
  if (batch.x.rows() == 0) throw std::invalid_argument("backward: empty batch");
  if (batch.n_labeled > batch.x.rows() || batch.labels.size() != batch.n_labeled)
    throw std::invalid_argument("backward: labeled segment inconsistent");
  if (batch.x.cols() != cfg.layer_sizes[0])
    throw std::invalid_argument("backward: input dim " + std::to_string(batch.x.cols()) +
                                " != config dim " + std::to_string(cfg.layer_sizes[0]));

  TrainingGraph g;
  g.params = graph::register_params(t, params, params_as_leaves);
  ad::Ref x = t.constant(batch.x);
  std::vector<ad::Ref> nrefs = graph::noise_refs(t, noise);

  g.clean = graph::build_encoder(t, g.params, cfg, x, nullptr, nullptr);
  g.noisy = graph::build_encoder(t, g.params, cfg, x, &nrefs, nullptr);

  const size_t rows = batch.x.rows();
  const size_t n_unlab = rows - batch.n_labeled;
  const size_t L = cfg.depth();

  std::vector<std::pair<ad::Ref, double>> terms;  // (node, weight) entering the total
  ad::Ref c1_node, c2_node, cent_node;
  std::vector<ad::Ref> cd_nodes(L + 1);

  if (batch.n_labeled > 0) {
    ad::Ref y_lab = t.row_slice(g.noisy.y, 0, batch.n_labeled);
    c1_node = graph::supervised_cost_node(t, y_lab, batch.labels);
    terms.push_back({c1_node, 1.0});
  }
  if (n_unlab > 0) {
    const graph::Encoder& src = obj.c2_on_clean ? g.clean : g.noisy;
    ad::Ref y_unlab = t.row_slice(src.y, batch.n_labeled, rows);
    c2_node = graph::balance_cost_node(t, y_unlab, cfg.layer_sizes[L] - 1, obj.p_oos);
    if (obj.alpha != 0) terms.push_back({c2_node, obj.alpha});
    if (obj.entropy_weight != 0) {
      const graph::Encoder& esrc = obj.entropy_on_clean ? g.clean : g.noisy;
      cent_node = graph::entropy_cost_node(t, t.row_slice(esrc.y, batch.n_labeled, rows));
      terms.push_back({cent_node, obj.entropy_weight});
    }
  }
  if (cfg.any_denoising()) {
    g.dec = graph::build_decoder(t, g.params, cfg, g.noisy, g.clean);
    for (size_t l = 0; l <= L; ++l) {
      if (cfg.lambda[l] == 0) continue;
      cd_nodes[l] = graph::denoising_layer_node(t, g.clean.z[l], g.dec.zhat_bn[l], cfg.lambda[l]);
      terms.push_back({cd_nodes[l], 1.0});
    }
  }

  ad::Ref total;
  for (auto& [node, weight] : terms) {
    ad::Ref term = weight == 1.0 ? node : t.scale(node, weight);
    total = total.valid() ? t.add(total, term) : term;
  }
  if (!total.valid()) total = t.constant(Matrix(1, 1, 0.0));
  g.total = total;

  g.costs.c1 = c1_node.valid() ? t.value(c1_node)(0, 0) : 0.0;
  g.costs.c2 = c2_node.valid() ? t.value(c2_node)(0, 0) : 0.0;
  g.costs.alpha = obj.alpha;
  g.costs.entropy_weight = obj.entropy_weight;
  if (cent_node.valid()) g.costs.c_ent = t.value(cent_node)(0, 0);
  g.costs.cd_per_layer.assign(L + 1, 0.0);
  for (size_t l = 0; l <= L; ++l)
    if (cd_nodes[l].valid()) g.costs.cd_per_layer[l] = t.value(cd_nodes[l])(0, 0);
  g.costs.total = t.value(g.total)(0, 0);
  return g;
}

}  // namespace detail

inline CostBreakdown evaluate_cost(const LadderParams& params, const LadderConfig& cfg,
                                   const ObjectiveConfig& obj, const Batch& batch,
                                   const NoisePack& noise) {
  ad::Tape t;
  return detail::build_training_graph(t, params, cfg, obj, batch, noise, false).costs;
}

struct BackwardResult {
  LadderParams grads;
  CostBreakdown costs;
  std::vector<Matrix> clean_mu, clean_var;  // batch stats for the running averages
};

// Gradients of the total cost with respect to every parameter, plus the cost
// breakdown. Noise is passed explicitly so the objective is deterministic
// (grad_check replays the same pack while differencing).
inline BackwardResult backward(const LadderParams& params, const LadderConfig& cfg,
                               const ObjectiveConfig& obj, const Batch& batch,
                               const NoisePack& noise) {
  ad::Tape t;
  detail::TrainingGraph g = detail::build_training_graph(t, params, cfg, obj, batch, noise, true);
  if (!std::isfinite(g.costs.total)) throw NumericError("backward: non-finite total cost");
  t.backward(g.total);

  BackwardResult r;
  r.costs = g.costs;
  r.grads = zeros_like(params);
  auto take = [&](std::vector<Matrix>& dst, const std::vector<ad::Ref>& refs,
                  const char* group) {
    for (size_t i = 0; i < refs.size(); ++i) {
      dst[i] = t.grad(refs[i]);
      if (!dst[i].all_finite())
        throw NumericError(std::string("backward: non-finite gradient in ") + group +
                           std::to_string(i + 1));
    }
  };
  take(r.grads.W, g.params.W, "W");
  take(r.grads.V, g.params.V, "V");
  take(r.grads.gamma, g.params.gamma, "gamma");
  take(r.grads.beta, g.params.beta, "beta");
  take(r.grads.comb, g.params.comb, "comb layer ");
  for (size_t l = 0; l <= cfg.depth(); ++l) {
    r.clean_mu.push_back(t.value(g.clean.mu[l]));
    r.clean_var.push_back(t.value(g.clean.var[l]));
  }
  return r;
}

// ---- optimizer ----

struct OptimizerState {
  double learning_rate = 0.002;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  long step = 0;
  LadderParams m, v;  // first/second moment accumulators, shapes mirror params
};

inline OptimizerState init_optimizer(const LadderParams& params, double learning_rate = 0.002,
                                     double beta1 = 0.9, double beta2 = 0.999,
                                     double epsilon = 1e-8) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

inline void adam_step(LadderParams& params, const LadderParams& grads, OptimizerState& opt) {
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  std::vector<Matrix*> ps, gs, ms, vs;
  for_each_param(params, [&](const std::string&, Matrix& m) { ps.push_back(&m); });
  for_each_param(const_cast<LadderParams&>(grads),
                 [&](const std::string&, Matrix& m) { gs.push_back(&m); });
  for_each_param(opt.m, [&](const std::string&, Matrix& m) { ms.push_back(&m); });
  for_each_param(opt.v, [&](const std::string&, Matrix& m) { vs.push_back(&m); });
  for (size_t k = 0; k < ps.size(); ++k) {
    if (!ps[k]->same_shape(*gs[k]))
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (size_t i = 0; i < ps[k]->size(); ++i) {
      double g = gs[k]->data()[i];
      double& m = ms[k]->data()[i];
      double& v = vs[k]->data()[i];
      m = opt.beta1 * m + (1 - opt.beta1) * g;
      v = opt.beta2 * v + (1 - opt.beta2) * g * g;
      ps[k]->data()[i] -= opt.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + opt.epsilon);
    }
  }
}

// ---- batches ----

enum class BatchPolicy { kProportional, kFixedCount };

struct TrainSchedule {
  size_t epochs = 1000;
  size_t batch_size = 1024;  // >= 2, batch norm needs two rows in train mode
  uint64_t shuffle_seed = 0;
  BatchPolicy policy = BatchPolicy::kProportional;
  size_t labeled_per_batch = 0;    // fixed-count policy; 0 means half the batch
  size_t early_stop_patience = 0;  // 0 disables early stopping
  double bn_momentum = 0.99;
};

struct TrainData {
  Matrix labeled_x;
  std::vector<size_t> labels;
  Matrix unlabeled_x;
};

// Labeled and unlabeled pools are shuffled independently per epoch; each
// batch carries a labeled segment followed by an unlabeled segment. Every
// example appears at most once per epoch; a final batch of fewer than two
// rows is dropped.
inline std::vector<Batch> make_batches(const TrainData& data, const TrainSchedule& sched,
                                       size_t epoch) {
  const size_t n_lab = data.labeled_x.rows();
  const size_t n_unlab = data.unlabeled_x.rows();
  const size_t dim = std::max(data.labeled_x.cols(), data.unlabeled_x.cols());
  std::vector<Batch> batches;
  if (n_lab + n_unlab == 0) return batches;

  std::vector<size_t> lab_idx(n_lab), unlab_idx(n_unlab);
  for (size_t i = 0; i < n_lab; ++i) lab_idx[i] = i;
  for (size_t i = 0; i < n_unlab; ++i) unlab_idx[i] = i;
  Rng epoch_rng(Rng::mix(sched.shuffle_seed, epoch));
  Rng lab_rng = epoch_rng.derive(1), unlab_rng = epoch_rng.derive(2);
  lab_rng.shuffle(lab_idx);
  unlab_rng.shuffle(unlab_idx);

  // Per-batch segment bounds into the two shuffled pools.
  std::vector<std::pair<size_t, size_t>> lab_seg, unlab_seg;
  if (sched.policy == BatchPolicy::kProportional) {
    size_t nb = (n_lab + n_unlab + sched.batch_size - 1) / sched.batch_size;
    for (size_t b = 0; b < nb; ++b) {
      lab_seg.push_back({b * n_lab / nb, (b + 1) * n_lab / nb});
      unlab_seg.push_back({b * n_unlab / nb, (b + 1) * n_unlab / nb});
    }
  } else {
    size_t per_lab = sched.labeled_per_batch ? sched.labeled_per_batch : sched.batch_size / 2;
    per_lab = std::min(per_lab, sched.batch_size);
    size_t per_unlab = sched.batch_size - per_lab;
    size_t pos_lab = 0, pos_unlab = 0;
    while (pos_lab < n_lab || pos_unlab < n_unlab) {
      size_t take_lab = per_lab ? std::min(per_lab, n_lab - pos_lab) : 0;
      size_t take_unlab = per_unlab ? std::min(per_unlab, n_unlab - pos_unlab) : 0;
      if (take_lab + take_unlab == 0) break;
      lab_seg.push_back({pos_lab, pos_lab + take_lab});
      unlab_seg.push_back({pos_unlab, pos_unlab + take_unlab});
      pos_lab += take_lab;
      pos_unlab += take_unlab;
    }
  }

  for (size_t b = 0; b < lab_seg.size(); ++b) {
    size_t bl = lab_seg[b].second - lab_seg[b].first;
    size_t bu = unlab_seg[b].second - unlab_seg[b].first;
    if (bl + bu < 2) continue;
    Batch batch;
    batch.x = Matrix(bl + bu, dim);
    batch.n_labeled = bl;
    for (size_t i = 0; i < bl; ++i) {
      size_t src = lab_idx[lab_seg[b].first + i];
      batch.labels.push_back(data.labels[src]);
      for (size_t j = 0; j < dim; ++j) batch.x(i, j) = data.labeled_x(src, j);
    }
    for (size_t i = 0; i < bu; ++i) {
      size_t src = unlab_idx[unlab_seg[b].first + i];
      for (size_t j = 0; j < dim; ++j) batch.x(bl + i, j) = data.unlabeled_x(src, j);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ---- epoch loop ----

struct EpochRecord {
  size_t epoch = 0;
  double c1 = 0, c2 = 0, cd_total = 0, total = 0;
  double eval_cost = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  LadderParams params;
  BatchNormState bn;
  std::vector<EpochRecord> history;
};

using EvalHook = std::function<double(const LadderParams&, const BatchNormState&, size_t)>;

inline TrainResult train_loop(const TrainData& data, const LadderConfig& cfg,
                              TrainSchedule sched, const ObjectiveConfig& obj, uint64_t seed,
                              double learning_rate = 0.002, EvalHook eval_hook = nullptr) {
  cfg.validate();
  if (sched.batch_size < 2) throw ConfigError("batch_size: must be >= 2");
  if (sched.shuffle_seed == 0) sched.shuffle_seed = Rng::mix(seed, 3);

  TrainData pool = data;
  // A supervised-only objective ignores the unlabeled pool entirely.
  bool uses_unlabeled = obj.alpha != 0 || cfg.any_denoising() || obj.entropy_weight != 0;
  if (!uses_unlabeled) pool.unlabeled_x = Matrix(0, data.labeled_x.cols());

  Rng init_rng = Rng(seed).derive(1);
  Rng noise_rng = Rng(seed).derive(2);
  TrainResult out;
  out.params = init_params(cfg, init_rng);
  out.bn = init_batchnorm(cfg, sched.bn_momentum);
  OptimizerState opt = init_optimizer(out.params, learning_rate);

  double best_eval = std::numeric_limits<double>::infinity();
  size_t since_best = 0;
  for (size_t epoch = 0; epoch < sched.epochs; ++epoch) {
    auto batches = make_batches(pool, sched, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    for (size_t b = 0; b < batches.size(); ++b) {
      NoisePack noise = sample_noise(cfg, batches[b].x.rows(), noise_rng);
      BackwardResult br = backward(out.params, cfg, obj, batches[b], noise);
      if (!std::isfinite(br.costs.total))
        throw NumericError("train_loop: non-finite cost at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(b));
      adam_step(out.params, br.grads, opt);
      update_running_stats(out.bn, br.clean_mu, br.clean_var);
      rec.c1 += br.costs.c1;
      rec.c2 += br.costs.c2;
      rec.cd_total += br.costs.cd_total();
      rec.total += br.costs.total;
    }
    if (!batches.empty()) {
      rec.c1 /= batches.size();
      rec.c2 /= batches.size();
      rec.cd_total /= batches.size();
      rec.total /= batches.size();
    }
    if (eval_hook) rec.eval_cost = eval_hook(out.params, out.bn, epoch);
    out.history.push_back(rec);

    if (sched.early_stop_patience > 0 && eval_hook) {
      if (rec.eval_cost < best_eval) {
        best_eval = rec.eval_cost;
        since_best = 0;
      } else if (++since_best >= sched.early_stop_patience) {
        break;
      }
    }
  }
  return out;
}

// ---- gradient verification ----

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0;
};

struct GradCheckReport {
  bool pass = false;
  double tolerance = 0;
  std::string worst_group;
  double worst_rel_error = 0;
  std::vector<GradCheckGroup> groups;
};

// Central finite differences of the total cost against the analytic
// gradients, parameter by parameter. Noise and parameters come from `seed`,
// so the objective is a fixed deterministic function while differencing.
inline GradCheckReport grad_check(const LadderConfig& cfg, const ObjectiveConfig& obj,
                                  const Batch& batch, double tolerance, uint64_t seed,
                                  double h = 1e-5) {
  cfg.validate();
  Rng param_rng = Rng(seed).derive(1);
  Rng noise_rng = Rng(seed).derive(2);
  LadderParams params = init_params(cfg, param_rng);
  NoisePack noise = sample_noise(cfg, batch.x.rows(), noise_rng);

  LadderParams analytic = backward(params, cfg, obj, batch, noise).grads;

  GradCheckReport report;
  report.tolerance = tolerance;
  std::vector<std::pair<std::string, Matrix*>> groups, agroups;
  for_each_param(params, [&](const std::string& n, Matrix& m) { groups.push_back({n, &m}); });
  for_each_param(analytic, [&](const std::string& n, Matrix& m) { agroups.push_back({n, &m}); });

  for (size_t k = 0; k < groups.size(); ++k) {
    GradCheckGroup grp;
    grp.name = groups[k].first;
    Matrix& theta = *groups[k].second;
    for (size_t i = 0; i < theta.size(); ++i) {
      double saved = theta.data()[i];
      theta.data()[i] = saved + h;
      double fp = evaluate_cost(params, cfg, obj, batch, noise).total;
      theta.data()[i] = saved - h;
      double fm = evaluate_cost(params, cfg, obj, batch, noise).total;
      theta.data()[i] = saved;
      double numeric = (fp - fm) / (2 * h);
      double a = agroups[k].second->data()[i];
      double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      grp.max_rel_error = std::max(grp.max_rel_error, rel);
    }
    if (grp.max_rel_error > report.worst_rel_error) {
      report.worst_rel_error = grp.max_rel_error;
      report.worst_group = grp.name;
    }
    report.groups.push_back(grp);
  }
  report.pass = report.worst_rel_error < tolerance;
  return report;
}

// Seeded fixture for gradient checks: standard-normal inputs, labels cycling
// through the in-set classes.
inline Batch make_gradcheck_batch(const LadderConfig& cfg, size_t n_labeled, size_t n_unlabeled,
                                  uint64_t seed) {
  Rng rng = Rng(seed).derive(7);
  Batch b;
  b.x = sample_gaussian(rng, n_labeled + n_unlabeled, cfg.layer_sizes[0], 1.0);
  b.n_labeled = n_labeled;
  size_t k = cfg.layer_sizes[cfg.depth()] - 1;
  for (size_t i = 0; i < n_labeled; ++i) b.labels.push_back(i % k);
  return b;
}

}  // namespace lid
