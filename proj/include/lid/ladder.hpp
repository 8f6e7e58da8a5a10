#pragma once

// The ladder network: clean encoder, corrupted encoder, denoising decoder
// with per-unit combinator functions, and batch normalization. Forward and
// decode passes are built on the autodiff tape so training can differentiate
// through the batch statistics; the functions here evaluate those graphs and
// expose plain Matrix results.
//
// Layer l=0 is the input. Pre-activations are batch-normalized; the clean
// normalized values z_l (pre scale/shift) are the denoising targets. Noise is
// added after normalization. Decoder vertical signals are batch-normalized
// with the decoder batch's own statistics and no learned scale/shift, and
// each reconstruction is standardized by the clean encoder's batch statistics
// before entering the denoising cost.

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lid/autodiff.hpp"
#include "lid/error.hpp"
#include "lid/matrix.hpp"

namespace lid {

struct LadderConfig {
  std::vector<size_t> layer_sizes;    // [w0 .. wL]; w0 = input dim, wL = k+1
  double noise_sigma = 0.5;           // stddev of the corruption noise
  std::vector<double> lambda;         // per-layer denoising weights, size L+1
  std::set<size_t> lateral_layers{0}; // layers with a lateral skip connection

  size_t depth() const { return layer_sizes.size() - 1; }  // L

  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("layers: need at least input and output");
    for (size_t w : layer_sizes)
      if (w < 1) throw ConfigError("layers: all sizes must be >= 1");
    if (lambda.size() != layer_sizes.size())
      throw ConfigError("lambda: need " + std::to_string(layer_sizes.size()) +
                        " weights, got " + std::to_string(lambda.size()));
    for (double l : lambda)
      if (l < 0) throw ConfigError("lambda: weights must be non-negative");
    for (size_t l : lateral_layers)
      if (l > depth()) throw ConfigError("lateral_layers: index out of range");
    if (noise_sigma < 0) throw ConfigError("noise_sigma: must be non-negative");
  }

  bool any_denoising() const {
    for (double l : lambda)
      if (l > 0) return true;
    return false;
  }
};

// Combinator coefficient rows within the 10 x w_l per-layer matrix.
// Rows 0..4 hold a1..a5 (the mu function), rows 5..9 hold a6..a10 (v).
inline constexpr size_t kCombRows = 10;

struct LadderParams {
  std::vector<Matrix> W;      // W[i]: (w_i, w_{i+1}), encoder layer i -> i+1
  std::vector<Matrix> V;      // V[i]: (w_{i+1}, w_i), decoder layer i+1 -> i
  std::vector<Matrix> gamma;  // gamma[i]: 1 x w_{i+1}, batch-norm scale
  std::vector<Matrix> beta;   // beta[i]:  1 x w_{i+1}, batch-norm shift
  std::vector<Matrix> comb;   // comb[l]: 10 x w_l, combinator coefficients
};

// Visits every parameter matrix with a stable name; the iteration order is
// the contract for the optimizer state and the model file.
template <class Params, class Fn>
void for_each_param(Params&& p, Fn&& fn) {
  for (size_t i = 0; i < p.W.size(); ++i) fn("W" + std::to_string(i + 1), p.W[i]);
  for (size_t i = 0; i < p.V.size(); ++i) fn("V" + std::to_string(i + 1), p.V[i]);
  for (size_t i = 0; i < p.gamma.size(); ++i) fn("gamma" + std::to_string(i + 1), p.gamma[i]);
  for (size_t i = 0; i < p.beta.size(); ++i) fn("beta" + std::to_string(i + 1), p.beta[i]);
  for (size_t i = 0; i < p.comb.size(); ++i) fn("comb" + std::to_string(i), p.comb[i]);
}

// Identity-on-the-lateral-path initialization: a2 = a7 = a10 = 1, rest 0,
// so zhat == ztilde at start and early reconstructions stay finite.
inline Matrix init_combinator(size_t width) {
  Matrix c(kCombRows, width);
  for (size_t j = 0; j < width; ++j) {
    c(1, j) = 1.0;  // a2
    c(6, j) = 1.0;  // a7
    c(9, j) = 1.0;  // a10
  }
  return c;
}

inline LadderParams init_params(const LadderConfig& cfg, Rng& rng) {
  cfg.validate();
  const size_t L = cfg.depth();
  LadderParams p;
  for (size_t i = 0; i < L; ++i) {
    size_t in = cfg.layer_sizes[i], out = cfg.layer_sizes[i + 1];
    p.W.push_back(sample_gaussian(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in))));
  }
  for (size_t i = 0; i < L; ++i) {
    size_t in = cfg.layer_sizes[i + 1], out = cfg.layer_sizes[i];
    p.V.push_back(sample_gaussian(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in))));
  }
  for (size_t i = 0; i < L; ++i) {
    p.gamma.push_back(Matrix(1, cfg.layer_sizes[i + 1], 1.0));
    p.beta.push_back(Matrix(1, cfg.layer_sizes[i + 1], 0.0));
  }
  for (size_t l = 0; l <= L; ++l) p.comb.push_back(init_combinator(cfg.layer_sizes[l]));
  return p;
}

inline LadderParams zeros_like(const LadderParams& p) {
  LadderParams z = p;
  for_each_param(z, [](const std::string&, Matrix& m) {
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = 0.0;
  });
  return z;
}

struct BatchNormState {
  std::vector<Matrix> running_mean;  // 1 x w_l, layers 0..L
  std::vector<Matrix> running_var;
  double momentum = 0.99;
};

inline BatchNormState init_batchnorm(const LadderConfig& cfg, double momentum = 0.99) {
  BatchNormState bn;
  bn.momentum = momentum;
  for (size_t w : cfg.layer_sizes) {
    bn.running_mean.push_back(Matrix(1, w, 0.0));
    bn.running_var.push_back(Matrix(1, w, 1.0));
  }
  return bn;
}

inline void update_running_stats(BatchNormState& bn, const std::vector<Matrix>& mu,
                                 const std::vector<Matrix>& var) {
  const double m = bn.momentum;
  for (size_t l = 0; l < bn.running_mean.size(); ++l) {
    for (size_t j = 0; j < bn.running_mean[l].cols(); ++j) {
      bn.running_mean[l](0, j) = m * bn.running_mean[l](0, j) + (1 - m) * mu[l](0, j);
      bn.running_var[l](0, j) = m * bn.running_var[l](0, j) + (1 - m) * var[l](0, j);
    }
  }
}

enum class RunMode { kTrain, kEval };

// Per-layer records of one clean pass, one noisy pass and one decoding pass.
struct ForwardTrace {
  std::vector<Matrix> z, h;        // clean normalized pre-activations, activations
  std::vector<Matrix> mu, var;     // clean batch stats of the pre-normalized values
  Matrix y;                        // clean softmax output
  std::vector<Matrix> ztilde, htilde;
  Matrix ytilde;                   // noisy softmax output
  std::vector<Matrix> u, zhat;     // decoder vertical inputs and reconstructions
  std::vector<Matrix> zhat_bn;     // reconstructions standardized by clean stats
};

struct NoisePack {
  std::vector<Matrix> eps;  // one per layer 0..L, shape (batch, w_l)
};

inline NoisePack sample_noise(const LadderConfig& cfg, size_t rows, Rng& rng) {
  NoisePack n;
  for (size_t w : cfg.layer_sizes)
    n.eps.push_back(sample_gaussian(rng, rows, w, cfg.noise_sigma));
  return n;
}

namespace graph {

struct Params {
  std::vector<ad::Ref> W, V, gamma, beta, comb;
};

inline Params register_params(ad::Tape& t, const LadderParams& p, bool as_leaves) {
  Params r;
  for (const auto& m : p.W) r.W.push_back(as_leaves ? t.leaf(m) : t.constant(m));
  for (const auto& m : p.V) r.V.push_back(as_leaves ? t.leaf(m) : t.constant(m));
  for (const auto& m : p.gamma) r.gamma.push_back(as_leaves ? t.leaf(m) : t.constant(m));
  for (const auto& m : p.beta) r.beta.push_back(as_leaves ? t.leaf(m) : t.constant(m));
  for (const auto& m : p.comb) r.comb.push_back(as_leaves ? t.leaf(m) : t.constant(m));
  return r;
}

struct BnNodes {
  ad::Ref normalized, mu, var;
};

// Batch normalization with the batch's own statistics; gradients flow
// through mean and variance.
inline BnNodes bn_own(ad::Tape& t, ad::Ref x) {
  BnNodes b;
  b.mu = t.col_mean(x);
  ad::Ref d = t.sub_row(x, b.mu);
  b.var = t.col_mean(t.mul(d, d));
  b.normalized = t.mul_row(d, t.rsqrt_eps(b.var, kBnEpsilon));
  return b;
}

// Standardize x by externally supplied statistics nodes.
inline ad::Ref bn_with(ad::Tape& t, ad::Ref x, ad::Ref mu, ad::Ref var) {
  return t.mul_row(t.sub_row(x, mu), t.rsqrt_eps(var, kBnEpsilon));
}

struct Encoder {
  std::vector<ad::Ref> z, h, mu, var;  // layers 0..L
  ad::Ref y;
};

// Builds one encoder pass. `noise` empty (or all-absent) means the clean
// pass; `eval_bn` non-null switches to running statistics (evaluation mode).
inline Encoder build_encoder(ad::Tape& t, const Params& p, const LadderConfig& cfg,
                             ad::Ref x, const std::vector<ad::Ref>* noise,
                             const BatchNormState* eval_bn) {
  const size_t L = cfg.depth();
  Encoder e;
  ad::Ref pre = x;
  for (size_t l = 0; l <= L; ++l) {
    if (l > 0) pre = t.matmul(e.h[l - 1], p.W[l - 1]);
    ad::Ref zl, mu, var;
    if (eval_bn) {
      mu = t.constant(eval_bn->running_mean[l]);
      var = t.constant(eval_bn->running_var[l]);
      zl = bn_with(t, pre, mu, var);
    } else {
      BnNodes b = bn_own(t, pre);
      zl = b.normalized;
      mu = b.mu;
      var = b.var;
    }
    if (noise && (*noise)[l].valid()) zl = t.add(zl, (*noise)[l]);
    e.z.push_back(zl);
    e.mu.push_back(mu);
    e.var.push_back(var);
    if (l == 0) {
      e.h.push_back(zl);  // h0 is the (possibly corrupted) normalized input
    } else {
      ad::Ref a = t.mul_row(t.add_row(zl, p.beta[l - 1]), p.gamma[l - 1]);
      e.h.push_back(l < L ? t.relu(a) : t.softmax(a));
    }
  }
  e.y = e.h[L];
  return e;
}

// Per-unit combinator. With a lateral input: mu_i and v_i are sigmoid-affine
// functions of u, and zhat = (ztilde - mu) * v + mu. Without one, the
// combinator reduces to its affine terms: zhat = a4 * u + a5.
inline ad::Ref combinator_node(ad::Tape& t, ad::Ref coeffs, ad::Ref ztilde, ad::Ref u) {
  ad::Ref a4 = t.row(coeffs, 3), a5 = t.row(coeffs, 4);
  ad::Ref affine = t.add_row(t.mul_row(u, a4), a5);
  if (!ztilde.valid()) return affine;
  ad::Ref a1 = t.row(coeffs, 0), a2 = t.row(coeffs, 1), a3 = t.row(coeffs, 2);
  ad::Ref a6 = t.row(coeffs, 5), a7 = t.row(coeffs, 6), a8 = t.row(coeffs, 7);
  ad::Ref a9 = t.row(coeffs, 8), a10 = t.row(coeffs, 9);
  ad::Ref mu = t.add(t.mul_row(t.sigmoid(t.add_row(t.mul_row(u, a2), a3)), a1), affine);
  ad::Ref v =
      t.add(t.mul_row(t.sigmoid(t.add_row(t.mul_row(u, a7), a8)), a6),
            t.add_row(t.mul_row(u, a9), a10));
  return t.add(t.mul(t.sub(ztilde, mu), v), mu);
}

struct Decoder {
  std::vector<ad::Ref> u, zhat, zhat_bn;  // layers 0..L
};

inline Decoder build_decoder(ad::Tape& t, const Params& p, const LadderConfig& cfg,
                             const Encoder& noisy, const Encoder& clean) {
  const size_t L = cfg.depth();
  Decoder d;
  d.u.resize(L + 1);
  d.zhat.resize(L + 1);
  d.zhat_bn.resize(L + 1);
  for (size_t i = 0; i <= L; ++i) {
    size_t l = L - i;
    d.u[l] = (l == L) ? noisy.h[L] : bn_own(t, t.matmul(d.zhat[l + 1], p.V[l])).normalized;
    ad::Ref lateral = cfg.lateral_layers.count(l) ? noisy.z[l] : ad::Ref{};
    d.zhat[l] = combinator_node(t, p.comb[l], lateral, d.u[l]);
    d.zhat_bn[l] = bn_with(t, d.zhat[l], clean.mu[l], clean.var[l]);
  }
  return d;
}

inline std::vector<ad::Ref> noise_refs(ad::Tape& t, const NoisePack& n) {
  std::vector<ad::Ref> refs;
  for (const auto& m : n.eps) refs.push_back(t.constant(m));
  return refs;
}

}  // namespace graph

// Clean pass. Train mode normalizes with batch statistics and updates the
// running stats; eval mode normalizes with the running stats.
inline ForwardTrace clean_forward(const LadderParams& params, const LadderConfig& cfg,
                                  const Matrix& X, BatchNormState& bn, RunMode mode) {
  if (X.cols() != cfg.layer_sizes[0])
    throw std::invalid_argument("clean_forward: input has " + std::to_string(X.cols()) +
                                " columns, config expects " + std::to_string(cfg.layer_sizes[0]));
  ad::Tape t;
  graph::Params p = graph::register_params(t, params, false);
  ad::Ref x = t.constant(X);
  graph::Encoder e = graph::build_encoder(t, p, cfg, x, nullptr,
                                          mode == RunMode::kEval ? &bn : nullptr);
  ForwardTrace tr;
  for (size_t l = 0; l <= cfg.depth(); ++l) {
    tr.z.push_back(t.value(e.z[l]));
    tr.h.push_back(t.value(e.h[l]));
    tr.mu.push_back(t.value(e.mu[l]));
    tr.var.push_back(t.value(e.var[l]));
  }
  tr.y = t.value(e.y);
  if (mode == RunMode::kTrain) update_running_stats(bn, tr.mu, tr.var);
  return tr;
}

// Corrupted pass with explicit noise; fills the noisy fields of `trace`.
inline void noisy_forward(ForwardTrace& trace, const LadderParams& params,
                          const LadderConfig& cfg, const Matrix& X, const NoisePack& noise) {
  ad::Tape t;
  graph::Params p = graph::register_params(t, params, false);
  ad::Ref x = t.constant(X);
  std::vector<ad::Ref> nrefs = graph::noise_refs(t, noise);
  graph::Encoder e = graph::build_encoder(t, p, cfg, x, &nrefs, nullptr);
  trace.ztilde.clear();
  trace.htilde.clear();
  for (size_t l = 0; l <= cfg.depth(); ++l) {
    trace.ztilde.push_back(t.value(e.z[l]));
    trace.htilde.push_back(t.value(e.h[l]));
  }
  trace.ytilde = t.value(e.y);
}

inline void noisy_forward(ForwardTrace& trace, const LadderParams& params,
                          const LadderConfig& cfg, const Matrix& X, Rng& rng) {
  noisy_forward(trace, params, cfg, X, sample_noise(cfg, X.rows(), rng));
}

// Decoding pass; requires clean statistics and the noisy trace in `trace`.
inline void decode(ForwardTrace& trace, const LadderParams& params, const LadderConfig& cfg) {
  const size_t L = cfg.depth();
  if (trace.ztilde.size() != L + 1 || trace.mu.size() != L + 1)
    throw std::invalid_argument("decode: trace is missing the noisy or clean pass");
  ad::Tape t;
  graph::Params p = graph::register_params(t, params, false);
  graph::Encoder noisy, clean;
  for (size_t l = 0; l <= L; ++l) {
    noisy.z.push_back(t.constant(trace.ztilde[l]));
    noisy.h.push_back(t.constant(trace.htilde[l]));
    clean.mu.push_back(t.constant(trace.mu[l]));
    clean.var.push_back(t.constant(trace.var[l]));
  }
  graph::Decoder d = graph::build_decoder(t, p, cfg, noisy, clean);
  trace.u.clear();
  trace.zhat.clear();
  trace.zhat_bn.clear();
  for (size_t l = 0; l <= L; ++l) {
    trace.u.push_back(t.value(d.u[l]));
    trace.zhat.push_back(t.value(d.zhat[l]));
    trace.zhat_bn.push_back(t.value(d.zhat_bn[l]));
  }
}

// Spec-level combinator on plain values. `z_tilde` may be empty (no lateral
// connection); `coeffs` is the 10 x w coefficient block.
inline Matrix combinator(const Matrix& z_tilde, const Matrix& u, const Matrix& coeffs) {
  ad::Tape t;
  ad::Ref zt = z_tilde.empty() ? ad::Ref{} : t.constant(z_tilde);
  return t.value(graph::combinator_node(t, t.constant(coeffs), zt, t.constant(u)));
}

// Posterior distribution over the k+1 classes: clean pass in eval mode.
inline Matrix predict(const LadderParams& params, const LadderConfig& cfg, const Matrix& X,
                      const BatchNormState& bn) {
  BatchNormState frozen = bn;
  return clean_forward(params, cfg, X, frozen, RunMode::kEval).y;
}

}  // namespace lid
