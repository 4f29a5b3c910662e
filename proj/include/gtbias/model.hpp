// Copyright 2026 The gtbias Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense node-level graph transformer with a scalar shortest-path bias on the
// attention logits, hand-written reverse mode, and an Adam optimizer.
//
// Layout conventions: activations are n x width with one row per node,
// weights are fan_in x fan_out, and biases / layer-norm vectors are 1 x width.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "gtbias/error.hpp"
#include "gtbias/graph.hpp"
#include "gtbias/rng.hpp"
#include "gtbias/task.hpp"

namespace gtbias {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 32;
  int d_ff = 64;
  double lambda_dist_init = 0.0;
  std::uint64_t param_seed = 0;

  int d_head() const { return d_model / n_heads; }

  void validate() const {
    require(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_ff >= 1, ErrorKind::kParameter,
            "model: layer/head/width counts must be positive");
    require(d_model % n_heads == 0, ErrorKind::kParameter, "model: d_model must be divisible by n_heads");
    require(std::isfinite(lambda_dist_init), ErrorKind::kParameter, "model: lambda_dist_init must be finite");
  }
};

struct BlockParams {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;
};

struct Parameters {
  int n_heads = 1;  // structural, not a tensor
  Matrix in_w, in_b;
  std::vector<BlockParams> blocks;
  Matrix lnf_gain, lnf_bias;
  Matrix out_w, out_b;

  /// Visits every tensor in a fixed order with its dotted name. Works for
  /// const and non-const Parameters.
  template <class Self, class F>
  static void visit(Self& p, F&& f) {
    f("input.weight", p.in_w);
    f("input.bias", p.in_b);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
      auto& b = p.blocks[l];
      const std::string pre = "blocks." + std::to_string(l) + ".";
      f(pre + "ln1.gain", b.ln1_gain);
      f(pre + "ln1.bias", b.ln1_bias);
      f(pre + "attn.wq", b.wq);
      f(pre + "attn.bq", b.bq);
      f(pre + "attn.wk", b.wk);
      f(pre + "attn.bk", b.bk);
      f(pre + "attn.wv", b.wv);
      f(pre + "attn.bv", b.bv);
      f(pre + "attn.wo", b.wo);
      f(pre + "attn.bo", b.bo);
      f(pre + "ln2.gain", b.ln2_gain);
      f(pre + "ln2.bias", b.ln2_bias);
      f(pre + "ff.w1", b.w1);
      f(pre + "ff.b1", b.b1);
      f(pre + "ff.w2", b.w2);
      f(pre + "ff.b2", b.b2);
    }
    f("final_ln.gain", p.lnf_gain);
    f("final_ln.bias", p.lnf_bias);
    f("readout.weight", p.out_w);
    f("readout.bias", p.out_b);
  }

  template <class F> void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
  template <class F> void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

  Parameters zeros_like() const {
    Parameters z = *this;
    z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
    return z;
  }

  std::size_t size() const {
    std::size_t total = 0;
    for_each([&](const std::string&, const Matrix& m) { total += static_cast<std::size_t>(m.size()); });
    return total;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
    return ok;
  }
};

/// Zero-initialized parameter shapes for a config and input width.
inline Parameters parameter_shapes(const ModelConfig& cfg, int feature_dim) {
  const int d = cfg.d_model, f = cfg.d_ff;
  Parameters p;
  p.n_heads = cfg.n_heads;
  p.in_w = Matrix::Zero(feature_dim, d);
  p.in_b = Matrix::Zero(1, d);
  p.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& b : p.blocks) {
    b.ln1_gain = Matrix::Ones(1, d);
    b.ln1_bias = Matrix::Zero(1, d);
    for (Matrix* w : {&b.wq, &b.wk, &b.wv, &b.wo}) *w = Matrix::Zero(d, d);
    for (Matrix* v : {&b.bq, &b.bk, &b.bv, &b.bo}) *v = Matrix::Zero(1, d);
    b.ln2_gain = Matrix::Ones(1, d);
    b.ln2_bias = Matrix::Zero(1, d);
    b.w1 = Matrix::Zero(d, f);
    b.b1 = Matrix::Zero(1, f);
    b.w2 = Matrix::Zero(f, d);
    b.b2 = Matrix::Zero(1, d);
  }
  p.lnf_gain = Matrix::Ones(1, d);
  p.lnf_bias = Matrix::Zero(1, d);
  p.out_w = Matrix::Zero(d, 2);
  p.out_b = Matrix::Zero(1, 2);
  return p;
}

struct ModelState {
  Parameters params;
  Parameters adam_m, adam_v;
  std::int64_t step = 0;
  double lambda_dist = 0.0;
};

/// Linear-layer style init: weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// layer-norm gains 1 and offsets 0.
inline ModelState init_model(const ModelConfig& cfg, int feature_dim) {
  cfg.validate();
  require(feature_dim > 0, ErrorKind::kParameter, "model: feature_dim must be positive");
  ModelState st;
  st.params = parameter_shapes(cfg, feature_dim);
  Rng rng(cfg.param_seed);
  auto fill = [&](Matrix& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  };
  auto& p = st.params;
  fill(p.in_w, feature_dim);
  fill(p.in_b, feature_dim);
  for (auto& b : p.blocks) {
    for (auto [w, bias] : {std::pair{&b.wq, &b.bq}, {&b.wk, &b.bk}, {&b.wv, &b.bv}, {&b.wo, &b.bo}}) {
      fill(*w, cfg.d_model);
      fill(*bias, cfg.d_model);
    }
    fill(b.w1, cfg.d_model);
    fill(b.b1, cfg.d_model);
    fill(b.w2, cfg.d_ff);
    fill(b.b2, cfg.d_ff);
  }
  fill(p.out_w, cfg.d_model);
  fill(p.out_b, cfg.d_model);
  st.adam_m = st.params.zeros_like();
  st.adam_v = st.params.zeros_like();
  st.lambda_dist = cfg.lambda_dist_init;
  return st;
}

inline ModelConfig config_of(const Parameters& p) {
  ModelConfig cfg;
  cfg.n_layers = static_cast<int>(p.blocks.size());
  cfg.n_heads = p.n_heads;
  cfg.d_model = static_cast<int>(p.in_w.cols());
  cfg.d_ff = p.blocks.empty() ? 0 : static_cast<int>(p.blocks.front().w1.cols());
  return cfg;
}

// ---------------------------------------------------------------------------
// Attention bias

/// Hop distance with unreachable pairs replaced by diameter + 1.
inline Matrix surrogate_distances(const DistanceMatrix& dm) {
  Matrix r(dm.n, dm.n);
  const double far = dm.diameter + 1.0;
  for (int i = 0; i < dm.n; ++i)
    for (int j = 0; j < dm.n; ++j) r(i, j) = dm.reachable(i, j) ? dm(i, j) : far;
  return r;
}

/// qk / sqrt(d_head) + lambda * b(r) with b(r) = -r.
inline Matrix biased_logits(const Matrix& qk, const Matrix& surrogate, double lambda, int d_head) {
  return qk / std::sqrt(static_cast<double>(d_head)) - lambda * surrogate;
}

inline Matrix biased_logits(const Matrix& qk, const DistanceMatrix& dm, double lambda, int d_head) {
  require(qk.rows() == dm.n && qk.cols() == dm.n, ErrorKind::kParameter,
          "biased_logits: score matrix does not match distance matrix");
  return biased_logits(qk, surrogate_distances(dm), lambda, d_head);
}

inline void softmax_rows_inplace(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

/// Per-layer, per-head row-stochastic attention from the last forward pass.
struct AttentionRecord {
  std::vector<std::vector<Matrix>> layers;  // [layer][head] -> n x n

  int n_layers() const { return static_cast<int>(layers.size()); }
  int n_heads() const { return layers.empty() ? 0 : static_cast<int>(layers.front().size()); }
  int n() const { return layers.empty() || layers.front().empty() ? 0 : static_cast<int>(layers.front().front().rows()); }
};

/// Graph-side inputs prepared once per run.
struct ModelInput {
  Matrix features;
  Matrix surrogate;  // surrogate hop distances
  int n() const { return static_cast<int>(features.rows()); }
};

inline ModelInput prepare_input(const Graph& g, const DistanceMatrix& dm) {
  require(dm.n == g.n, ErrorKind::kParameter, "model: distance matrix does not match graph");
  return ModelInput{g.features, surrogate_distances(dm)};
}

struct LayerNormCache {
  Matrix xhat;
  Vector rstd;
};

struct BlockCache {
  Matrix h_in;
  LayerNormCache ln1;
  Matrix u1, q, k, v, heads;
  Matrix h_mid;
  LayerNormCache ln2;
  Matrix u2, pre, act;
};

struct ForwardPass {
  Matrix logits;             // n x 2
  AttentionRecord attention;
  // reverse-mode cache
  Matrix x;
  std::vector<BlockCache> blocks;
  LayerNormCache lnf;
  Matrix uf;
};

struct ForwardOptions {
  bool distance_bias = true;  // false runs the plain transformer
};

namespace detail {

constexpr double kLayerNormEps = 1e-5;

inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache& c) {
  const auto d = static_cast<double>(x.cols());
  Vector mean = x.rowwise().sum() / d;
  c.xhat = x.colwise() - mean;
  Vector var = c.xhat.rowwise().squaredNorm() / d;
  c.rstd = (var.array() + kLayerNormEps).rsqrt().matrix();
  c.xhat = c.rstd.asDiagonal() * c.xhat;
  Matrix y = c.xhat * gain.row(0).asDiagonal();
  y.rowwise() += bias.row(0);
  return y;
}

inline Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& c,
                                  Matrix& dgain, Matrix& dbias) {
  const auto d = static_cast<double>(dy.cols());
  dgain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  Matrix dxhat = dy * gain.row(0).asDiagonal();
  Vector sum_dxhat = dxhat.rowwise().sum();
  Vector sum_dxhat_xhat = (dxhat.array() * c.xhat.array()).rowwise().sum().matrix();
  Matrix dx = d * dxhat;
  dx.colwise() -= sum_dxhat;
  dx -= sum_dxhat_xhat.asDiagonal() * c.xhat;
  return (c.rstd / d).asDiagonal() * dx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

inline void check_finite(const Matrix& m, int layer, const char* where) {
  if (!m.allFinite()) {
    throw NumericFailure(layer, std::string("forward: non-finite activation in ") + where +
                                    " (layer " + std::to_string(layer) + ")");
  }
}

}  // namespace detail


/// Tensors in visiting order, for zipping parameters with gradients/moments.
template <class P>
auto tensor_list(P& p) {
  using Ptr = std::conditional_t<std::is_const_v<P>, const Matrix*, Matrix*>;
  std::vector<std::pair<std::string, Ptr>> out;
  p.for_each([&](const std::string& name, auto& m) { out.emplace_back(name, &m); });
  return out;
}

/// Pre-norm transformer forward pass over all n nodes. Block layer indices in
/// NumericFailure are 0-based; -1 marks the input projection and the readout.
inline ForwardPass forward(const ModelInput& in, const ModelState& st, ForwardOptions opt = {}) {
  const Parameters& p = st.params;
  require(in.features.cols() == p.in_w.rows(), ErrorKind::kParameter,
          "forward: feature_dim does not match the input projection");
  require(in.surrogate.rows() == in.n() && in.surrogate.cols() == in.n(), ErrorKind::kParameter,
          "forward: distance bias does not match node count");
  const int n = in.n();
  const int nh = p.n_heads;

  ForwardPass fp;
  fp.x = in.features;
  Matrix h = detail::affine(fp.x, p.in_w, p.in_b);
  detail::check_finite(h, -1, "input projection");

  fp.blocks.resize(p.blocks.size());
  fp.attention.layers.assign(p.blocks.size(), {});
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const BlockParams& b = p.blocks[l];
    BlockCache& c = fp.blocks[l];
    const int layer = static_cast<int>(l);
    const auto d = static_cast<int>(b.wq.cols());
    const int dh = d / nh;
    const double scale = std::sqrt(static_cast<double>(dh));

    c.h_in = h;
    c.u1 = detail::layer_norm(h, b.ln1_gain, b.ln1_bias, c.ln1);
    c.q = detail::affine(c.u1, b.wq, b.bq);
    c.k = detail::affine(c.u1, b.wk, b.bk);
    c.v = detail::affine(c.u1, b.wv, b.bv);
    c.heads.resize(n, d);
    auto& heads = fp.attention.layers[l];
    heads.reserve(static_cast<std::size_t>(nh));
    for (int hd = 0; hd < nh; ++hd) {
      Matrix s = c.q.middleCols(hd * dh, dh) * c.k.middleCols(hd * dh, dh).transpose();
      if (opt.distance_bias) {
        s = biased_logits(s, in.surrogate, st.lambda_dist, dh);
      } else {
        s = s / scale;
      }
      softmax_rows_inplace(s);
      c.heads.middleCols(hd * dh, dh).noalias() = s * c.v.middleCols(hd * dh, dh);
      heads.push_back(std::move(s));
    }
    detail::check_finite(c.heads, layer, "attention");

    c.h_mid = c.h_in + detail::affine(c.heads, b.wo, b.bo);
    c.u2 = detail::layer_norm(c.h_mid, b.ln2_gain, b.ln2_bias, c.ln2);
    c.pre = detail::affine(c.u2, b.w1, b.b1);
    c.act = c.pre.unaryExpr([](double x) { return detail::gelu(x); });
    h = c.h_mid + detail::affine(c.act, b.w2, b.b2);
    detail::check_finite(h, layer, "block output");
  }

  fp.uf = detail::layer_norm(h, p.lnf_gain, p.lnf_bias, fp.lnf);
  fp.logits = detail::affine(fp.uf, p.out_w, p.out_b);
  detail::check_finite(fp.logits, -1, "readout");
  return fp;
}

inline ForwardPass forward(const Graph& g, const DistanceMatrix& dm, const ModelState& st,
                           ForwardOptions opt = {}) {
  return forward(prepare_input(g, dm), st, opt);
}

/// Reverse pass from d(loss)/d(logits). lambda_dist is a controlled
/// hyperparameter and receives no gradient.
inline Parameters backward(const ForwardPass& fp, const Matrix& dlogits, const Parameters& p) {
  Parameters g = p.zeros_like();
  const int nh = p.n_heads;

  g.out_w.noalias() = fp.uf.transpose() * dlogits;
  g.out_b = dlogits.colwise().sum();
  Matrix duf = dlogits * p.out_w.transpose();
  Matrix dh = detail::layer_norm_backward(duf, p.lnf_gain, fp.lnf, g.lnf_gain, g.lnf_bias);

  for (std::size_t li = p.blocks.size(); li-- > 0;) {
    const BlockParams& b = p.blocks[li];
    BlockParams& gb = g.blocks[li];
    const BlockCache& c = fp.blocks[li];
    const auto d = static_cast<int>(b.wq.cols());
    const int dh_width = d / nh;
    const double scale = std::sqrt(static_cast<double>(dh_width));

    // feed-forward sublayer
    gb.w2.noalias() = c.act.transpose() * dh;
    gb.b2 = dh.colwise().sum();
    Matrix dpre = dh * b.w2.transpose();
    dpre.array() *= c.pre.unaryExpr([](double x) { return detail::gelu_grad(x); }).array();
    gb.w1.noalias() = c.u2.transpose() * dpre;
    gb.b1 = dpre.colwise().sum();
    Matrix du2 = dpre * b.w1.transpose();
    Matrix dmid = dh + detail::layer_norm_backward(du2, b.ln2_gain, c.ln2, gb.ln2_gain, gb.ln2_bias);

    // attention sublayer
    gb.wo.noalias() = c.heads.transpose() * dmid;
    gb.bo = dmid.colwise().sum();
    Matrix dheads = dmid * b.wo.transpose();
    Matrix dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
    for (int hd = 0; hd < nh; ++hd) {
      const Matrix& a = fp.attention.layers[li][static_cast<std::size_t>(hd)];
      const auto cols = [&](const Matrix& m) { return m.middleCols(hd * dh_width, dh_width); };
      const Matrix d_out = cols(dheads);
      Matrix da = d_out * cols(c.v).transpose();
      dv.middleCols(hd * dh_width, dh_width).noalias() = a.transpose() * d_out;
      const Vector row_dot = (da.array() * a.array()).rowwise().sum().matrix();
      Matrix ds = (a.array() * (da.colwise() - row_dot).array()).matrix() / scale;
      dq.middleCols(hd * dh_width, dh_width).noalias() = ds * cols(c.k);
      dk.middleCols(hd * dh_width, dh_width).noalias() = ds.transpose() * cols(c.q);
    }
    gb.wq.noalias() = c.u1.transpose() * dq;
    gb.bq = dq.colwise().sum();
    gb.wk.noalias() = c.u1.transpose() * dk;
    gb.bk = dk.colwise().sum();
    gb.wv.noalias() = c.u1.transpose() * dv;
    gb.bv = dv.colwise().sum();
    Matrix du1 = dq * b.wq.transpose();
    du1.noalias() += dk * b.wk.transpose();
    du1.noalias() += dv * b.wv.transpose();
    dh = dmid + detail::layer_norm_backward(du1, b.ln1_gain, c.ln1, gb.ln1_gain, gb.ln1_bias);
  }

  g.in_w.noalias() = fp.x.transpose() * dh;
  g.in_b = dh.colwise().sum();
  return g;
}

struct CrossEntropy {
  double loss = 0.0;
  Matrix dlogits;  // n x 2
};

/// Mean softmax cross-entropy over the listed nodes and its logit gradient.
inline CrossEntropy cross_entropy(const Matrix& logits, std::span<const int> nodes,
                                  std::span<const int> labels) {
  require(!nodes.empty(), ErrorKind::kEmptySubset, "loss: empty subset");
  CrossEntropy out;
  out.dlogits = Matrix::Zero(logits.rows(), logits.cols());
  const auto count = static_cast<double>(nodes.size());
  for (int i : nodes) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y == 0 || y == 1, ErrorKind::kParameter, "loss: node without a label in subset");
    const double l0 = logits(i, 0), l1 = logits(i, 1);
    const double m = std::max(l0, l1);
    const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
    out.loss += lse - logits(i, y);
    for (int cls = 0; cls < 2; ++cls) {
      out.dlogits(i, cls) = (std::exp(logits(i, cls) - lse) - (cls == y ? 1.0 : 0.0)) / count;
    }
  }
  out.loss /= count;
  return out;
}

struct LossAndGrads {
  double loss = 0.0;
  Parameters grads;
};

inline LossAndGrads loss_and_grads(const ForwardPass& fp, const LabeledTask& task, Split subset,
                                   const ModelState& st) {
  const auto ce = cross_entropy(fp.logits, task.nodes(subset), task.labels);
  return {ce.loss, backward(fp, ce.dlogits, st.params)};
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. lambda_dist is left untouched.
inline ModelState train_step(ModelState st, const Parameters& grads, const AdamConfig& cfg = {}) {
  auto params = tensor_list(st.params);
  auto m = tensor_list(st.adam_m);
  auto v = tensor_list(st.adam_v);
  const auto g = tensor_list(grads);
  require(g.size() == params.size(), ErrorKind::kParameter, "train_step: gradient tensor count mismatch");
  st.step += 1;
  const auto t = static_cast<double>(st.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = *params[i].second;
    Matrix& mi = *m[i].second;
    Matrix& vi = *v[i].second;
    const Matrix& gi = *g[i].second;
    require(gi.rows() == w.rows() && gi.cols() == w.cols(), ErrorKind::kParameter,
            "train_step: gradient shape mismatch for " + params[i].first);
    mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
    vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi.cwiseProduct(gi);
    w.array() -= cfg.learning_rate * (mi.array() / bc1) / ((vi.array() / bc2).sqrt() + cfg.eps);
  }
  return st;
}

/// Fraction of subset nodes whose argmax logit matches the label; ties go to
/// class 0.
inline double evaluate(const Matrix& logits, const LabeledTask& task, Split subset) {
  const auto nodes = task.nodes(subset);
  require(!nodes.empty(), ErrorKind::kEmptySubset, "evaluate: empty subset");
  int correct = 0;
  for (int i : nodes) {
    const int pred = logits(i, 1) > logits(i, 0) ? 1 : 0;
    correct += pred == task.labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   gtbias-checkpoint 1
//   config <n_layers> <n_heads> <d_model> <d_ff> <feature_dim>
//   lambda_dist <hexfloat>
//   step <int>
//   tensors <count>
//   <name> <rows> <cols>
//   <rows*cols hexfloats, row-major, space separated>
//   ...
//
// Tensor names are the parameter names, then "adam.m.<name>" and
// "adam.v.<name>" for the optimizer moments.

inline void write_checkpoint(std::ostream& os, const ModelState& st) {
  const ModelConfig cfg = config_of(st.params);
  os << "gtbias-checkpoint 1\n";
  os << "config " << cfg.n_layers << ' ' << cfg.n_heads << ' ' << cfg.d_model << ' ' << cfg.d_ff << ' '
     << st.params.in_w.rows() << '\n';
  os << std::hexfloat;
  os << "lambda_dist " << st.lambda_dist << '\n';
  os << "step " << std::dec << st.step << '\n';
  const auto p = tensor_list(st.params);
  const auto m = tensor_list(st.adam_m);
  const auto v = tensor_list(st.adam_v);
  os << "tensors " << 3 * p.size() << '\n';
  auto dump = [&](const std::string& name, const Matrix& t) {
    os << std::dec << name << ' ' << t.rows() << ' ' << t.cols() << '\n' << std::hexfloat;
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) os << (i || j ? " " : "") << t(i, j);
    os << '\n';
  };
  for (const auto& [name, t] : p) dump(name, *t);
  for (const auto& [name, t] : m) dump("adam.m." + name, *t);
  for (const auto& [name, t] : v) dump("adam.v." + name, *t);
  os << std::defaultfloat;
}

namespace detail {

inline double parse_double(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  require(end && *end == '\0' && !tok.empty(), ErrorKind::kFormat, "bad number '" + tok + "'");
  return v;
}

inline void expect_word(std::istream& is, const std::string& word) {
  std::string tok;
  require(static_cast<bool>(is >> tok) && tok == word, ErrorKind::kFormat,
          "expected '" + word + "', got '" + tok + "'");
}

}  // namespace detail

inline ModelState read_checkpoint(std::istream& is) {
  detail::expect_word(is, "gtbias-checkpoint");
  int version = 0;
  is >> version;
  require(version == 1, ErrorKind::kFormat, "checkpoint: unsupported version");
  detail::expect_word(is, "config");
  ModelConfig cfg;
  int feature_dim = 0;
  is >> cfg.n_layers >> cfg.n_heads >> cfg.d_model >> cfg.d_ff >> feature_dim;
  require(static_cast<bool>(is), ErrorKind::kFormat, "checkpoint: bad config line");
  cfg.validate();
  ModelState st;
  st.params = parameter_shapes(cfg, feature_dim);
  st.adam_m = st.params.zeros_like();
  st.adam_v = st.params.zeros_like();
  std::string tok;
  detail::expect_word(is, "lambda_dist");
  is >> tok;
  st.lambda_dist = detail::parse_double(tok);
  detail::expect_word(is, "step");
  is >> st.step;
  detail::expect_word(is, "tensors");
  std::size_t count = 0;
  is >> count;

  std::vector<std::pair<std::string, Matrix*>> slots;
  for (auto& e : tensor_list(st.params)) slots.push_back(e);
  for (auto& [name, t] : tensor_list(st.adam_m)) slots.emplace_back("adam.m." + name, t);
  for (auto& [name, t] : tensor_list(st.adam_v)) slots.emplace_back("adam.v." + name, t);
  require(count == slots.size(), ErrorKind::kFormat, "checkpoint: tensor count mismatch");
  for (auto& [name, t] : slots) {
    std::string got;
    Eigen::Index rows = 0, cols = 0;
    is >> got >> rows >> cols;
    require(got == name && rows == t->rows() && cols == t->cols(), ErrorKind::kFormat,
            "checkpoint: unexpected tensor '" + got + "' (wanted '" + name + "')");
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        is >> tok;
        (*t)(i, j) = detail::parse_double(tok);
      }
  }
  require(static_cast<bool>(is), ErrorKind::kFormat, "checkpoint: truncated input");
  return st;
}

}  // namespace gtbias
