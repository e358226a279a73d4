#pragma once

// Forward and backward passes of the task-mapper, templated on the scalar type so the
// float training path and double-precision gradient checks share one implementation.

#include "dell/types.hpp"

#include <cmath>
#include <vector>

namespace dell {

inline constexpr double kLeakySlope = 0.1;

/// features = leaky_relu(weight * ((e - input_mean) * input_scale) + bias)
template <typename T>
struct TrunkParams {
  MatrixX<T> weight;      // feature_dim x embedding_dim
  VectorX<T> bias;        // feature_dim
  VectorX<T> input_mean;  // embedding_dim, fixed statistics
  T input_scale = 1;      // fixed statistics

  template <typename U>
  TrunkParams<U> cast() const {
    return {weight.template cast<U>(), bias.template cast<U>(), input_mean.template cast<U>(), U(input_scale)};
  }
};

/// Single-head scaled dot-product self-attention over class prototypes (columns).
template <typename T>
struct AttentionParams {
  MatrixX<T> query;  // feature_dim x feature_dim
  MatrixX<T> key;
  MatrixX<T> value;

  template <typename U>
  AttentionParams<U> cast() const {
    return {query.template cast<U>(), key.template cast<U>(), value.template cast<U>()};
  }
};

template <typename T>
struct CecParams {
  TrunkParams<T> trunk;
  AttentionParams<T> attention;
  VectorX<T> log_temperature;  // size 1

  T temperature() const { return std::exp(log_temperature(0)); }

  template <typename U>
  CecParams<U> cast() const {
    return {trunk.template cast<U>(), attention.template cast<U>(), log_temperature.template cast<U>()};
  }

  /// Visits every trainable tensor (the trunk statistics are not trainable).
  template <typename F>
  void for_each_trainable(F&& f) {
    f(trunk.weight);
    f(trunk.bias);
    f(attention.query);
    f(attention.key);
    f(attention.value);
    f(log_temperature);
  }
};

template <typename T>
CecParams<T> zeros_like(const CecParams<T>& p) {
  CecParams<T> z = p;
  z.for_each_trainable([](auto& m) { m.setZero(); });
  return z;
}

template <typename T>
TrunkParams<T> zeros_like(const TrunkParams<T>& p) {
  TrunkParams<T> z = p;
  z.weight.setZero();
  z.bias.setZero();
  return z;
}

/// Labelled embeddings of one training or evaluation episode.
template <typename T>
struct EpisodeData {
  MatrixX<T> support;          // embedding_dim x n_support
  std::vector<int> support_label;
  MatrixX<T> query;            // embedding_dim x n_query
  std::vector<int> query_label;
  int n_classes = 0;
};

template <typename T>
struct TrunkCache {
  MatrixX<T> input;   // standardized embeddings
  MatrixX<T> pre;     // pre-activation
};

template <typename T>
MatrixX<T> trunk_forward(const TrunkParams<T>& p, const Eigen::Ref<const MatrixX<T>>& embeddings,
                         TrunkCache<T>* cache = nullptr) {
  MatrixX<T> input = (embeddings.colwise() - p.input_mean) * p.input_scale;
  MatrixX<T> pre = (p.weight * input).colwise() + p.bias;
  MatrixX<T> out = pre.unaryExpr([](T v) { return v > T(0) ? v : T(kLeakySlope) * v; });
  if (cache) {
    cache->input = std::move(input);
    cache->pre = std::move(pre);
  }
  return out;
}

template <typename T>
void trunk_backward(const TrunkParams<T>& p, const TrunkCache<T>& cache, const MatrixX<T>& d_out,
                    TrunkParams<T>& grad) {
  const MatrixX<T> d_pre =
      d_out.cwiseProduct(cache.pre.unaryExpr([](T v) { return v > T(0) ? T(1) : T(kLeakySlope); }));
  grad.weight.noalias() += d_pre * cache.input.transpose();
  grad.bias += d_pre.rowwise().sum();
  (void)p;
}

/// Column-wise mean of features per class.
template <typename T>
MatrixX<T> class_means(const MatrixX<T>& features, const std::vector<int>& labels, int n_classes) {
  MatrixX<T> means = MatrixX<T>::Zero(features.rows(), n_classes);
  std::vector<int> count(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    means.col(labels[i]) += features.col(static_cast<Eigen::Index>(i));
    ++count[static_cast<std::size_t>(labels[i])];
  }
  for (int c = 0; c < n_classes; ++c) means.col(c) /= T(count[static_cast<std::size_t>(c)]);
  return means;
}

template <typename T>
MatrixX<T> normalize_columns(const MatrixX<T>& m, VectorX<T>* norms = nullptr) {
  VectorX<T> n = m.colwise().norm().transpose().cwiseMax(T(1e-12));
  MatrixX<T> out = m * n.cwiseInverse().asDiagonal();
  if (norms) *norms = std::move(n);
  return out;
}

/// Backward of column normalization: du = (dw - w (w . dw)) / ||u||.
template <typename T>
MatrixX<T> normalize_columns_backward(const MatrixX<T>& normalized, const VectorX<T>& norms, const MatrixX<T>& d_out) {
  const VectorX<T> dots = normalized.cwiseProduct(d_out).colwise().sum().transpose();
  return (d_out - normalized * dots.asDiagonal()) * norms.cwiseInverse().asDiagonal();
}

template <typename T>
MatrixX<T> softmax_rows(const MatrixX<T>& s) {
  MatrixX<T> a = s.colwise() - s.rowwise().maxCoeff();
  a = a.array().exp().matrix();
  return a.array().colwise() / a.rowwise().sum().array();
}

template <typename T>
MatrixX<T> softmax_cols(const MatrixX<T>& s) {
  MatrixX<T> a = s.rowwise() - s.colwise().maxCoeff();
  a = a.array().exp().matrix();
  return a.array().rowwise() / a.colwise().sum().array();
}

template <typename T>
struct AttentionCache {
  MatrixX<T> q, k, v, attn;  // attn is n x n, rows sum to 1
  MatrixX<T> refined;        // prototypes + v * attn^T
  VectorX<T> norms;
};

/// Refines raw prototypes (columns) by self-attention with a residual connection and
/// returns unit-norm class vectors.
template <typename T>
MatrixX<T> adapt_prototypes(const AttentionParams<T>& p, const MatrixX<T>& prototypes,
                            AttentionCache<T>* cache = nullptr) {
  const T scale = T(1) / std::sqrt(T(prototypes.rows()));
  MatrixX<T> q = p.query * prototypes;
  MatrixX<T> k = p.key * prototypes;
  MatrixX<T> v = p.value * prototypes;
  MatrixX<T> attn = softmax_rows<T>((q.transpose() * k) * scale);
  MatrixX<T> refined = prototypes + v * attn.transpose();
  VectorX<T> norms;
  MatrixX<T> out = normalize_columns<T>(refined, &norms);
  if (cache) *cache = {std::move(q), std::move(k), std::move(v), std::move(attn), std::move(refined), std::move(norms)};
  return out;
}

/// Returns the gradient with respect to the raw prototypes and accumulates parameter gradients.
template <typename T>
MatrixX<T> adapt_prototypes_backward(const AttentionParams<T>& p, const MatrixX<T>& prototypes,
                                     const MatrixX<T>& class_vectors, const AttentionCache<T>& c,
                                     const MatrixX<T>& d_class_vectors, AttentionParams<T>& grad) {
  const T scale = T(1) / std::sqrt(T(prototypes.rows()));
  const MatrixX<T> d_refined = normalize_columns_backward<T>(class_vectors, c.norms, d_class_vectors);
  MatrixX<T> d_proto = d_refined;
  const MatrixX<T> d_v = d_refined * c.attn;
  const MatrixX<T> d_attn = d_refined.transpose() * c.v;
  const VectorX<T> row_dot = c.attn.cwiseProduct(d_attn).rowwise().sum();
  const MatrixX<T> d_scores = c.attn.cwiseProduct(d_attn.colwise() - row_dot) * scale;
  const MatrixX<T> d_q = c.k * d_scores.transpose();
  const MatrixX<T> d_k = c.q * d_scores;
  grad.query.noalias() += d_q * prototypes.transpose();
  grad.key.noalias() += d_k * prototypes.transpose();
  grad.value.noalias() += d_v * prototypes.transpose();
  d_proto.noalias() += p.query.transpose() * d_q + p.key.transpose() * d_k + p.value.transpose() * d_v;
  return d_proto;
}

/// Mean cross-entropy from logits (classes x samples); writes d_logits and counts argmax hits.
template <typename T>
T cross_entropy(const MatrixX<T>& logits, const std::vector<int>& labels, MatrixX<T>* d_logits, int* hits) {
  const MatrixX<T> prob = softmax_cols<T>(logits);
  const T m = T(labels.size());
  T loss = 0;
  int correct = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    loss -= std::log(std::max(prob(labels[j], col), T(1e-30)));
    Eigen::Index best = 0;
    logits.col(col).maxCoeff(&best);
    correct += best == labels[j];
  }
  if (d_logits) {
    *d_logits = prob;
    for (std::size_t j = 0; j < labels.size(); ++j) (*d_logits)(labels[j], static_cast<Eigen::Index>(j)) -= T(1);
    *d_logits /= m;
  }
  if (hits) *hits = correct;
  return loss / m;
}

/// Pseudo-incremental episode loss of the incremental mapper: prototypes from the support set,
/// attention adaptation, temperature-scaled cosine logits, cross-entropy over all classes.
template <typename T>
T cec_episode_loss(const CecParams<T>& p, const EpisodeData<T>& ep, CecParams<T>* grad, int* hits = nullptr) {
  TrunkCache<T> s_cache, q_cache;
  const MatrixX<T> s_feat = trunk_forward<T>(p.trunk, ep.support, &s_cache);
  const MatrixX<T> q_feat = trunk_forward<T>(p.trunk, ep.query, &q_cache);
  const MatrixX<T> protos = class_means<T>(s_feat, ep.support_label, ep.n_classes);
  AttentionCache<T> a_cache;
  const MatrixX<T> w = adapt_prototypes<T>(p.attention, protos, &a_cache);
  VectorX<T> q_norms;
  const MatrixX<T> q_hat = normalize_columns<T>(q_feat, &q_norms);
  const T tau = p.temperature();
  const MatrixX<T> cosines = w.transpose() * q_hat;
  MatrixX<T> d_logits;
  const T loss = cross_entropy<T>(cosines * tau, ep.query_label, grad ? &d_logits : nullptr, hits);
  if (!grad) return loss;

  grad->log_temperature(0) += d_logits.cwiseProduct(cosines).sum() * tau;
  const MatrixX<T> d_w = q_hat * d_logits.transpose() * tau;
  const MatrixX<T> d_q_hat = w * d_logits * tau;
  const MatrixX<T> d_q_feat = normalize_columns_backward<T>(q_hat, q_norms, d_q_hat);
  const MatrixX<T> d_protos = adapt_prototypes_backward<T>(p.attention, protos, w, a_cache, d_w, grad->attention);

  MatrixX<T> d_s_feat(s_feat.rows(), s_feat.cols());
  std::vector<int> count(static_cast<std::size_t>(ep.n_classes), 0);
  for (int l : ep.support_label) ++count[static_cast<std::size_t>(l)];
  for (std::size_t i = 0; i < ep.support_label.size(); ++i) {
    const int c = ep.support_label[i];
    d_s_feat.col(static_cast<Eigen::Index>(i)) = d_protos.col(c) / T(count[static_cast<std::size_t>(c)]);
  }
  trunk_backward<T>(p.trunk, s_cache, d_s_feat, grad->trunk);
  trunk_backward<T>(p.trunk, q_cache, d_q_feat, grad->trunk);
  return loss;
}

/// Prototypical-network episode loss: logits are negative squared Euclidean distances.
template <typename T>
T protonet_episode_loss(const TrunkParams<T>& p, const EpisodeData<T>& ep, TrunkParams<T>* grad, int* hits = nullptr) {
  TrunkCache<T> s_cache, q_cache;
  const MatrixX<T> s_feat = trunk_forward<T>(p, ep.support, &s_cache);
  const MatrixX<T> q_feat = trunk_forward<T>(p, ep.query, &q_cache);
  const MatrixX<T> protos = class_means<T>(s_feat, ep.support_label, ep.n_classes);
  // -||q - p||^2 = 2 p.q - ||p||^2 - ||q||^2
  const VectorX<T> p_sq = protos.colwise().squaredNorm().transpose();
  const VectorX<T> q_sq = q_feat.colwise().squaredNorm().transpose();
  MatrixX<T> logits = T(2) * protos.transpose() * q_feat;
  logits.colwise() -= p_sq;
  logits.rowwise() -= q_sq.transpose();
  MatrixX<T> d_logits;
  const T loss = cross_entropy<T>(logits, ep.query_label, grad ? &d_logits : nullptr, hits);
  if (!grad) return loss;

  // d/dq: sum_c dL_c * (-2)(q - p_c); d/dp_c: sum_q dL_cq * 2 (q - p_c)
  const VectorX<T> row_sum = d_logits.rowwise().sum();  // per class
  const VectorX<T> col_sum = d_logits.colwise().sum().transpose();  // per query
  const MatrixX<T> d_q_feat = T(2) * (protos * d_logits - q_feat * col_sum.asDiagonal());
  const MatrixX<T> d_protos = T(2) * (q_feat * d_logits.transpose() - protos * row_sum.asDiagonal());

  MatrixX<T> d_s_feat(s_feat.rows(), s_feat.cols());
  std::vector<int> count(static_cast<std::size_t>(ep.n_classes), 0);
  for (int l : ep.support_label) ++count[static_cast<std::size_t>(l)];
  for (std::size_t i = 0; i < ep.support_label.size(); ++i) {
    const int c = ep.support_label[i];
    d_s_feat.col(static_cast<Eigen::Index>(i)) = d_protos.col(c) / T(count[static_cast<std::size_t>(c)]);
  }
  trunk_backward<T>(p, s_cache, d_s_feat, *grad);
  trunk_backward<T>(p, q_cache, d_q_feat, *grad);
  return loss;
}

/// Adam state for one tensor.
template <typename T>
struct AdamSlot {
  MatrixX<T> m, v;
};

template <typename T>
class Adam {
 public:
  explicit Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  /// Applies one update to `param` using slot `index`.
  template <typename Derived>
  void update(std::size_t index, Eigen::MatrixBase<Derived>& param, const MatrixX<T>& grad) {
    if (slots_.size() <= index) slots_.resize(index + 1);
    auto& s = slots_[index];
    if (s.m.size() == 0) {
      s.m = MatrixX<T>::Zero(grad.rows(), grad.cols());
      s.v = MatrixX<T>::Zero(grad.rows(), grad.cols());
    }
    s.m = b1_ * s.m + (T(1) - b1_) * grad;
    s.v = b2_ * s.v + (T(1) - b2_) * grad.cwiseAbs2();
    const T c1 = T(1) - std::pow(b1_, T(step_));
    const T c2 = T(1) - std::pow(b2_, T(step_));
    param.derived().array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }

  void next_step() { ++step_; }

 private:
  T lr_, b1_, b2_, eps_;
  int step_ = 1;
  std::vector<AdamSlot<T>> slots_;
};

}  // namespace dell
