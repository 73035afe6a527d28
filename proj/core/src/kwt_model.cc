/* Copyright 2026 The kwsd2v Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "kwsd2v/kwt_model.h"

#include <cmath>
#include <numbers>
#include <string>

namespace kwsd2v {
namespace {

constexpr double kNormEps = 1e-5;
constexpr double kInitStd = 0.02;

bool EndsWith(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
T Gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
T GeluGrad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Row-wise normalization; returns xhat and 1/σ per row.
template <typename T>
void NormalizeRows(const Mat<T>& x, Mat<T>& xhat, Vec<T>& rstd) {
  const Eigen::Index n = x.rows();
  const T inv_width = T(1) / static_cast<T>(x.cols());
  xhat.resize(x.rows(), x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).sum() * inv_width;
    auto centered = x.row(i).array() - mean;
    const T var = centered.square().sum() * inv_width;
    const T r = T(1) / std::sqrt(var + T(kNormEps));
    rstd(i) = r;
    xhat.row(i) = centered * r;
  }
}

template <typename T>
Mat<T> Affine(const Mat<T>& xhat, ConstMatMap<T> gain, ConstMatMap<T> bias) {
  Mat<T> y = xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

// Gradient of the affine row normalization; accumulates gain/bias grads.
template <typename T>
Mat<T> NormBackward(const Mat<T>& dy, const Mat<T>& xhat, const Vec<T>& rstd,
                    ConstMatMap<T> gain, MatMap<T> d_gain, MatMap<T> d_bias) {
  d_gain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  const Mat<T> dxhat = dy.array().rowwise() * gain.row(0).array();
  const T inv_width = T(1) / static_cast<T>(dy.cols());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_d = dxhat.row(i).sum() * inv_width;
    const T mean_dx = (dxhat.row(i).array() * xhat.row(i).array()).sum() * inv_width;
    dx.row(i) = rstd(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
  }
  return dx;
}

template <typename T>
void CheckFinite(const Mat<T>& m, const std::string& where) {
  if (!m.allFinite()) throw NonFiniteError("non-finite activation in " + where);
}

}  // namespace

KwtConfig KwtConfig::Kwt1() {
  return KwtConfig{"kwt-1", 12, 64, 1, 256, 35, 98, 40};
}
KwtConfig KwtConfig::Kwt2() {
  return KwtConfig{"kwt-2", 12, 128, 2, 512, 35, 98, 40};
}
KwtConfig KwtConfig::Kwt3() {
  return KwtConfig{"kwt-3", 12, 192, 3, 768, 35, 98, 40};
}
KwtConfig KwtConfig::Tiny() {
  return KwtConfig{"tiny", 2, 64, 1, 128, 35, 98, 40};
}

KwtConfig KwtConfig::FromName(const std::string& name) {
  if (name == "kwt-1") return Kwt1();
  if (name == "kwt-2") return Kwt2();
  if (name == "kwt-3") return Kwt3();
  if (name == "tiny") return Tiny();
  throw std::invalid_argument("unknown model variant '" + name + "'");
}

void KwtConfig::Validate() const {
  if (n_blocks <= 0 || encoder_dim <= 0 || n_heads <= 0 || mlp_dim <= 0 ||
      n_classes <= 0 || seq_len <= 0 || feature_dim <= 0) {
    throw std::invalid_argument("model '" + name + "': all dimensions must be positive");
  }
  if (encoder_dim % n_heads != 0) {
    throw std::invalid_argument("model '" + name +
                                "': encoder_dim must be divisible by n_heads");
  }
}

bool KwtConfig::IsStandardShape() const {
  return n_blocks == 12 && encoder_dim == 64 * n_heads;
}

std::int64_t CountParameters(const KwtConfig& c) {
  c.Validate();
  const std::int64_t d = c.encoder_dim;
  const std::int64_t m = c.mlp_dim;
  const std::int64_t per_block = 2 * d              // norm1
                                 + d * 3 * d + 3 * d  // qkv
                                 + d * d + d          // attention output
                                 + 2 * d              // norm2
                                 + d * m + m          // fc1
                                 + m * d + d;         // fc2
  const std::int64_t input = c.feature_dim * d + d;
  const std::int64_t positional = static_cast<std::int64_t>(c.seq_len) * d;
  const std::int64_t final_norm = 2 * d;
  const std::int64_t head = d * m + m + m * c.n_classes + c.n_classes;
  return input + positional + c.n_blocks * per_block + final_norm + head;
}

template <typename T>
KwtModel<T>::KwtModel(KwtConfig config) : config_(std::move(config)) {
  config_.Validate();
  const int d = config_.encoder_dim;
  const int m = config_.mlp_dim;
  auto layout = std::make_shared<ParamLayout>();
  auto& L = *layout;
  index_.input_weight = L.Add("input_projection.weight", config_.feature_dim, d);
  index_.input_bias = L.Add("input_projection.bias", 1, d);
  index_.positional = L.Add("positional", config_.seq_len, d);
  for (int b = 0; b < config_.n_blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    KwtIndex::Block blk;
    blk.norm1_gain = L.Add(p + "norm1.gain", 1, d);
    blk.norm1_bias = L.Add(p + "norm1.bias", 1, d);
    blk.qkv_weight = L.Add(p + "attention.qkv.weight", d, 3 * d);
    blk.qkv_bias = L.Add(p + "attention.qkv.bias", 1, 3 * d);
    blk.out_weight = L.Add(p + "attention.out.weight", d, d);
    blk.out_bias = L.Add(p + "attention.out.bias", 1, d);
    blk.norm2_gain = L.Add(p + "norm2.gain", 1, d);
    blk.norm2_bias = L.Add(p + "norm2.bias", 1, d);
    blk.fc1_weight = L.Add(p + "mlp.fc1.weight", d, m);
    blk.fc1_bias = L.Add(p + "mlp.fc1.bias", 1, m);
    blk.fc2_weight = L.Add(p + "mlp.fc2.weight", m, d);
    blk.fc2_bias = L.Add(p + "mlp.fc2.bias", 1, d);
    index_.blocks.push_back(blk);
  }
  index_.final_gain = L.Add("final_norm.gain", 1, d);
  index_.final_bias = L.Add("final_norm.bias", 1, d);
  index_.num_encoder_tensors = L.num_tensors();
  index_.mask_token = L.Add("mask_token", 1, d);
  index_.cls_fc1_weight = L.Add("cls_head.fc1.weight", d, m);
  index_.cls_fc1_bias = L.Add("cls_head.fc1.bias", 1, m);
  index_.cls_fc2_weight = L.Add("cls_head.fc2.weight", m, config_.n_classes);
  index_.cls_fc2_bias = L.Add("cls_head.fc2.bias", 1, config_.n_classes);
  index_.reg_weight = L.Add("reg_head.weight", d, d);
  index_.reg_bias = L.Add("reg_head.bias", 1, d);
  encoder_layout_ =
      std::make_shared<const ParamLayout>(L.Prefix(index_.num_encoder_tensors));
  layout_ = std::move(layout);
}

namespace {

template <typename T>
void InitTensor(const TensorInfo& info, std::span<T> values, std::mt19937_64& rng) {
  if (EndsWith(info.name, ".bias")) {
    std::fill(values.begin(), values.end(), T(0));
  } else if (EndsWith(info.name, ".gain")) {
    std::fill(values.begin(), values.end(), T(1));
  } else {
    std::normal_distribution<double> normal(0.0, kInitStd);
    for (T& v : values) {
      double x;
      do {
        x = normal(rng);
      } while (std::abs(x) > 2.0 * kInitStd);
      v = static_cast<T>(x);
    }
  }
}

}  // namespace

template <typename T>
ParamStore<T> KwtModel<T>::Init(std::mt19937_64& rng) const {
  ParamStore<T> params(layout_);
  for (int i = 0; i < layout_->num_tensors(); ++i) {
    InitTensor((*layout_)[i], params.Flat(i), rng);
  }
  return params;
}

template <typename T>
void KwtModel<T>::InitClassifier(ParamStore<T>& params, std::mt19937_64& rng) const {
  for (int i : {index_.cls_fc1_weight, index_.cls_fc1_bias, index_.cls_fc2_weight,
                index_.cls_fc2_bias}) {
    InitTensor((*layout_)[i], params.Flat(i), rng);
  }
}

template <typename T>
Mat<T> KwtModel<T>::Embed(const ParamStore<T>& params, const Mat<T>& frames) const {
  if (frames.cols() != config_.feature_dim) {
    throw std::invalid_argument("expected " + std::to_string(config_.feature_dim) +
                                " feature columns, got " + std::to_string(frames.cols()));
  }
  Mat<T> tokens = frames * params.Tensor(index_.input_weight);
  tokens.rowwise() += params.Row(index_.input_bias);
  return tokens;
}

template <typename T>
EncoderOutput<T> KwtModel<T>::EncodeTokens(const ParamStore<T>& params,
                                           const Mat<T>& tokens, int batch,
                                           EncoderCache<T>* cache) const {
  const int S = config_.seq_len;
  const int d = config_.encoder_dim;
  const int H = config_.n_heads;
  const int dh = config_.head_dim();
  if (tokens.rows() != static_cast<Eigen::Index>(batch) * S || tokens.cols() != d) {
    throw std::invalid_argument("token matrix must be (batch*seq_len) x encoder_dim");
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Mat<T> h = tokens;
  const auto positional = params.Tensor(index_.positional);
  for (int b = 0; b < batch; ++b) h.middleRows(b * S, S) += positional;

  EncoderOutput<T> out;
  out.batch = batch;
  out.hiddens.reserve(config_.n_blocks);
  if (cache != nullptr) {
    cache->batch = batch;
    cache->blocks.assign(config_.n_blocks, {});
  }

  Mat<T> xhat, scores;
  Vec<T> rstd;
  for (int l = 0; l < config_.n_blocks; ++l) {
    const KwtIndex::Block& blk = index_.blocks[l];

    NormalizeRows(h, xhat, rstd);
    Mat<T> norm1 = Affine(xhat, params.Tensor(blk.norm1_gain), params.Tensor(blk.norm1_bias));
    Mat<T> qkv = norm1 * params.Tensor(blk.qkv_weight);
    qkv.rowwise() += params.Row(blk.qkv_bias);

    Mat<T> context(h.rows(), d);
    Mat<T> probs;
    if (cache != nullptr) probs.resize(static_cast<Eigen::Index>(batch) * H * S, S);
    for (int b = 0; b < batch; ++b) {
      for (int k = 0; k < H; ++k) {
        auto q = qkv.block(b * S, k * dh, S, dh);
        auto key = qkv.block(b * S, d + k * dh, S, dh);
        auto v = qkv.block(b * S, 2 * d + k * dh, S, dh);
        scores.noalias() = (q * key.transpose()) * scale;
        for (int i = 0; i < S; ++i) {
          auto row = scores.row(i);
          row.array() = (row.array() - row.maxCoeff()).exp();
          row /= row.sum();
        }
        context.block(b * S, k * dh, S, dh).noalias() = scores * v;
        if (cache != nullptr) probs.middleRows((b * H + k) * S, S) = scores;
      }
    }

    Mat<T> mid = h;
    mid.noalias() += context * params.Tensor(blk.out_weight);
    mid.rowwise() += params.Row(blk.out_bias);

    Mat<T> xhat2;
    Vec<T> rstd2;
    NormalizeRows(mid, xhat2, rstd2);
    Mat<T> norm2 = Affine(xhat2, params.Tensor(blk.norm2_gain), params.Tensor(blk.norm2_bias));
    Mat<T> pre_act = norm2 * params.Tensor(blk.fc1_weight);
    pre_act.rowwise() += params.Row(blk.fc1_bias);
    Mat<T> act = pre_act.unaryExpr([](T x) { return Gelu(x); });

    Mat<T> next = mid;
    next.noalias() += act * params.Tensor(blk.fc2_weight);
    next.rowwise() += params.Row(blk.fc2_bias);
    CheckFinite(next, "block " + std::to_string(l));

    if (cache != nullptr) {
      auto& c = cache->blocks[l];
      c.input = std::move(h);
      c.xhat1 = xhat;
      c.norm1 = std::move(norm1);
      c.rstd1 = rstd;
      c.qkv = std::move(qkv);
      c.probs = std::move(probs);
      c.context = std::move(context);
      c.mid = std::move(mid);
      c.xhat2 = std::move(xhat2);
      c.norm2 = std::move(norm2);
      c.rstd2 = std::move(rstd2);
      c.pre_act = std::move(pre_act);
      c.act = std::move(act);
    }
    out.hiddens.push_back(next);
    h = std::move(next);
  }

  NormalizeRows(h, xhat, rstd);
  out.normed = Affine(xhat, params.Tensor(index_.final_gain), params.Tensor(index_.final_bias));
  CheckFinite(out.normed, "final normalization");
  if (cache != nullptr) {
    cache->final_xhat = xhat;
    cache->final_rstd = rstd;
  }
  out.pooled.resize(batch, d);
  for (int b = 0; b < batch; ++b) {
    out.pooled.row(b) = out.normed.middleRows(b * S, S).colwise().mean();
  }
  return out;
}

template <typename T>
Mat<T> KwtModel<T>::Classify(const ParamStore<T>& params, const EncoderOutput<T>& out,
                             HeadCache<T>* cache) const {
  Mat<T> pre = out.pooled * params.Tensor(index_.cls_fc1_weight);
  pre.rowwise() += params.Row(index_.cls_fc1_bias);
  Mat<T> act = pre.unaryExpr([](T x) { return Gelu(x); });
  Mat<T> logits = act * params.Tensor(index_.cls_fc2_weight);
  logits.rowwise() += params.Row(index_.cls_fc2_bias);
  if (cache != nullptr) {
    cache->pooled = out.pooled;
    cache->pre_act = std::move(pre);
    cache->act = std::move(act);
  }
  return logits;
}

template <typename T>
Mat<T> KwtModel<T>::Regress(const ParamStore<T>& params,
                            const EncoderOutput<T>& out) const {
  Mat<T> pred = out.normed * params.Tensor(index_.reg_weight);
  pred.rowwise() += params.Row(index_.reg_bias);
  return pred;
}

template <typename T>
Mat<T> KwtModel<T>::ClassifyBackward(const ParamStore<T>& params, const HeadCache<T>& cache,
                                     const Mat<T>& d_logits, ParamStore<T>& grads) const {
  grads.Tensor(index_.cls_fc2_weight).noalias() += cache.act.transpose() * d_logits;
  grads.Row(index_.cls_fc2_bias) += d_logits.colwise().sum();
  Mat<T> d_act = d_logits * params.Tensor(index_.cls_fc2_weight).transpose();
  Mat<T> d_pre = d_act.array() * cache.pre_act.unaryExpr([](T x) { return GeluGrad(x); }).array();
  grads.Tensor(index_.cls_fc1_weight).noalias() += cache.pooled.transpose() * d_pre;
  grads.Row(index_.cls_fc1_bias) += d_pre.colwise().sum();
  return d_pre * params.Tensor(index_.cls_fc1_weight).transpose();
}

template <typename T>
Mat<T> KwtModel<T>::RegressBackward(const ParamStore<T>& params, const EncoderOutput<T>& out,
                                    const Mat<T>& d_pred, ParamStore<T>& grads) const {
  grads.Tensor(index_.reg_weight).noalias() += out.normed.transpose() * d_pred;
  grads.Row(index_.reg_bias) += d_pred.colwise().sum();
  return d_pred * params.Tensor(index_.reg_weight).transpose();
}

template <typename T>
Mat<T> KwtModel<T>::PooledToNormedGrad(const Mat<T>& d_pooled) const {
  const int S = config_.seq_len;
  const auto batch = d_pooled.rows();
  Mat<T> d_normed(batch * S, d_pooled.cols());
  const T inv = T(1) / static_cast<T>(S);
  for (Eigen::Index b = 0; b < batch; ++b) {
    d_normed.middleRows(b * S, S).rowwise() = d_pooled.row(b) * inv;
  }
  return d_normed;
}

template <typename T>
Mat<T> KwtModel<T>::EncodeBackward(const ParamStore<T>& params, const EncoderCache<T>& cache,
                                   const Mat<T>& d_normed, ParamStore<T>& grads) const {
  const int S = config_.seq_len;
  const int d = config_.encoder_dim;
  const int H = config_.n_heads;
  const int dh = config_.head_dim();
  const int batch = cache.batch;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Mat<T> dh_out = NormBackward<T>(d_normed, cache.final_xhat, cache.final_rstd,
                                  params.Tensor(index_.final_gain),
                                  grads.Tensor(index_.final_gain),
                                  grads.Tensor(index_.final_bias));

  Mat<T> d_probs, d_scores;
  for (int l = config_.n_blocks - 1; l >= 0; --l) {
    const KwtIndex::Block& blk = index_.blocks[l];
    const auto& c = cache.blocks[l];

    // MLP branch.
    grads.Tensor(blk.fc2_weight).noalias() += c.act.transpose() * dh_out;
    grads.Row(blk.fc2_bias) += dh_out.colwise().sum();
    Mat<T> d_act = dh_out * params.Tensor(blk.fc2_weight).transpose();
    Mat<T> d_pre =
        d_act.array() * c.pre_act.unaryExpr([](T x) { return GeluGrad(x); }).array();
    grads.Tensor(blk.fc1_weight).noalias() += c.norm2.transpose() * d_pre;
    grads.Row(blk.fc1_bias) += d_pre.colwise().sum();
    Mat<T> d_norm2 = d_pre * params.Tensor(blk.fc1_weight).transpose();
    Mat<T> d_mid = dh_out;
    d_mid += NormBackward<T>(d_norm2, c.xhat2, c.rstd2, params.Tensor(blk.norm2_gain),
                             grads.Tensor(blk.norm2_gain), grads.Tensor(blk.norm2_bias));

    // Attention branch.
    grads.Tensor(blk.out_weight).noalias() += c.context.transpose() * d_mid;
    grads.Row(blk.out_bias) += d_mid.colwise().sum();
    Mat<T> d_context = d_mid * params.Tensor(blk.out_weight).transpose();
    Mat<T> d_qkv(c.qkv.rows(), c.qkv.cols());
    for (int b = 0; b < batch; ++b) {
      for (int k = 0; k < H; ++k) {
        auto p = c.probs.middleRows((b * H + k) * S, S);
        auto q = c.qkv.block(b * S, k * dh, S, dh);
        auto key = c.qkv.block(b * S, d + k * dh, S, dh);
        auto v = c.qkv.block(b * S, 2 * d + k * dh, S, dh);
        auto d_out = d_context.block(b * S, k * dh, S, dh);
        d_probs.noalias() = d_out * v.transpose();
        d_qkv.block(b * S, 2 * d + k * dh, S, dh).noalias() = p.transpose() * d_out;
        const Vec<T> dots = (d_probs.array() * p.array()).rowwise().sum();
        d_scores = p.array() * (d_probs.colwise() - dots).array();
        d_scores *= scale;
        d_qkv.block(b * S, k * dh, S, dh).noalias() = d_scores * key;
        d_qkv.block(b * S, d + k * dh, S, dh).noalias() = d_scores.transpose() * q;
      }
    }
    grads.Tensor(blk.qkv_weight).noalias() += c.norm1.transpose() * d_qkv;
    grads.Row(blk.qkv_bias) += d_qkv.colwise().sum();
    Mat<T> d_norm1 = d_qkv * params.Tensor(blk.qkv_weight).transpose();
    dh_out = d_mid;
    dh_out += NormBackward<T>(d_norm1, c.xhat1, c.rstd1, params.Tensor(blk.norm1_gain),
                              grads.Tensor(blk.norm1_gain), grads.Tensor(blk.norm1_bias));
  }

  auto d_pos = grads.Tensor(index_.positional);
  for (int b = 0; b < batch; ++b) d_pos += dh_out.middleRows(b * S, S);
  return dh_out;
}

template <typename T>
void KwtModel<T>::EmbedBackward(const Mat<T>& frames, const Mat<T>& d_tokens,
                                ParamStore<T>& grads) const {
  grads.Tensor(index_.input_weight).noalias() += frames.transpose() * d_tokens;
  grads.Row(index_.input_bias) += d_tokens.colwise().sum();
}

template class KwtModel<float>;
template class KwtModel<double>;

}  // namespace kwsd2v
