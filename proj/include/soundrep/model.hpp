#pragma once

#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "soundrep/autodiff.hpp"
#include "soundrep/dsp.hpp"
#include "soundrep/rng.hpp"
#include "soundrep/tensor.hpp"

namespace soundrep {

/// Encoder architecture. Each block is conv3x3 -> batch-norm -> relu ->
/// maxpool2x2; the embedding is a global pool over the remaining extent.
struct EncoderConfig {
  std::vector<int> channels = {32, 64, 128};
  std::string pool = "max";  // "max" | "avg"
  // Fixed affine input normalization applied at batch assembly.
  double input_center = -10.0;
  double input_scale = 5.0;

  int embed_dim() const { return channels.empty() ? 0 : channels.back(); }
};

struct HeadConfig {
  int hidden = 128;
  int out = 64;
};

/// One optimizable tensor bound to its tape node for the running step.
template <typename T>
struct BoundParam {
  std::string name;
  Tensor<T>* value;
  typename Tape<T>::NodeId node;
  bool weight_decay;  // batch-norm scale/offset are excluded from decay
};

template <typename T>
using ParamBindings = std::vector<BoundParam<T>>;

template <typename T>
struct ConvBlockParams {
  Tensor<T> w;      // [out_c, in_c, 3, 3]
  Tensor<T> b;      // [out_c]
  Tensor<T> gamma;  // [out_c]
  Tensor<T> beta;   // [out_c]
  BnStats<T> bn;
};

namespace detail {

template <typename T>
Tensor<T> uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace detail

template <typename T>
struct EncoderParams {
  EncoderConfig cfg;
  std::vector<ConvBlockParams<T>> blocks;

  int embed_dim() const { return cfg.embed_dim(); }

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng) {
    EncoderParams p;
    p.cfg = cfg;
    int in_c = 1;
    for (int out_c : cfg.channels) {
      ConvBlockParams<T> blk;
      blk.w = detail::uniform_init<T>({out_c, in_c, 3, 3}, in_c * 9, rng);
      blk.b = Tensor<T>::zeros({out_c});
      blk.gamma = Tensor<T>::full({out_c}, T(1));
      blk.beta = Tensor<T>::zeros({out_c});
      blk.bn = BnStats<T>::identity(out_c);
      p.blocks.push_back(std::move(blk));
      in_c = out_c;
    }
    return p;
  }

  template <typename U>
  EncoderParams<U> cast() const {
    EncoderParams<U> out;
    out.cfg = cfg;
    for (const auto& blk : blocks) {
      ConvBlockParams<U> b;
      b.w = blk.w.template cast<U>();
      b.b = blk.b.template cast<U>();
      b.gamma = blk.gamma.template cast<U>();
      b.beta = blk.beta.template cast<U>();
      b.bn.mean = blk.bn.mean.template cast<U>();
      b.bn.var = blk.bn.var.template cast<U>();
      out.blocks.push_back(std::move(b));
    }
    return out;
  }
};

template <typename T>
struct HeadParams {
  HeadConfig cfg;
  Tensor<T> w1, b1;      // in -> hidden
  Tensor<T> gamma, beta; // batch-norm on the hidden layer
  BnStats<T> bn;
  Tensor<T> w2, b2;      // hidden -> out

  static HeadParams init(int in_dim, const HeadConfig& cfg, Rng& rng) {
    HeadParams p;
    p.cfg = cfg;
    p.w1 = detail::uniform_init<T>({cfg.hidden, in_dim}, in_dim, rng);
    p.b1 = Tensor<T>::zeros({cfg.hidden});
    p.gamma = Tensor<T>::full({cfg.hidden}, T(1));
    p.beta = Tensor<T>::zeros({cfg.hidden});
    p.bn = BnStats<T>::identity(cfg.hidden);
    p.w2 = detail::uniform_init<T>({cfg.out, cfg.hidden}, cfg.hidden, rng);
    p.b2 = Tensor<T>::zeros({cfg.out});
    return p;
  }

  template <typename U>
  HeadParams<U> cast() const {
    HeadParams<U> out;
    out.cfg = cfg;
    out.w1 = w1.template cast<U>();
    out.b1 = b1.template cast<U>();
    out.gamma = gamma.template cast<U>();
    out.beta = beta.template cast<U>();
    out.bn.mean = bn.mean.template cast<U>();
    out.bn.var = bn.var.template cast<U>();
    out.w2 = w2.template cast<U>();
    out.b2 = b2.template cast<U>();
    return out;
  }
};

template <typename T>
struct ClassifierParams {
  Tensor<T> w;  // [classes, in]
  Tensor<T> b;  // [classes]

  static ClassifierParams init(int in_dim, int classes, Rng& rng) {
    ClassifierParams p;
    p.w = detail::uniform_init<T>({classes, in_dim}, in_dim, rng);
    p.b = Tensor<T>::zeros({classes});
    return p;
  }
};

namespace detail {

template <typename T>
typename Tape<T>::NodeId bind(Tape<T>& tape, Tensor<T>& param, const std::string& name, bool decay,
                              ParamBindings<T>* bindings) {
  const bool requires_grad = bindings != nullptr;
  const auto id = tape.leaf(param, requires_grad);
  if (bindings) bindings->push_back({name, &param, id, decay});
  return id;
}

}  // namespace detail

/// Builds the encoder graph. With `bindings` null the pass is inference-only
/// (no gradients recorded; frozen-encoder probes use this). Both views of a
/// pair must go through the same EncoderParams instance: the weights live
/// outside the tape and are bound once per batch.
template <typename T>
typename Tape<T>::NodeId encoder_forward(Tape<T>& tape, EncoderParams<T>& params,
                                         typename Tape<T>::NodeId input, bool train,
                                         std::type_identity_t<ParamBindings<T>*> bindings) {
  auto x = input;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    auto& blk = params.blocks[i];
    const std::string prefix = "encoder.block" + std::to_string(i) + ".";
    const auto w = detail::bind(tape, blk.w, prefix + "conv.w", true, bindings);
    const auto b = detail::bind(tape, blk.b, prefix + "conv.b", true, bindings);
    const auto gamma = detail::bind(tape, blk.gamma, prefix + "bn.gamma", false, bindings);
    const auto beta = detail::bind(tape, blk.beta, prefix + "bn.beta", false, bindings);

    const auto conv = tape.conv2d(x, w, b);
    const auto act = tape.batchnorm_relu(conv, gamma, beta, &blk.bn, train);
    tape.release_value(conv);  // bn backward reads its cached xhat, not conv's output
    const auto pooled = tape.maxpool2x2(act);
    tape.release_value(act);
    x = pooled;
  }
  return params.cfg.pool == "avg" ? tape.global_avgpool(x) : tape.global_maxpool(x);
}

/// Projection head: dense -> batch-norm -> relu -> dense -> row L2-normalize.
template <typename T>
typename Tape<T>::NodeId head_forward(Tape<T>& tape, HeadParams<T>& params,
                                      typename Tape<T>::NodeId h, bool train,
                                      std::type_identity_t<ParamBindings<T>*> bindings) {
  const auto w1 = detail::bind(tape, params.w1, "head.dense1.w", true, bindings);
  const auto b1 = detail::bind(tape, params.b1, "head.dense1.b", true, bindings);
  const auto gamma = detail::bind(tape, params.gamma, "head.bn.gamma", false, bindings);
  const auto beta = detail::bind(tape, params.beta, "head.bn.beta", false, bindings);
  const auto w2 = detail::bind(tape, params.w2, "head.dense2.w", true, bindings);
  const auto b2 = detail::bind(tape, params.b2, "head.dense2.b", true, bindings);

  const auto d1 = tape.dense(h, w1, b1);
  const auto bn = tape.batchnorm(d1, gamma, beta, &params.bn, train);
  const auto act = tape.relu(bn);
  const auto d2 = tape.dense(act, w2, b2);
  return tape.l2_normalize_rows(d2);
}

/// Linear classifier on top of the embedding.
template <typename T>
typename Tape<T>::NodeId classifier_forward(Tape<T>& tape, ClassifierParams<T>& params,
                                            typename Tape<T>::NodeId h,
                                            std::type_identity_t<ParamBindings<T>*> bindings) {
  const auto w = detail::bind(tape, params.w, "classifier.w", true, bindings);
  const auto b = detail::bind(tape, params.b, "classifier.b", true, bindings);
  return tape.dense(h, w, b);
}

/// Assembles patches into a [B,1,96,101] batch, applying the encoder's fixed
/// input normalization.
template <typename T>
Tensor<T> patches_to_tensor(std::span<const TFPatch> patches, const EncoderConfig& cfg) {
  const int B = static_cast<int>(patches.size());
  Tensor<T> out({B, 1, TFPatch::kBands, TFPatch::kFrames});
  std::int64_t k = 0;
  for (const TFPatch& p : patches) {
    for (int i = 0; i < TFPatch::kCells; ++i) {
      out[k++] = static_cast<T>((p.values[static_cast<std::size_t>(i)] - cfg.input_center) /
                                cfg.input_scale);
    }
  }
  return out;
}

/// Eval-mode embeddings h for a batch, chunked to bound memory.
template <typename T>
Tensor<T> encoder_infer(EncoderParams<T>& params, const Tensor<T>& batch, int chunk = 64) {
  const int B = batch.dim(0);
  const std::int64_t sample = batch.numel() / std::max(B, 1);
  Tensor<T> out({B, params.embed_dim()});
  for (int start = 0; start < B; start += chunk) {
    const int n = std::min(chunk, B - start);
    Tensor<T> piece({n, batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy(batch.ptr() + start * sample, batch.ptr() + (start + n) * sample, piece.ptr());
    Tape<T> tape;
    const auto in = tape.leaf(std::move(piece), false);
    const auto h = encoder_forward(tape, params, in, /*train=*/false, nullptr);
    const Tensor<T>& hv = tape.value(h);
    std::copy(hv.ptr(), hv.ptr() + hv.numel(), out.ptr() + static_cast<std::int64_t>(start) * params.embed_dim());
  }
  return out;
}

/// Eval-mode normalized projections z for a batch of embeddings.
template <typename T>
Tensor<T> head_infer(HeadParams<T>& params, const Tensor<T>& h) {
  Tape<T> tape;
  const auto in = tape.leaf(h, false);
  const auto z = head_forward(tape, params, in, /*train=*/false, nullptr);
  return tape.value(z);
}

/// Eval-mode logits.
template <typename T>
Tensor<T> classifier_infer(ClassifierParams<T>& params, const Tensor<T>& h) {
  Tape<T> tape;
  const auto in = tape.leaf(h, false);
  const auto logits = classifier_forward(tape, params, in, nullptr);
  return tape.value(logits);
}

}  // namespace soundrep
