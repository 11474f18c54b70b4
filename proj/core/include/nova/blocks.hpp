#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nova/attention.hpp"
#include "nova/params.hpp"
#include "nova/tensor.hpp"

namespace nova {

enum class NormPlacement {
  kPreNorm,            // x + f(norm(x))
  kPostNormAfterRes,   // norm(x + f(x))
  kPostNormBeforeRes,  // x + norm(f(x))   <- default
};

inline NormPlacement parse_norm_placement(const std::string& s) {
  if (s == "pre_norm") return NormPlacement::kPreNorm;
  if (s == "post_norm_after_res") return NormPlacement::kPostNormAfterRes;
  if (s == "post_norm_before_res") return NormPlacement::kPostNormBeforeRes;
  throw ContractError("unknown norm_placement: " + s);
}

inline std::string to_string(NormPlacement p) {
  switch (p) {
    case NormPlacement::kPreNorm: return "pre_norm";
    case NormPlacement::kPostNormAfterRes: return "post_norm_after_res";
    case NormPlacement::kPostNormBeforeRes: return "post_norm_before_res";
  }
  return "?";
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  static Linear init(std::size_t in, std::size_t out, Rng& rng,
                     double gain = 1.0) {
    Linear l;
    T std_w = static_cast<T>(gain * std::sqrt(2.0 / static_cast<double>(in)));
    l.weight = Tensor<T>::randn({in, out}, rng, std_w, true);
    l.bias = Tensor<T>::zeros({out}, true);
    return l;
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const {
    return add_rowwise(tape, matmul(tape, x, weight), bias);
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    ps.add(prefix + ".weight", weight);
    ps.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = static_cast<T>(1e-6);

  static LayerNorm init(std::size_t d, T eps) {
    LayerNorm n;
    n.gain = Tensor<T>::full({d}, T(1), true);
    n.bias = Tensor<T>::zeros({d}, true);
    n.eps = eps;
    return n;
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const {
    return layer_norm(tape, x, gain, bias, eps);
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    ps.add(prefix + ".gain", gain);
    ps.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  std::size_t heads = 8;

  static MultiHeadAttention init(std::size_t d, std::size_t heads, Rng& rng) {
    if (d % heads != 0)
      throw ContractError("attention: width not divisible by head count");
    MultiHeadAttention a;
    a.wq = Linear<T>::init(d, d, rng);
    a.wk = Linear<T>::init(d, d, rng);
    a.wv = Linear<T>::init(d, d, rng);
    // Output gain compensates the variance lost to softmax averaging.
    a.wo = Linear<T>::init(d, d, rng, 2.0);
    a.heads = heads;
    return a;
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x,
                    const BoolMask& mask) const {
    std::size_t L = x.rows(), d = x.cols(), dh = d / heads;
    Tensor<T> q = reshape(tape, wq.forward(tape, x), {L, heads, dh});
    Tensor<T> k = reshape(tape, wk.forward(tape, x), {L, heads, dh});
    Tensor<T> v = reshape(tape, wv.forward(tape, x), {L, heads, dh});
    Tensor<T> o = attend(tape, q, k, v, mask);
    return wo.forward(tape, reshape(tape, o, {L, d}));
  }

  // Incremental step over one new block; appends this block's keys/values.
  Tensor<T> forward_cached(const Tensor<T>& x_new, KvCache<T>& cache) const {
    std::size_t B = x_new.rows(), d = x_new.cols(), dh = d / heads;
    Tensor<T> q = reshape<T>(nullptr, wq.forward(nullptr, x_new), {B, heads, dh});
    Tensor<T> k = reshape<T>(nullptr, wk.forward(nullptr, x_new), {B, heads, dh});
    Tensor<T> v = reshape<T>(nullptr, wv.forward(nullptr, x_new), {B, heads, dh});
    Tensor<T> o = attend_cached(q, cache, k, v);
    return wo.forward(nullptr, reshape<T>(nullptr, o, {B, d}));
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    wq.register_params(ps, prefix + ".wq");
    wk.register_params(ps, prefix + ".wk");
    wv.register_params(ps, prefix + ".wv");
    wo.register_params(ps, prefix + ".wo");
  }
};

template <typename T>
struct FeedForward {
  Linear<T> fc1, fc2;  // d -> 4d -> d

  static FeedForward init(std::size_t d, Rng& rng) {
    FeedForward f;
    f.fc1 = Linear<T>::init(d, 4 * d, rng);
    // Output gain compensates the variance lost to the SiLU nonlinearity.
    f.fc2 = Linear<T>::init(4 * d, d, rng, 2.0);
    return f;
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const {
    return fc2.forward(tape, silu(tape, fc1.forward(tape, x)));
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    fc1.register_params(ps, prefix + ".fc1");
    fc2.register_params(ps, prefix + ".fc2");
  }
};

// Attention + feed-forward with a configurable normalization placement.
// The same placement rule is applied around both sublayers.
template <typename T>
struct TransformerBlock {
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  LayerNorm<T> norm1, norm2;
  NormPlacement placement = NormPlacement::kPostNormBeforeRes;

  static TransformerBlock init(std::size_t d, std::size_t heads,
                               NormPlacement placement, T eps, Rng& rng) {
    TransformerBlock b;
    b.attn = MultiHeadAttention<T>::init(d, heads, rng);
    b.ffn = FeedForward<T>::init(d, rng);
    b.norm1 = LayerNorm<T>::init(d, eps);
    b.norm2 = LayerNorm<T>::init(d, eps);
    b.placement = placement;
    return b;
  }

  template <typename F>
  Tensor<T> sublayer(Tape<T>* tape, const Tensor<T>& x, const LayerNorm<T>& n,
                     F f) const {
    switch (placement) {
      case NormPlacement::kPreNorm:
        return add(tape, x, f(n.forward(tape, x)));
      case NormPlacement::kPostNormAfterRes:
        return n.forward(tape, add(tape, x, f(x)));
      case NormPlacement::kPostNormBeforeRes:
        return add(tape, x, n.forward(tape, f(x)));
    }
    throw ContractError("invalid norm placement");
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x,
                    const BoolMask& mask) const {
    Tensor<T> a = sublayer(tape, x, norm1, [&](const Tensor<T>& u) {
      return attn.forward(tape, u, mask);
    });
    return sublayer(tape, a, norm2,
                    [&](const Tensor<T>& u) { return ffn.forward(tape, u); });
  }

  Tensor<T> forward_cached(const Tensor<T>& x_new, KvCache<T>& cache) const {
    Tensor<T> a = sublayer(nullptr, x_new, norm1, [&](const Tensor<T>& u) {
      return attn.forward_cached(u, cache);
    });
    return sublayer(nullptr, a, norm2, [&](const Tensor<T>& u) {
      return ffn.forward(nullptr, u);
    });
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    attn.register_params(ps, prefix + ".attn");
    ffn.register_params(ps, prefix + ".ffn");
    norm1.register_params(ps, prefix + ".norm1");
    norm2.register_params(ps, prefix + ".norm2");
  }
};

template <typename T>
struct TransformerStack {
  std::vector<TransformerBlock<T>> blocks;

  static TransformerStack init(std::size_t depth, std::size_t d,
                               std::size_t heads, NormPlacement placement,
                               T eps, Rng& rng) {
    if (depth == 0) throw ContractError("stack: depth must be >= 1");
    TransformerStack s;
    s.blocks.reserve(depth);
    for (std::size_t i = 0; i < depth; ++i)
      s.blocks.push_back(TransformerBlock<T>::init(d, heads, placement, eps, rng));
    return s;
  }

  Tensor<T> forward(Tape<T>* tape, Tensor<T> x, const BoolMask& mask) const {
    for (const auto& b : blocks) x = b.forward(tape, x, mask);
    return x;
  }

  // One cache per layer, indexed alongside blocks.
  Tensor<T> forward_cached(Tensor<T> x_new,
                           std::vector<KvCache<T>>& caches) const {
    if (caches.size() != blocks.size())
      throw ContractError("stack: cache count != layer count");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      x_new = blocks[i].forward_cached(x_new, caches[i]);
    return x_new;
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_params(ps, prefix + "." + std::to_string(i));
  }
};

}  // namespace nova
