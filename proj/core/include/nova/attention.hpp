#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nova/tensor.hpp"

namespace nova {

// Block structure of the temporal sequence: a condition prefix (prompt +
// motion tokens) followed by equally meaningful blocks (begin-of-video
// block, then one block per frame).
struct BlockLayout {
  std::size_t prefix_len = 0;
  std::vector<std::size_t> block_sizes;

  std::size_t total() const {
    std::size_t n = prefix_len;
    for (std::size_t b : block_sizes) n += b;
    return n;
  }

  // Prefix rows are block 0; block_sizes[i] is block i+1.
  std::size_t block_of(std::size_t pos) const {
    if (pos < prefix_len) return 0;
    std::size_t off = prefix_len;
    for (std::size_t i = 0; i < block_sizes.size(); ++i) {
      off += block_sizes[i];
      if (pos < off) return i + 1;
    }
    throw ShapeError("BlockLayout: position out of range");
  }

  std::size_t block_start(std::size_t block) const {
    if (block == 0) return 0;
    std::size_t off = prefix_len;
    for (std::size_t i = 0; i + 1 < block; ++i) off += block_sizes[i];
    return off;
  }

  void validate() const {
    for (std::size_t b : block_sizes)
      if (b == 0) throw ContractError("BlockLayout: empty block");
  }
};

// (i, j) is attendable iff block(j) <= block(i): causal across blocks,
// bidirectional within each block, prefix visible to everyone (and only to
// itself).
inline BoolMask build_block_causal_mask(const BlockLayout& layout) {
  layout.validate();
  std::size_t L = layout.total();
  std::vector<std::size_t> block(L);
  for (std::size_t i = 0; i < L; ++i) block[i] = layout.block_of(i);
  BoolMask m(L, L);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      if (block[j] <= block[i]) m.set(i, j, true);
  return m;
}

// Text-art rendering, one row per query position ('#' attendable).
inline std::string render_mask(const BoolMask& m) {
  std::string out;
  out.reserve((m.cols + 1) * m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out += m.at(i, j) ? '#' : '.';
    out += '\n';
  }
  return out;
}

// Multi-head scaled dot-product attention over [L x h x d_h] tensors.
// Heads are contiguous column groups of the flattened [L x h*d_h] layout.
template <typename T>
Tensor<T> attend(Tape<T>* tape, const Tensor<T>& q, const Tensor<T>& k,
                 const Tensor<T>& v, const BoolMask& mask) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
    throw ShapeError("attend: [L x h x d_h] tensors expected");
  std::size_t Lq = q.dim(0), h = q.dim(1), dh = q.dim(2);
  std::size_t Lk = k.dim(0);
  if (k.dim(1) != h || k.dim(2) != dh || v.dim(0) != Lk || v.dim(1) != h ||
      v.dim(2) != dh)
    throw ShapeError("attend: q/k/v head shapes disagree");
  if (mask.rows != Lq || mask.cols != Lk)
    throw ShapeError("attend: mask shape mismatch");

  T inv_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor<T> q2 = reshape(tape, q, {Lq, h * dh});
  Tensor<T> k2 = reshape(tape, k, {Lk, h * dh});
  Tensor<T> v2 = reshape(tape, v, {Lk, h * dh});

  std::vector<Tensor<T>> heads;
  heads.reserve(h);
  for (std::size_t head = 0; head < h; ++head) {
    Tensor<T> qh = slice_cols(tape, q2, head * dh, dh);
    Tensor<T> kh = slice_cols(tape, k2, head * dh, dh);
    Tensor<T> vh = slice_cols(tape, v2, head * dh, dh);
    Tensor<T> scores = scale(tape, matmul_nt(tape, qh, kh), inv_scale);
    Tensor<T> probs = softmax_masked(tape, scores, mask);
    heads.push_back(matmul(tape, probs, vh));
  }
  return reshape(tape, concat_cols(tape, heads), {Lq, h, dh});
}

// Append-only key/value store for one attention layer during incremental
// decoding. Inference-only; tensors are plain values.
template <typename T>
struct KvCache {
  Tensor<T> k, v;  // [filled x h x d_h]
  std::size_t filled = 0;

  void append(const Tensor<T>& k_new, const Tensor<T>& v_new) {
    if (k_new.rank() != 3 || v_new.rank() != 3 ||
        k_new.shape() != v_new.shape())
      throw ShapeError("KvCache: [B x h x d_h] blocks expected");
    if (filled == 0) {
      k = k_new.clone();
      v = v_new.clone();
    } else {
      if (k.dim(1) != k_new.dim(1) || k.dim(2) != k_new.dim(2))
        throw ShapeError("KvCache: head shape changed between appends");
      k = concat_rows<T>(nullptr, {reshape<T>(nullptr, k, {filled, k.dim(1) * k.dim(2)}),
                                   reshape<T>(nullptr, k_new,
                                              {k_new.dim(0), k_new.dim(1) * k_new.dim(2)})});
      v = concat_rows<T>(nullptr, {reshape<T>(nullptr, v, {filled, v.dim(1) * v.dim(2)}),
                                   reshape<T>(nullptr, v_new,
                                              {v_new.dim(0), v_new.dim(1) * v_new.dim(2)})});
      k = reshape<T>(nullptr, k, {filled + k_new.dim(0), k_new.dim(1), k_new.dim(2)});
      v = reshape<T>(nullptr, v, {filled + v_new.dim(0), v_new.dim(1), v_new.dim(2)});
    }
    filled += k_new.dim(0);
  }
};

// Incremental attention for exactly one new block: the block attends to
// everything already cached plus itself (bidirectional within the block).
// Equals attend() over the full sequence restricted to the new rows.
template <typename T>
Tensor<T> attend_cached(const Tensor<T>& q_new, KvCache<T>& cache,
                        const Tensor<T>& k_new, const Tensor<T>& v_new) {
  if (q_new.rank() != 3) throw ShapeError("attend_cached: [B x h x d_h] expected");
  if (k_new.shape() != q_new.shape() || v_new.shape() != q_new.shape())
    throw ShapeError("attend_cached: q/k/v block shapes disagree");
  cache.append(k_new, v_new);
  BoolMask all = BoolMask::all_true(q_new.dim(0), cache.filled);
  return attend<T>(nullptr, q_new, cache.k, cache.v, all);
}

}  // namespace nova
