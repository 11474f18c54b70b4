#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nova/tensor.hpp"

namespace nova {

// Fixed sinusoidal embedding: first half sin(pos / 10000^(2i/d)), second
// half the matching cos. Sin-half/cos-half layout, not interleaved.
template <typename T>
Tensor<T> sincos_1d(std::size_t pos, std::size_t d) {
  if (d % 2 != 0) throw ContractError("sincos_1d: dimension must be even");
  std::vector<T> v(d);
  std::size_t half = d / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                        static_cast<double>(d));
    double a = static_cast<double>(pos) * freq;
    v[i] = static_cast<T>(std::sin(a));
    v[half + i] = static_cast<T>(std::cos(a));
  }
  return Tensor<T>({d}, std::move(v));
}

// Grid embedding in raster order: row-index embedding in the first d/2
// dims, column-index embedding in the last d/2.
template <typename T>
Tensor<T> sincos_2d(std::size_t h, std::size_t w, std::size_t d) {
  if (d % 4 != 0)
    throw ContractError("sincos_2d: dimension must be divisible by 4");
  std::size_t half = d / 2;
  std::vector<Tensor<T>> row_emb, col_emb;
  for (std::size_t r = 0; r < h; ++r) row_emb.push_back(sincos_1d<T>(r, half));
  for (std::size_t c = 0; c < w; ++c) col_emb.push_back(sincos_1d<T>(c, half));
  Tensor<T> out = Tensor<T>::zeros({h * w, d});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      T* dst = out.data() + (r * w + c) * d;
      std::copy(row_emb[r].data(), row_emb[r].data() + half, dst);
      std::copy(col_emb[c].data(), col_emb[c].data() + half, dst + half);
    }
  return out;
}

// Clamped bucket index for a nonnegative motion score.
inline std::size_t motion_bucket(double value, std::size_t buckets,
                                 double width) {
  if (value < 0.0) throw ContractError("motion_bucket: negative motion score");
  if (buckets == 0 || width <= 0.0)
    throw ContractError("motion_bucket: invalid quantization");
  double b = std::floor(value / width);
  if (b >= static_cast<double>(buckets - 1))
    return buckets - 1;
  return static_cast<std::size_t>(b);
}

// Rearranges a latent frame grid [H x W x c] into non-overlapping
// stride x stride patches, raster order, each flattened to stride^2 * c
// channels. Pure data movement; the projection to model width is a separate
// learned layer.
template <typename T>
Tensor<T> patchify_frame(const Tensor<T>& frame, std::size_t stride) {
  if (frame.rank() != 3) throw ShapeError("patchify_frame: [H x W x c] expected");
  std::size_t H = frame.dim(0), W = frame.dim(1), c = frame.dim(2);
  if (stride == 0 || H % stride != 0 || W % stride != 0)
    throw ShapeError("patchify_frame: spatial dims not divisible by stride");
  std::size_t gh = H / stride, gw = W / stride;
  std::size_t pc = stride * stride * c;
  Tensor<T> out = Tensor<T>::zeros({gh * gw, pc});
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px) {
      T* dst = out.data() + (py * gw + px) * pc;
      for (std::size_t dy = 0; dy < stride; ++dy)
        for (std::size_t dx = 0; dx < stride; ++dx) {
          const T* src =
              frame.data() + ((py * stride + dy) * W + (px * stride + dx)) * c;
          std::copy(src, src + c, dst + (dy * stride + dx) * c);
        }
    }
  return out;
}

// Inverse of patchify_frame.
template <typename T>
Tensor<T> unpatchify_frame(const Tensor<T>& tokens, std::size_t gh,
                           std::size_t gw, std::size_t stride, std::size_t c) {
  std::size_t pc = stride * stride * c;
  if (tokens.rank() != 2 || tokens.dim(0) != gh * gw || tokens.dim(1) != pc)
    throw ShapeError("unpatchify_frame: token grid mismatch");
  Tensor<T> out = Tensor<T>::zeros({gh * stride, gw * stride, c});
  std::size_t W = gw * stride;
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px) {
      const T* src = tokens.data() + (py * gw + px) * pc;
      for (std::size_t dy = 0; dy < stride; ++dy)
        for (std::size_t dx = 0; dx < stride; ++dx) {
          T* dst =
              out.data() + ((py * stride + dy) * W + (px * stride + dx)) * c;
          std::copy(src + (dy * stride + dx) * c, src + (dy * stride + dx + 1) * c,
                    dst);
        }
    }
  return out;
}

// Learnable patch embedding: patchify followed by a linear projection to the
// model width. Operates on a [T x H x W x c] latent clip, one frame at a time.
template <typename T>
struct PatchEmbed {
  Tensor<T> weight;  // [stride^2*c x d]
  Tensor<T> bias;    // [d]
  std::size_t stride = 1;

  static PatchEmbed init(std::size_t in_channels, std::size_t stride,
                         std::size_t d, Rng& rng) {
    PatchEmbed pe;
    std::size_t pc = stride * stride * in_channels;
    T std_w = static_cast<T>(std::sqrt(2.0 / static_cast<double>(pc)));
    pe.weight = Tensor<T>::randn({pc, d}, rng, std_w, true);
    pe.bias = Tensor<T>::zeros({d}, true);
    pe.stride = stride;
    return pe;
  }

  Tensor<T> forward_tokens(Tape<T>* tape, const Tensor<T>& tokens) const {
    return add_rowwise(tape, matmul(tape, tokens, weight), bias);
  }

  // [T x H x W x c] -> per-frame token embeddings [M x d]
  std::vector<Tensor<T>> forward_clip(Tape<T>* tape,
                                      const Tensor<T>& latent) const {
    if (latent.rank() != 4)
      throw ShapeError("patch_embed: [T x H x W x c] expected");
    std::size_t F = latent.dim(0), H = latent.dim(1), W = latent.dim(2),
                c = latent.dim(3);
    std::vector<Tensor<T>> out;
    out.reserve(F);
    for (std::size_t f = 0; f < F; ++f) {
      Tensor<T> frame({H, W, c},
                      std::vector<T>(latent.data() + f * H * W * c,
                                     latent.data() + (f + 1) * H * W * c));
      out.push_back(forward_tokens(tape, patchify_frame(frame, stride)));
    }
    return out;
  }
};

}  // namespace nova
