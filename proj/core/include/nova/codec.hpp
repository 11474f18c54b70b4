#pragma once

#include "nova/tensor.hpp"

namespace nova {

// Exactly invertible space/time-to-depth codec standing in for a learned
// video autoencoder: groups of stride_t frames and stride_s x stride_s
// pixels are packed into channels. Lossless by construction, so decode is a
// bit-exact inverse of encode.
//
// Channel packing order within a latent cell: (dt, dy, dx, c).
template <typename T>
Tensor<T> codec_encode(const Tensor<T>& video, std::size_t stride_t,
                       std::size_t stride_s) {
  if (video.rank() != 4) throw ShapeError("codec_encode: [T x H x W x c] expected");
  std::size_t Tn = video.dim(0), H = video.dim(1), W = video.dim(2),
              c = video.dim(3);
  if (stride_t == 0 || stride_s == 0 || Tn % stride_t != 0 ||
      H % stride_s != 0 || W % stride_s != 0)
    throw ShapeError("codec_encode: dimensions not divisible by strides");
  std::size_t lt = Tn / stride_t, lh = H / stride_s, lw = W / stride_s;
  std::size_t lc = c * stride_t * stride_s * stride_s;
  Tensor<T> latent = Tensor<T>::zeros({lt, lh, lw, lc});
  for (std::size_t t = 0; t < lt; ++t)
    for (std::size_t y = 0; y < lh; ++y)
      for (std::size_t x = 0; x < lw; ++x) {
        T* cell = latent.data() + ((t * lh + y) * lw + x) * lc;
        for (std::size_t dt = 0; dt < stride_t; ++dt)
          for (std::size_t dy = 0; dy < stride_s; ++dy)
            for (std::size_t dx = 0; dx < stride_s; ++dx) {
              const T* src = video.data() +
                             (((t * stride_t + dt) * H + y * stride_s + dy) * W +
                              x * stride_s + dx) *
                                 c;
              T* dst = cell + ((dt * stride_s + dy) * stride_s + dx) * c;
              std::copy(src, src + c, dst);
            }
      }
  return latent;
}

template <typename T>
Tensor<T> codec_decode(const Tensor<T>& latent, std::size_t stride_t,
                       std::size_t stride_s, std::size_t channels) {
  if (latent.rank() != 4)
    throw ShapeError("codec_decode: [T x H x W x c] expected");
  std::size_t lt = latent.dim(0), lh = latent.dim(1), lw = latent.dim(2),
              lc = latent.dim(3);
  if (lc != channels * stride_t * stride_s * stride_s)
    throw ShapeError("codec_decode: malformed channel count");
  std::size_t Tn = lt * stride_t, H = lh * stride_s, W = lw * stride_s;
  Tensor<T> video = Tensor<T>::zeros({Tn, H, W, channels});
  for (std::size_t t = 0; t < lt; ++t)
    for (std::size_t y = 0; y < lh; ++y)
      for (std::size_t x = 0; x < lw; ++x) {
        const T* cell = latent.data() + ((t * lh + y) * lw + x) * lc;
        for (std::size_t dt = 0; dt < stride_t; ++dt)
          for (std::size_t dy = 0; dy < stride_s; ++dy)
            for (std::size_t dx = 0; dx < stride_s; ++dx) {
              const T* src = cell + ((dt * stride_s + dy) * stride_s + dx) * channels;
              T* dst = video.data() +
                       (((t * stride_t + dt) * H + y * stride_s + dy) * W +
                        x * stride_s + dx) *
                           channels;
              std::copy(src, src + channels, dst);
            }
      }
  return video;
}

}  // namespace nova
