#pragma once

#include <utility>

#include "nova/params.hpp"
#include "nova/tensor.hpp"

namespace nova {

// Scaling-and-shift conditioning layer: a low-rank two-layer network maps
// the temporal output targeting frame f into per-channel (gamma, beta),
// which affine the normalized anchor feature set into the indicator
// features for that frame. The up-projection starts at zero so the layer is
// the identity (gamma = 1, beta = 0) at initialization, and the first frame
// is pinned to the identity affine regardless of what the network computes.
template <typename T>
struct ScaleShift {
  Tensor<T> down;  // [d x r]
  Tensor<T> up;    // [r x 2d], zero-initialized
  std::size_t rank = 0;
  T eps = static_cast<T>(1e-6);

  static ScaleShift init(std::size_t d, std::size_t rank, T eps, Rng& rng) {
    if (rank < 1 || rank > d)
      throw ContractError("scale_shift: rank must be in [1, d]");
    ScaleShift s;
    T std_w = static_cast<T>(std::sqrt(2.0 / static_cast<double>(d)));
    s.down = Tensor<T>::randn({d, rank}, rng, std_w, true);
    s.up = Tensor<T>::zeros({rank, 2 * d}, true);
    s.rank = rank;
    s.eps = eps;
    return s;
  }

  // h_f: [M x d] temporal output slice targeting frame f.
  std::pair<Tensor<T>, Tensor<T>> gamma_beta(Tape<T>* tape,
                                             const Tensor<T>& h_f) const {
    std::size_t d = h_f.cols();
    Tensor<T> mid = silu(tape, matmul(tape, h_f, down));
    Tensor<T> gb = matmul(tape, mid, up);  // [M x 2d]
    Tensor<T> gamma = add_rowwise(tape, slice_cols(tape, gb, 0, d),
                                  Tensor<T>::full({d}, T(1)));
    Tensor<T> beta = slice_cols(tape, gb, d, d);
    return {gamma, beta};
  }

  // S'_f = gamma * normalize(anchor) + beta; frame 1 bypasses the affine
  // entirely so its output is bit-equal to normalize(anchor).
  Tensor<T> apply(Tape<T>* tape, const Tensor<T>& anchor,
                  const Tensor<T>& gamma, const Tensor<T>& beta,
                  std::size_t frame_index) const {
    if (frame_index == 0) throw ContractError("scale_shift: frames are 1-based");
    Tensor<T> normed = normalize_rows(tape, anchor, eps);
    if (frame_index == 1) return normed;
    detail::require_same_shape(normed, gamma, "scale_shift.apply");
    detail::require_same_shape(normed, beta, "scale_shift.apply");
    return add(tape, mul(tape, gamma, normed), beta);
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    ps.add(prefix + ".down", down);
    ps.add(prefix + ".up", up);
  }
};

}  // namespace nova
