#pragma once

#include "nova/tensor.hpp"

namespace nova {

// Mean flow magnitude between consecutive frames via exhaustive 8x8
// block matching (SAD, search radius 3). Flat blocks carry no motion
// evidence and are excluded from the mean.
double motion_score(const Tensor<float>& video);

// 10*log10(1/MSE) for videos with values in [0,1], capped at 99 dB.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

}  // namespace nova
