#include "nova/metrics.hpp"

#include <cmath>

namespace nova {

namespace {

constexpr std::size_t kBlock = 8;
constexpr int kRadius = 3;

double block_sad(const float* a, const float* b, std::size_t W, std::size_t c) {
  double sad = 0.0;
  for (std::size_t y = 0; y < kBlock; ++y)
    for (std::size_t x = 0; x < kBlock; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        sad += std::abs(static_cast<double>(a[(y * W + x) * c + ch]) -
                        static_cast<double>(b[(y * W + x) * c + ch]));
  return sad;
}

bool block_flat(const float* a, std::size_t W, std::size_t c) {
  float lo = a[0], hi = a[0];
  for (std::size_t y = 0; y < kBlock; ++y)
    for (std::size_t x = 0; x < kBlock; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        float v = a[(y * W + x) * c + ch];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  return hi - lo < 1e-6f;
}

}  // namespace

double motion_score(const Tensor<float>& video) {
  if (video.rank() != 4) throw ShapeError("motion_score: [T x H x W x c] expected");
  std::size_t T = video.dim(0), H = video.dim(1), W = video.dim(2),
              c = video.dim(3);
  if (T < 2) throw ContractError("motion_score: need at least two frames");

  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const float* cur = video.data() + t * H * W * c;
    const float* nxt = video.data() + (t + 1) * H * W * c;
    for (std::size_t by = 0; by + kBlock <= H; by += kBlock)
      for (std::size_t bx = 0; bx + kBlock <= W; bx += kBlock) {
        const float* blk = cur + (by * W + bx) * c;
        if (block_flat(blk, W, c)) continue;
        int best_dy = 0, best_dx = 0;
        double best = block_sad(blk, nxt + (by * W + bx) * c, W, c);
        for (int dy = -kRadius; dy <= kRadius; ++dy)
          for (int dx = -kRadius; dx <= kRadius; ++dx) {
            if (dy == 0 && dx == 0) continue;
            long ny = static_cast<long>(by) + dy;
            long nx = static_cast<long>(bx) + dx;
            if (ny < 0 || nx < 0 || ny + kBlock > H || nx + kBlock > W)
              continue;
            double sad = block_sad(blk, nxt + (ny * W + nx) * c, W, c);
            if (sad < best) {
              best = sad;
              best_dy = dy;
              best_dx = dx;
            }
          }
        total += std::sqrt(static_cast<double>(best_dy * best_dy +
                                               best_dx * best_dx));
        ++counted;
      }
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch");
  if (a.size() == 0) throw ShapeError("psnr: empty input");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

}  // namespace nova
