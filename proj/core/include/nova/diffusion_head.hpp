#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "nova/blocks.hpp"
#include "nova/embeddings.hpp"
#include "nova/params.hpp"
#include "nova/schedules.hpp"
#include "nova/tensor.hpp"

namespace nova {

// Per-token denoising MLP. Residual blocks of width w, each modulated by an
// adaptive normalization conditioned on the timestep embedding plus the
// backbone output z for that token.
template <typename T>
struct DenoiseMlp {
  std::size_t channels = 0;   // token channel count c
  std::size_t cond_dim = 0;   // backbone width d
  std::size_t width = 0;      // w
  std::size_t schedule_T = 0;

  Linear<T> in_proj;          // c -> w
  Linear<T> t_fc1, t_fc2;     // timestep embedding MLP, w -> w -> w
  Linear<T> z_proj;           // d -> w
  struct Block {
    Linear<T> ada;            // w -> 2w, near-zero init
    Linear<T> fc1, fc2;       // w -> w -> w
  };
  std::vector<Block> blocks;
  Linear<T> ada_out;          // w -> 2w
  Linear<T> out_proj;         // w -> c, small init
  Linear<T> skip;             // c -> c, identity init; keeps the estimate
                              // magnitude-aware where the noise dominates

  static DenoiseMlp init(std::size_t channels, std::size_t cond_dim,
                         std::size_t width, std::size_t depth,
                         std::size_t schedule_T, Rng& rng) {
    if (width % 2 != 0) throw ContractError("denoise head: width must be even");
    DenoiseMlp m;
    m.channels = channels;
    m.cond_dim = cond_dim;
    m.width = width;
    m.schedule_T = schedule_T;
    m.in_proj = Linear<T>::init(channels, width, rng);
    m.t_fc1 = Linear<T>::init(width, width, rng);
    m.t_fc2 = Linear<T>::init(width, width, rng);
    m.z_proj = Linear<T>::init(cond_dim, width, rng);
    for (std::size_t i = 0; i < depth; ++i)
      m.blocks.push_back(Block{Linear<T>::init(width, 2 * width, rng, 0.02),
                               Linear<T>::init(width, width, rng),
                               Linear<T>::init(width, width, rng)});
    m.ada_out = Linear<T>::init(width, 2 * width, rng, 0.02);
    m.out_proj = Linear<T>::init(width, channels, rng, 0.02);
    m.skip = Linear<T>::init(channels, channels, rng, 0.0);
    for (std::size_t i = 0; i < channels; ++i)
      m.skip.weight.data()[i * channels + i] = T(1);
    return m;
  }

  Tensor<T> timestep_rows(const std::vector<std::size_t>& t) const {
    Tensor<T> rows = Tensor<T>::zeros({t.size(), width});
    for (std::size_t i = 0; i < t.size(); ++i) {
      Tensor<T> e = sincos_1d<T>(t[i], width);
      std::copy(e.data(), e.data() + width, rows.data() + i * width);
    }
    return rows;
  }

  // eps estimate for a batch of tokens; x_t [N x c], t per row, z [N x d].
  Tensor<T> eps_predict(Tape<T>* tape, const Tensor<T>& x_t,
                        const std::vector<std::size_t>& t,
                        const Tensor<T>& z) const {
    if (x_t.rows() != t.size() || x_t.rows() != z.rows())
      throw ShapeError("eps_predict: row counts disagree");
    if (x_t.cols() != channels || z.cols() != cond_dim)
      throw ShapeError("eps_predict: channel/condition width mismatch");
    for (std::size_t ti : t)
      if (ti > schedule_T) throw ContractError("eps_predict: t out of range");

    Tensor<T> temb = timestep_rows(t);
    temb = t_fc2.forward(tape, silu(tape, t_fc1.forward(tape, temb)));
    Tensor<T> cond = add(tape, temb, z_proj.forward(tape, z));
    Tensor<T> cond_act = silu(tape, cond);

    Tensor<T> h = in_proj.forward(tape, x_t);
    T eps = static_cast<T>(1e-6);
    for (const auto& b : blocks) {
      Tensor<T> gb = b.ada.forward(tape, cond_act);
      Tensor<T> gamma = slice_cols(tape, gb, 0, width);
      Tensor<T> beta = slice_cols(tape, gb, width, width);
      Tensor<T> hn = normalize_rows(tape, h, eps);
      Tensor<T> moded = add(tape, add(tape, hn, mul(tape, hn, gamma)), beta);
      Tensor<T> u = b.fc2.forward(tape, silu(tape, b.fc1.forward(tape, moded)));
      h = add(tape, h, u);
    }
    Tensor<T> gb = ada_out.forward(tape, cond_act);
    Tensor<T> gamma = slice_cols(tape, gb, 0, width);
    Tensor<T> beta = slice_cols(tape, gb, width, width);
    Tensor<T> hn = normalize_rows(tape, h, eps);
    Tensor<T> moded = add(tape, add(tape, hn, mul(tape, hn, gamma)), beta);
    return add(tape, out_proj.forward(tape, moded), skip.forward(tape, x_t));
  }

  void register_params(ParamSet<T>& ps, const std::string& prefix) const {
    in_proj.register_params(ps, prefix + ".in_proj");
    t_fc1.register_params(ps, prefix + ".t_fc1");
    t_fc2.register_params(ps, prefix + ".t_fc2");
    z_proj.register_params(ps, prefix + ".z_proj");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      std::string p = prefix + ".block" + std::to_string(i);
      blocks[i].ada.register_params(ps, p + ".ada");
      blocks[i].fc1.register_params(ps, p + ".fc1");
      blocks[i].fc2.register_params(ps, p + ".fc2");
    }
    ada_out.register_params(ps, prefix + ".ada_out");
    out_proj.register_params(ps, prefix + ".out_proj");
    skip.register_params(ps, prefix + ".skip");
  }
};

// Denoising loss over a batch of tokens: for each of `draws` independent
// (t, eps) samples per token, the squared error between the true and
// estimated noise, averaged over tokens and draws (summed over channels).
template <typename T>
Tensor<T> diffusion_loss(Tape<T>* tape, const DenoiseMlp<T>& head,
                         const Tensor<T>& x0, const Tensor<T>& z, Rng& rng,
                         const NoiseSchedule& sched, std::size_t draws = 4) {
  std::size_t n = x0.rows(), c = x0.cols();
  if (z.rows() != n) throw ShapeError("diffusion_loss: token/condition mismatch");
  if (n == 0) throw ContractError("diffusion_loss: empty token batch");

  std::size_t total = draws * n;
  Tensor<T> x_t = Tensor<T>::zeros({total, c});
  Tensor<T> eps = Tensor<T>::zeros({total, c});
  std::vector<std::size_t> ts(total);
  std::vector<std::size_t> rep(total);
  for (std::size_t d = 0; d < draws; ++d)
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = d * n + i;
      rep[r] = i;
      std::size_t t = 1 + rng.index(sched.steps);
      ts[r] = t;
      T sa = static_cast<T>(std::sqrt(sched.alpha_bar[t]));
      T sb = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar[t]));
      for (std::size_t j = 0; j < c; ++j) {
        T e = static_cast<T>(rng.normal());
        eps.data()[r * c + j] = e;
        x_t.data()[r * c + j] = sa * x0.data()[i * c + j] + sb * e;
      }
    }

  Tensor<T> z_rep = gather_rows(tape, z, rep);
  Tensor<T> pred = head.eps_predict(tape, x_t, ts, z_rep);
  Tensor<T> diff = sub(tape, pred, eps);
  return scale(tape, sum(tape, mul(tape, diff, diff)),
               T(1) / static_cast<T>(total));
}

// Classifier-free guidance combination. s = 1 short-circuits to the plain
// conditional prediction (bit-equal by the guidance identity).
template <typename T, typename Predict>
Tensor<T> cfg_eps(Predict&& predict, const Tensor<T>& x_t,
                  const std::vector<std::size_t>& t, const Tensor<T>& z_cond,
                  const Tensor<T>& z_null, double s) {
  if (s == 1.0) return predict(x_t, t, z_cond);
  Tensor<T> ec = predict(x_t, t, z_cond);
  Tensor<T> en = predict(x_t, t, z_null);
  Tensor<T> out = Tensor<T>::zeros(ec.shape());
  T sv = static_cast<T>(s);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = en.data()[i] + sv * (ec.data()[i] - en.data()[i]);
  return out;
}

// Ancestral sampler over the strided schedule; starts from standard normal
// noise and applies the reverse-step recurrence with guided noise estimates.
// The update is evaluated through the denoised-sample form
//   x0_hat = (x_t - sqrt(1-ab_t) eps_hat) / sqrt(ab_t)
//   x_{t-1} = sqrt(ab_{t-1}) (1-a_t)/(1-ab_t) x0_hat
//           + sqrt(a_t) (1-ab_{t-1})/(1-ab_t) x_t + sigma_t eps,
// which is algebraically identical to
//   x_{t-1} = (x_t - (1-a_t)/sqrt(1-ab_t) eps_hat)/sqrt(a_t) + sigma_t eps.
// When `clip_abs` > 0 the x0 estimate is clamped to that range first; for
// data with known bounds this pins the reverse process to the data scale
// and leaves in-range estimates untouched. The final jump lands on t = 0
// with zero noise by construction. The predictor is any callable
// (x_t, t, z) -> eps so oracle predictors can be substituted in tests.
template <typename T, typename Predict>
Tensor<T> sample_tokens_with(Predict&& predict, const Tensor<T>& z_cond,
                             const Tensor<T>& z_null, const SubSchedule& ss,
                             double cfg_scale, std::size_t channels, Rng& rng,
                             double clip_abs = 0.0) {
  std::size_t n = z_cond.rows();
  std::size_t steps = ss.alpha.size();
  Tensor<T> x = Tensor<T>::zeros({n, channels});
  for (std::size_t i = 0; i < x.size(); ++i)
    x.data()[i] = static_cast<T>(rng.normal());

  for (std::size_t i = steps; i >= 1; --i) {
    std::vector<std::size_t> ts(n, ss.times[i]);
    Tensor<T> e = cfg_eps<T>(predict, x, ts, z_cond, z_null, cfg_scale);
    double a = ss.alpha[i - 1];
    double ab = ss.alpha_bar[i];
    double ab_prev = ss.alpha_bar[i - 1];
    T inv_sab = static_cast<T>(1.0 / std::sqrt(ab));
    T snoise = static_cast<T>(std::sqrt(1.0 - ab));
    T c0 = static_cast<T>(std::sqrt(ab_prev) * (1.0 - a) / (1.0 - ab));
    T cx = static_cast<T>(std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab));
    T sig = static_cast<T>(ss.sigma[i - 1]);
    T bound = static_cast<T>(clip_abs);
    for (std::size_t r = 0; r < x.size(); ++r) {
      T x0_hat = inv_sab * (x.data()[r] - snoise * e.data()[r]);
      if (clip_abs > 0.0) x0_hat = std::clamp(x0_hat, -bound, bound);
      x.data()[r] = c0 * x0_hat + cx * x.data()[r];
    }
    if (sig > T(0))
      for (std::size_t r = 0; r < x.size(); ++r)
        x.data()[r] += sig * static_cast<T>(rng.normal());
  }
  return x;
}

template <typename T>
Tensor<T> sample_tokens(const DenoiseMlp<T>& head, const Tensor<T>& z_cond,
                        const Tensor<T>& z_null, const SubSchedule& ss,
                        double cfg_scale, Rng& rng, double clip_abs = 0.0) {
  auto predict = [&](const Tensor<T>& x, const std::vector<std::size_t>& t,
                     const Tensor<T>& z) {
    return head.eps_predict(nullptr, x, t, z);
  };
  return sample_tokens_with<T>(predict, z_cond, z_null, ss, cfg_scale,
                               head.channels, rng, clip_abs);
}

}  // namespace nova
