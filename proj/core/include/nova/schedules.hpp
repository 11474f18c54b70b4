#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "nova/rng.hpp"
#include "nova/tensor.hpp"

namespace nova {

// One frame's decoding plan: a token visit order plus how many tokens each
// set step reveals.
struct MaskPlan {
  std::vector<std::size_t> order;
  std::vector<std::size_t> reveal_counts;
};

// Training-time mask: ratio drawn uniformly from [0.7, 1.0], ceil(r*M)
// uniformly chosen token indices.
inline std::vector<std::size_t> sample_train_mask(std::size_t tokens,
                                                  Rng& rng) {
  if (tokens == 0) throw ContractError("sample_train_mask: empty frame");
  double r = rng.uniform(0.7, 1.0);
  std::size_t count = static_cast<std::size_t>(
      std::ceil(r * static_cast<double>(tokens)));
  count = std::min(count, tokens);
  std::vector<std::size_t> perm = rng.permutation(tokens);
  perm.resize(count);
  std::sort(perm.begin(), perm.end());
  return perm;
}

// Cosine unmasking plan: masked_after(k) = round(M * cos(pi/2 * k/K)) with
// round-half-away-from-zero, repaired so every step reveals at least one
// token (borrowing from the largest later reveal) and the final step leaves
// zero masked.
inline std::vector<std::size_t> cosine_unmask_plan(std::size_t tokens,
                                                   std::size_t steps) {
  if (steps == 0 || steps > tokens)
    throw ContractError("cosine_unmask_plan: need 1 <= K <= M");
  std::vector<std::size_t> masked_after(steps + 1);
  masked_after[0] = tokens;
  for (std::size_t k = 1; k <= steps; ++k) {
    double frac = std::cos(std::numbers::pi / 2.0 * static_cast<double>(k) /
                           static_cast<double>(steps));
    double raw = static_cast<double>(tokens) * frac;
    masked_after[k] = static_cast<std::size_t>(std::floor(raw + 0.5));
  }
  masked_after[steps] = 0;
  for (std::size_t k = 1; k <= steps; ++k)
    masked_after[k] = std::min(masked_after[k], masked_after[k - 1]);

  std::vector<std::size_t> counts(steps);
  for (std::size_t k = 0; k < steps; ++k)
    counts[k] = masked_after[k] - masked_after[k + 1];

  // Repair zero-reveal steps.
  for (std::size_t k = 0; k < steps; ++k) {
    if (counts[k] > 0) continue;
    std::size_t donor = steps;  // prefer the largest later reveal, latest tie
    std::size_t best = 1;
    for (std::size_t j = k + 1; j < steps; ++j)
      if (counts[j] >= best) {
        best = counts[j];
        donor = j;
      }
    if (donor == steps || counts[donor] <= 1) {
      best = 1;
      for (std::size_t j = 0; j < k; ++j)
        if (counts[j] >= best) {
          best = counts[j];
          donor = j;
        }
    }
    if (donor == steps || counts[donor] <= 1)
      throw ContractError("cosine_unmask_plan: cannot repair schedule");
    --counts[donor];
    ++counts[k];
  }
  return counts;
}

inline MaskPlan make_mask_plan(std::size_t tokens, std::size_t steps,
                               Rng& rng) {
  MaskPlan plan;
  plan.order = rng.permutation(tokens);
  plan.reveal_counts = cosine_unmask_plan(tokens, steps);
  return plan;
}

// Diffusion noise schedule. alpha_bar has T+1 entries (t = 0..T) with
// alpha_bar[0] = 1; alpha[t-1] and sigma[t-1] are the per-step quantities
// for t = 1..T. Arrays satisfy alpha_bar[t] = prod alpha[s] by construction.
struct NoiseSchedule {
  std::size_t steps = 0;  // T
  std::vector<double> alpha_bar;
  std::vector<double> alpha;
  std::vector<double> sigma;

  static NoiseSchedule cosine(std::size_t T, double s = 0.008) {
    NoiseSchedule ns = from_alpha_bar_fn(T, [s](double t01) {
      double a = std::cos((t01 + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return a * a;
    });
    return ns;
  }

  static NoiseSchedule linear(std::size_t T) {
    // Classic linear-beta schedule scaled to the step count.
    NoiseSchedule ns;
    ns.steps = T;
    ns.alpha_bar.assign(T + 1, 1.0);
    ns.alpha.resize(T);
    ns.sigma.resize(T);
    double beta0 = 1e-4 * 1000.0 / static_cast<double>(T);
    double beta1 = 0.02 * 1000.0 / static_cast<double>(T);
    for (std::size_t t = 1; t <= T; ++t) {
      double frac = T > 1 ? static_cast<double>(t - 1) /
                                static_cast<double>(T - 1)
                          : 0.0;
      double beta = std::min(beta0 + (beta1 - beta0) * frac, 0.999);
      ns.alpha[t - 1] = 1.0 - beta;
      ns.alpha_bar[t] = ns.alpha_bar[t - 1] * ns.alpha[t - 1];
      ns.sigma[t - 1] = derive_sigma(ns.alpha_bar[t - 1], ns.alpha_bar[t],
                                     ns.alpha[t - 1]);
    }
    return ns;
  }

  // Evenly strided sub-sequence of time indices, endpoints 0 and T.
  std::vector<std::size_t> strided_times(std::size_t count) const {
    if (count == 0 || count > steps)
      throw ContractError("strided_times: need 1 <= steps <= T");
    std::vector<std::size_t> times(count + 1);
    for (std::size_t i = 0; i <= count; ++i)
      times[i] = static_cast<std::size_t>(std::llround(
          static_cast<double>(i) * static_cast<double>(steps) /
          static_cast<double>(count)));
    return times;
  }

 private:
  template <typename Fn>
  static NoiseSchedule from_alpha_bar_fn(std::size_t T, Fn f) {
    if (T == 0) throw ContractError("NoiseSchedule: T must be >= 1");
    NoiseSchedule ns;
    ns.steps = T;
    ns.alpha_bar.assign(T + 1, 1.0);
    ns.alpha.resize(T);
    ns.sigma.resize(T);
    double f0 = f(0.0);
    double prev_raw = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
      double raw = f(static_cast<double>(t) / static_cast<double>(T)) / f0;
      double a = raw / prev_raw;
      a = std::clamp(a, 0.001, 0.9999999);
      prev_raw = raw > 0.0 ? raw : prev_raw * a;
      ns.alpha[t - 1] = a;
      ns.alpha_bar[t] = ns.alpha_bar[t - 1] * a;
      ns.sigma[t - 1] = derive_sigma(ns.alpha_bar[t - 1], ns.alpha_bar[t],
                                     ns.alpha[t - 1]);
    }
    return ns;
  }

  static double derive_sigma(double ab_prev, double ab_cur, double a) {
    if (ab_cur >= 1.0) return 0.0;
    double var = (1.0 - ab_prev) / (1.0 - ab_cur) * (1.0 - a);
    return var > 0.0 ? std::sqrt(var) : 0.0;
  }
};

// Respaced view of a schedule over a strided time subset; index i covers the
// jump tau_{i-1} -> tau_i.
struct SubSchedule {
  std::vector<std::size_t> times;  // tau_0 = 0 .. tau_S = T, ascending
  std::vector<double> alpha_bar;   // alpha_bar[tau_i], size S+1
  std::vector<double> alpha;       // effective per-jump alpha, size S
  std::vector<double> sigma;       // per-jump noise level, size S

  static SubSchedule make(const NoiseSchedule& ns, std::size_t count) {
    SubSchedule ss;
    ss.times = ns.strided_times(count);
    std::size_t S = count;
    ss.alpha_bar.resize(S + 1);
    ss.alpha.resize(S);
    ss.sigma.resize(S);
    for (std::size_t i = 0; i <= S; ++i)
      ss.alpha_bar[i] = ns.alpha_bar[ss.times[i]];
    for (std::size_t i = 1; i <= S; ++i) {
      double a = ss.alpha_bar[i] / ss.alpha_bar[i - 1];
      ss.alpha[i - 1] = a;
      if (ss.alpha_bar[i] >= 1.0) {
        ss.sigma[i - 1] = 0.0;
      } else {
        double var =
            (1.0 - ss.alpha_bar[i - 1]) / (1.0 - ss.alpha_bar[i]) * (1.0 - a);
        ss.sigma[i - 1] = var > 0.0 ? std::sqrt(var) : 0.0;
      }
    }
    return ss;
  }
};

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
template <typename T>
Tensor<T> add_noise(const Tensor<T>& x0, std::size_t t, const Tensor<T>& eps,
                    const NoiseSchedule& ns) {
  if (t > ns.steps) throw ContractError("add_noise: t out of schedule range");
  detail::require_same_shape(x0, eps, "add_noise");
  double ab = ns.alpha_bar[t];
  T sa = static_cast<T>(std::sqrt(ab));
  T sb = static_cast<T>(std::sqrt(1.0 - ab));
  Tensor<T> out = Tensor<T>::zeros(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i)
    out.data()[i] = sa * x0.data()[i] + sb * eps.data()[i];
  return out;
}

}  // namespace nova
