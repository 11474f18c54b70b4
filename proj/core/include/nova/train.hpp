#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nova/params.hpp"
#include "nova/tensor.hpp"

namespace nova {

// lr = base_lr * batchsize / 256
inline double lr_for(double base_lr, std::size_t batch) {
  if (batch < 1) throw ContractError("lr_for: batch must be >= 1");
  return base_lr * static_cast<double>(batch) / 256.0;
}

// AdamW with decoupled weight decay and bias-corrected moments.
template <typename T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.02;
    double eps = 1e-8;
  };

  explicit AdamW(ParamSet<T>& params, Options opt = {})
      : params_(&params), opt_(opt) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params.tensor(i).size(), T(0));
      v_[i].assign(params.tensor(i).size(), T(0));
    }
  }

  std::size_t step_count() const { return step_; }

  // Consumes the gradients accumulated on the parameters; does not zero
  // them (the trainer owns that).
  void step(double lr) {
    ++step_;
    double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < params_->size(); ++p) {
      Tensor<T>& t = params_->tensor(p);
      const std::vector<T>& g = t.grad();
      std::vector<T>& m = m_[p];
      std::vector<T>& v = v_[p];
      T* w = t.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double gi = static_cast<double>(g[i]);
        if (!std::isfinite(gi))
          throw NumericError("AdamW: non-finite gradient in " +
                             params_->name(p));
        if (opt_.weight_decay != 0.0)
          w[i] -= static_cast<T>(lr * opt_.weight_decay) * w[i];
        m[i] = static_cast<T>(opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi);
        v[i] = static_cast<T>(opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi);
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

 private:
  ParamSet<T>* params_;
  Options opt_;
  std::size_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace nova
