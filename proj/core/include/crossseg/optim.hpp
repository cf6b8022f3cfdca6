#pragma once

#include "crossseg/net.hpp"

namespace crossseg {

struct OptimizerConfig {
  double lr0 = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  std::int64_t max_iters = 30000;
  double poly_power = 0.9;

  void validate() const {
    CROSSSEG_CHECK(lr0 > 0.0, "OptimizerConfig: lr0 must be > 0");
    CROSSSEG_CHECK(momentum >= 0.0 && momentum < 1.0, "OptimizerConfig: momentum must be in [0,1)");
    CROSSSEG_CHECK(weight_decay >= 0.0, "OptimizerConfig: weight_decay must be >= 0");
    CROSSSEG_CHECK(max_iters > 0, "OptimizerConfig: max_iters must be > 0");
    CROSSSEG_CHECK(poly_power > 0.0, "OptimizerConfig: poly_power must be > 0");
  }
};

// lr0 * (1 - iter/max_iters)^poly_power, reaching exactly 0 at max_iters.
inline double lr_schedule(std::int64_t iter, const OptimizerConfig& cfg) {
  cfg.validate();
  CROSSSEG_CHECK(iter >= 0 && iter <= cfg.max_iters,
                 "lr_schedule: iter " << iter << " outside [0," << cfg.max_iters << "]");
  double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(cfg.max_iters);
  return cfg.lr0 * std::pow(frac, cfg.poly_power);
}

// SGD with momentum; weight decay folds into the gradient:
// g = grad + wd*p; m = mu*m + g; p -= lr*m.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Var<T>> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    momenta_.reserve(params_.size());
    for (const auto& p : params_) momenta_.emplace_back(p->value.shape());
  }

  void zero_grad() {
    for (auto& p : params_)
      if (p->grad.numel() > 0) p->grad.fill(T(0));
  }

  void step(double lr) {
    T mu = static_cast<T>(momentum_), wd = static_cast<T>(weight_decay_), eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      Tensor<T>& m = momenta_[i];
      if (p->grad.numel() == 0) p->ensure_grad();
      T* pv = p->value.data();
      T* pg = p->grad.data();
      T* pm = m.data();
      for (index_t k = 0; k < p->value.numel(); ++k) {
        T g = pg[k] + wd * pv[k];
        pm[k] = mu * pm[k] + g;
        pv[k] -= eta * pm[k];
      }
    }
  }

  std::vector<Tensor<T>>& momenta() { return momenta_; }
  const std::vector<Var<T>>& params() const { return params_; }

 private:
  std::vector<Var<T>> params_;
  std::vector<Tensor<T>> momenta_;
  double momentum_, weight_decay_;
};

}  // namespace crossseg
