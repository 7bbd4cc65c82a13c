#include "tempograd/adam.hpp"

#include <cmath>

namespace tempograd {

Adam::Adam(std::vector<Var> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Var& p : params_) {
    if (!p.defined() || !p.requires_grad())
      throw ContractError("Adam: every parameter must be a trainable leaf");
    m_.emplace_back(p.value().shape());
    v_.emplace_back(p.value().shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, t_);
  const double bc2 = 1.0 - std::pow(config_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& theta = params_[i].mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const bool has_grad = params_[i].has_grad();
    const Tensor* g = has_grad ? &params_[i].grad() : nullptr;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g ? (*g)[k] : 0.0;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      theta[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

}  // namespace tempograd
