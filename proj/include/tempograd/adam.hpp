#pragma once

#include <vector>

#include "tempograd/autodiff.hpp"

namespace tempograd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. A parameter whose gradient was never touched in
// the current step is treated as having zero gradient; its moments still
// decay, matching dense-update semantics.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig config);

  void step();
  void zero_grad();
  int step_count() const { return t_; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamConfig config_;
  int t_ = 0;
};

}  // namespace tempograd
