#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ovd/errors.hpp"

namespace ovd {

// A named view over one parameter tensor and its gradient. Names drive the
// deterministic (sorted) update order.
struct NamedParam {
  std::string name;
  Eigen::MatrixXd* value = nullptr;
  const Eigen::MatrixXd* grad = nullptr;
};

// SGD with momentum and decoupled-from-nothing classic weight decay:
//   g' = g + wd * w;  v = momentum * v + g';  w -= lr * v
struct SgdState {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void step(std::vector<NamedParam> params);

 private:
  std::map<std::string, Eigen::MatrixXd> velocity_;
};

struct StepSchedule {
  double base_lr = 0.02;
  double drop_factor = 0.1;
  std::vector<int> drop_epochs{8, 11};

  // base_lr * drop_factor^(number of drop epochs <= epoch)
  double lr_at(int epoch) const;
};

// Central finite differences (f(x+h) - f(x-h)) / (2h) per coordinate.
// Throws NonFiniteLoss when f returns a non-finite value.
Eigen::VectorXd finite_diff_grad(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, double step);

}  // namespace ovd
