#include "ovd/optim.hpp"

#include <algorithm>
#include <cmath>

namespace ovd {

void SgdState::step(std::vector<NamedParam> params) {
  std::sort(params.begin(), params.end(),
            [](const NamedParam& a, const NamedParam& b) {
              return a.name < b.name;
            });
  for (NamedParam& p : params) {
    Eigen::MatrixXd& w = *p.value;
    const Eigen::MatrixXd& g = *p.grad;
    if (g.rows() != w.rows() || g.cols() != w.cols())
      throw DimensionMismatch("sgd_step: grad shape mismatch for " + p.name);
    auto [it, inserted] = velocity_.try_emplace(p.name);
    if (inserted) it->second = Eigen::MatrixXd::Zero(w.rows(), w.cols());
    Eigen::MatrixXd& v = it->second;
    if (v.rows() != w.rows() || v.cols() != w.cols())
      throw DimensionMismatch("sgd_step: velocity shape mismatch for " +
                              p.name);
    v = momentum * v + (g + weight_decay * w);
    w -= lr * v;
  }
}

double StepSchedule::lr_at(int epoch) const {
  int drops = 0;
  for (int e : drop_epochs)
    if (e <= epoch) ++drops;
  return base_lr * std::pow(drop_factor, drops);
}

Eigen::VectorXd finite_diff_grad(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, double step) {
  Eigen::VectorXd grad(x0.size());
  Eigen::VectorXd x = x0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    x[i] = x0[i] + step;
    const double up = f(x);
    x[i] = x0[i] - step;
    const double down = f(x);
    x[i] = x0[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NonFiniteLoss("finite_diff_grad: non-finite loss at coordinate " +
                          std::to_string(i));
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace ovd
