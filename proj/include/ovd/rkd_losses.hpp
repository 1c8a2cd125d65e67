#pragma once

#include <Eigen/Dense>

#include "ovd/embedbank.hpp"
#include "ovd/errors.hpp"

namespace ovd {

struct RkdWeights {
  double beta1 = 0.15;
  double beta2 = 0.15;
};

struct BatchLossGrad {
  double loss = 0.0;
  Eigen::MatrixXd grad_student;  // K x D
};

// (1/K) sum_k |student_k - teacher_k|_1; subgradient 0 at equality.
BatchLossGrad l1_loss(const Eigen::MatrixXd& student,
                      const Eigen::MatrixXd& teacher);

// G = x x^T with each row of G divided by its own L2 norm. Throws RowZeroNorm
// when a row of x is all zero.
Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& x);

// (1/K^2) |S_student - S_teacher|_F^2 over the row-normalized Gram matrices,
// with the analytic gradient through the row normalization and the Gram
// product. Student and teacher may have different widths; only K must match.
BatchLossGrad irm_loss(const Eigen::MatrixXd& student,
                       const Eigen::MatrixXd& teacher);

// beta1 * l1 + beta2 * irm, gradients summed linearly.
BatchLossGrad rkd_objective(const Eigen::MatrixXd& student,
                            const Eigen::MatrixXd& teacher,
                            const RkdWeights& w);

}  // namespace ovd
