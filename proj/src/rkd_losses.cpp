#include "ovd/rkd_losses.hpp"

#include <string>

namespace ovd {

namespace {

void check_rows(const Eigen::MatrixXd& m, const char* who) {
  if (m.rows() < 1)
    throw DimensionMismatch(std::string(who) + ": empty batch");
}

}  // namespace

BatchLossGrad l1_loss(const Eigen::MatrixXd& student,
                      const Eigen::MatrixXd& teacher) {
  check_rows(student, "l1_loss");
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw DimensionMismatch("l1_loss: student " +
                            std::to_string(student.rows()) + "x" +
                            std::to_string(student.cols()) + " vs teacher " +
                            std::to_string(teacher.rows()) + "x" +
                            std::to_string(teacher.cols()));
  const double k = static_cast<double>(student.rows());
  const Eigen::MatrixXd diff = student - teacher;
  BatchLossGrad out;
  out.loss = diff.array().abs().sum() / k;
  out.grad_student = diff.array().sign().matrix() / k;  // sign(0) = 0
  return out;
}

Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& x) {
  check_rows(x, "similarity_matrix");
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    if (x.row(r).norm() <= kNormEps)
      throw RowZeroNorm("similarity_matrix: row " + std::to_string(r) +
                        " has zero norm");
  Eigen::MatrixXd g = x * x.transpose();
  for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) /= g.row(r).norm();
  return g;
}

BatchLossGrad irm_loss(const Eigen::MatrixXd& student,
                       const Eigen::MatrixXd& teacher) {
  check_rows(student, "irm_loss");
  if (student.rows() != teacher.rows())
    throw DimensionMismatch("irm_loss: K " + std::to_string(student.rows()) +
                            " vs " + std::to_string(teacher.rows()));
  const Eigen::Index k = student.rows();
  const double k2 = static_cast<double>(k) * static_cast<double>(k);

  for (Eigen::Index r = 0; r < student.rows(); ++r)
    if (student.row(r).norm() <= kNormEps)
      throw RowZeroNorm("irm_loss: student row " + std::to_string(r) +
                        " has zero norm");

  const Eigen::MatrixXd gram = student * student.transpose();
  Eigen::VectorXd row_norm(k);
  Eigen::MatrixXd s_r(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    row_norm[r] = gram.row(r).norm();
    s_r.row(r) = gram.row(r) / row_norm[r];
  }
  const Eigen::MatrixXd s_i = similarity_matrix(teacher);

  const Eigen::MatrixXd delta = s_r - s_i;
  BatchLossGrad out;
  out.loss = delta.squaredNorm() / k2;

  // d loss / d S = (2/K^2) (S_R - S_I); back through the row normalization
  // S_r = G_r / |G_r|, then through G = X X^T via dX = (dG + dG^T) X.
  const Eigen::MatrixXd d_s = (2.0 / k2) * delta;
  Eigen::MatrixXd d_gram(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const double dot = d_s.row(r).dot(s_r.row(r));
    d_gram.row(r) = (d_s.row(r) - dot * s_r.row(r)) / row_norm[r];
  }
  out.grad_student = (d_gram + d_gram.transpose()) * student;
  return out;
}

BatchLossGrad rkd_objective(const Eigen::MatrixXd& student,
                            const Eigen::MatrixXd& teacher,
                            const RkdWeights& w) {
  BatchLossGrad out;
  out.loss = 0.0;
  out.grad_student = Eigen::MatrixXd::Zero(student.rows(), student.cols());
  if (w.beta1 != 0.0) {
    const BatchLossGrad l1 = l1_loss(student, teacher);
    out.loss += w.beta1 * l1.loss;
    out.grad_student += w.beta1 * l1.grad_student;
  }
  if (w.beta2 != 0.0) {
    const BatchLossGrad irm = irm_loss(student, teacher);
    out.loss += w.beta2 * irm.loss;
    out.grad_student += w.beta2 * irm.grad_student;
  }
  return out;
}

}  // namespace ovd
