#pragma once

#include <Eigen/Dense>

#include "ovd/errors.hpp"

namespace ovd {

using Embedding = Eigen::VectorXd;

// Norms at or below this are treated as zero. Cosine against such a vector is
// 0 by definition, which makes the all-zero background row well-defined.
inline constexpr double kNormEps = 1e-12;

// Fixed per-class text rows, one unit-norm row per class in class-index
// order. The background class is the implicit all-zero row at index C; it is
// never stored.
struct TextBank {
  Eigen::MatrixXd rows;  // C x D
  bool includes_background = true;

  int num_classes() const { return static_cast<int>(rows.rows()); }
  int dim() const { return static_cast<int>(rows.cols()); }
  int num_logits() const {
    return num_classes() + (includes_background ? 1 : 0);
  }
};

// Normalizes every row; throws ZeroNormError on an all-zero row.
TextBank make_text_bank(Eigen::MatrixXd raw_rows,
                        bool includes_background = true);

// Throws ZeroNormError when the norm is at or below kNormEps.
Embedding l2_normalize(const Embedding& v);

// 0 when either argument has norm at or below kNormEps.
double cosine(const Embedding& u, const Embedding& v);

// Logit b = tau * cos(region, row_b) for each class; the background entry,
// when the bank carries one, is exactly 0.
Eigen::VectorXd class_logits(const Embedding& region, const TextBank& bank,
                             double tau);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct CeResult {
  double loss = 0.0;
  Eigen::VectorXd grad_logits;  // softmax - onehot
};

// Numerically stable log-sum-exp cross-entropy with its exact gradient.
CeResult softmax_ce(const Eigen::VectorXd& logits, int target);

}  // namespace ovd
