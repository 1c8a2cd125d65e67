#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ovd/embedbank.hpp"
#include "ovd/geometry.hpp"

namespace ovd {

// Top-1 class-specific proposal selected for an image-level label.
struct PseudoBoxLabel {
  int class_id = -1;
  Proposal proposal;
};

struct IlsWeights {
  double alpha = 0.1;
};

// The min(k, n) highest-scoring proposals in descending score order; ties
// break toward the lower original index. k <= 0 returns an empty list.
std::vector<Proposal> select_class_agnostic_topk(
    const std::vector<Proposal>& proposals, int k);

// Index of the maximum-score candidate; ties break toward the lowest index.
// Throws EmptyCandidates on an empty list.
int select_class_specific_top1_index(const std::vector<Proposal>& candidates);
Proposal select_class_specific_top1(const std::vector<Proposal>& candidates);

struct PmsResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_embs;  // N x D
};

// Pseudo-max-score loss: per region, sigmoid binary cross-entropy of
// tau_b * cos(region, row_c) against the one-hot label over the bank's
// classes (summed over classes), averaged over the N regions. The background
// row never participates.
PmsResult pms_loss(const Eigen::MatrixXd& region_embs, const TextBank& bank,
                   const std::vector<int>& labels, double tau_b);

enum class BatchKind { detection, classification };

struct DetLosses {
  double rpn_surrogate = 0.0;  // proposal generators are fixed functions
  double reg = 0.0;
  double cls = 0.0;
};

// Piecewise image-level objective: detection batches return
// rpn_surrogate + reg + cls, classification batches return alpha * pms.
double ils_objective(BatchKind kind, const DetLosses& det, double pms,
                     const IlsWeights& w);

}  // namespace ovd
