#include "ovd/ils.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ovd {

namespace {

// log(1 + e^x) without overflow
double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<Proposal> select_class_agnostic_topk(
    const std::vector<Proposal>& proposals, int k) {
  if (k <= 0) return {};
  std::vector<size_t> idx(proposals.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return proposals[a].score > proposals[b].score;
  });
  const size_t take = std::min<size_t>(static_cast<size_t>(k), idx.size());
  std::vector<Proposal> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back(proposals[idx[i]]);
  return out;
}

int select_class_specific_top1_index(const std::vector<Proposal>& candidates) {
  if (candidates.empty())
    throw EmptyCandidates("select_class_specific_top1: empty candidate list");
  int best = 0;
  for (int i = 1; i < static_cast<int>(candidates.size()); ++i)
    if (candidates[i].score > candidates[best].score) best = i;
  return best;
}

Proposal select_class_specific_top1(const std::vector<Proposal>& candidates) {
  return candidates[static_cast<size_t>(
      select_class_specific_top1_index(candidates))];
}

PmsResult pms_loss(const Eigen::MatrixXd& region_embs, const TextBank& bank,
                   const std::vector<int>& labels, double tau_b) {
  const Eigen::Index n = region_embs.rows();
  const Eigen::Index c = bank.num_classes();
  if (n < 1) throw DimensionMismatch("pms_loss: empty region batch");
  if (region_embs.cols() != bank.dim())
    throw DimensionMismatch("pms_loss: emb dim " +
                            std::to_string(region_embs.cols()) +
                            " vs bank dim " + std::to_string(bank.dim()));
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DimensionMismatch("pms_loss: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(n) + " regions");
  for (int y : labels)
    if (y < 0 || y >= c)
      throw IndexOutOfRange("pms_loss: label " + std::to_string(y) +
                            " outside [0, " + std::to_string(c) + ")");

  PmsResult out;
  out.grad_embs = Eigen::MatrixXd::Zero(n, region_embs.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd e = region_embs.row(i).transpose();
    const double norm = e.norm();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(c);
    if (norm > kNormEps) v = (bank.rows * e) / norm;

    double loss_i = 0.0;
    Eigen::VectorXd dz(c);
    for (Eigen::Index b = 0; b < c; ++b) {
      const double z = tau_b * v[b];
      const double y = (b == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
      loss_i += y * softplus(-z) + (1.0 - y) * softplus(z);
      dz[b] = sigmoid(z) - y;
    }
    out.loss += loss_i / static_cast<double>(n);

    if (norm > kNormEps) {
      // d cos(e, t_b)/d e = (t_b - v_b * e/|e|) / |e|
      const Eigen::VectorXd e_hat = e / norm;
      const Eigen::VectorXd de =
          (bank.rows.transpose() * dz - dz.dot(v) * e_hat) / norm;
      out.grad_embs.row(i) =
          (tau_b / static_cast<double>(n)) * de.transpose();
    }
  }
  return out;
}

double ils_objective(BatchKind kind, const DetLosses& det, double pms,
                     const IlsWeights& w) {
  if (kind == BatchKind::detection)
    return det.rpn_surrogate + det.reg + det.cls;
  return w.alpha * pms;
}

}  // namespace ovd
