#include "ovd/embedbank.hpp"

#include <cmath>

namespace ovd {

TextBank make_text_bank(Eigen::MatrixXd raw_rows, bool includes_background) {
  for (Eigen::Index r = 0; r < raw_rows.rows(); ++r) {
    const double n = raw_rows.row(r).norm();
    if (n <= kNormEps)
      throw ZeroNormError("text bank row " + std::to_string(r) +
                          " has zero norm");
    raw_rows.row(r) /= n;
  }
  return TextBank{std::move(raw_rows), includes_background};
}

Embedding l2_normalize(const Embedding& v) {
  const double n = v.norm();
  if (n <= kNormEps) throw ZeroNormError("cannot normalize a zero vector");
  return v / n;
}

double cosine(const Embedding& u, const Embedding& v) {
  if (u.size() != v.size())
    throw DimensionMismatch("cosine: size " + std::to_string(u.size()) +
                            " vs " + std::to_string(v.size()));
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu <= kNormEps || nv <= kNormEps) return 0.0;
  return u.dot(v) / (nu * nv);
}

Eigen::VectorXd class_logits(const Embedding& region, const TextBank& bank,
                             double tau) {
  if (region.size() != bank.dim())
    throw DimensionMismatch("class_logits: region dim " +
                            std::to_string(region.size()) + " vs bank dim " +
                            std::to_string(bank.dim()));
  const int c = bank.num_classes();
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(bank.num_logits());
  const double rn = region.norm();
  if (rn > kNormEps) {
    // bank rows are unit norm, so cos(region, row_b) = row_b . region / |region|
    logits.head(c) = tau * (bank.rows * region) / rn;
  }
  return logits;  // background entry stays exactly 0
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

CeResult softmax_ce(const Eigen::VectorXd& logits, int target) {
  if (target < 0 || target >= logits.size())
    throw IndexOutOfRange("softmax_ce: target " + std::to_string(target) +
                          " out of range for " + std::to_string(logits.size()) +
                          " logits");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  CeResult r;
  r.loss = lse - logits[target];
  r.grad_logits = (logits.array() - lse).exp();
  r.grad_logits[target] -= 1.0;
  return r;
}

}  // namespace ovd
