#include "ovd/weight_transfer.hpp"

#include <string>

namespace ovd {

namespace {

void check_transfer_shapes(const ProjectionWeights& wd,
                           const TransferParams& p) {
  const Eigen::Index e = wd.matrix.rows();
  if (p.w_theta1.cols() != e || p.w_theta2.rows() != e ||
      p.w_theta2.cols() != p.w_theta1.rows())
    throw DimensionMismatch(
        "transfer: theta1 " + std::to_string(p.w_theta1.rows()) + "x" +
        std::to_string(p.w_theta1.cols()) + ", theta2 " +
        std::to_string(p.w_theta2.rows()) + "x" +
        std::to_string(p.w_theta2.cols()) + " incompatible with W_D " +
        std::to_string(e) + "x" + std::to_string(wd.matrix.cols()));
}

Eigen::MatrixXd apply_leaky(const Eigen::MatrixXd& m, double slope) {
  return m.unaryExpr([slope](double x) { return leaky_relu(x, slope); });
}

}  // namespace

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

double leaky_relu_grad(double x, double slope) {
  return x >= 0.0 ? 1.0 : slope;
}

ProjectionWeights transfer(const ProjectionWeights& wd,
                           const TransferParams& p) {
  return ProjectionWeights{transfer_forward(wd, p).wp, /*frozen=*/false};
}

TransferCache transfer_forward(const ProjectionWeights& wd,
                               const TransferParams& p) {
  check_transfer_shapes(wd, p);
  TransferCache c;
  c.pre = p.w_theta1 * wd.matrix;
  c.act = apply_leaky(c.pre, p.slope);
  c.wp = p.w_theta2 * c.act;
  return c;
}

void transfer_backward(const TransferCache& c, const TransferParams& p,
                       const ProjectionWeights& wd,
                       const Eigen::MatrixXd& d_wp, Eigen::MatrixXd& d_theta1,
                       Eigen::MatrixXd& d_theta2) {
  d_theta2 += d_wp * c.act.transpose();
  Eigen::MatrixXd d_pre = p.w_theta2.transpose() * d_wp;
  for (Eigen::Index i = 0; i < d_pre.rows(); ++i)
    for (Eigen::Index j = 0; j < d_pre.cols(); ++j)
      d_pre(i, j) *= leaky_relu_grad(c.pre(i, j), p.slope);
  d_theta1 += d_pre * wd.matrix.transpose();
}

Eigen::VectorXd skip_forward(const Eigen::VectorXd& feature,
                             const SkipParams& p, SkipCache* cache) {
  if (p.w1.cols() != feature.size() || p.w2.cols() != p.w1.rows())
    throw DimensionMismatch("skip_forward: feature dim " +
                            std::to_string(feature.size()) +
                            " incompatible with skip weights");
  Eigen::VectorXd pre = p.w1 * feature;
  Eigen::VectorXd act =
      pre.unaryExpr([&](double x) { return leaky_relu(x, p.slope); });
  Eigen::VectorXd out = p.w2 * act;
  if (cache) {
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

void skip_backward(const SkipCache& c, const SkipParams& p,
                   const Eigen::VectorXd& feature,
                   const Eigen::VectorXd& d_out, Eigen::MatrixXd& d_w1,
                   Eigen::MatrixXd& d_w2) {
  d_w2 += d_out * c.act.transpose();
  Eigen::VectorXd d_pre = p.w2.transpose() * d_out;
  for (Eigen::Index i = 0; i < d_pre.size(); ++i)
    d_pre[i] *= leaky_relu_grad(c.pre[i], p.slope);
  d_w1 += d_pre * feature.transpose();
}

Embedding ils_region_embed(const Eigen::VectorXd& feature,
                           const ProjectionWeights& wp,
                           const SkipParams& skip) {
  if (wp.matrix.cols() != feature.size())
    throw DimensionMismatch("ils_region_embed: feature dim " +
                            std::to_string(feature.size()) + " vs W_P cols " +
                            std::to_string(wp.matrix.cols()));
  return wp.matrix * feature + skip_forward(feature, skip);
}

}  // namespace ovd
