#pragma once

#include <Eigen/Dense>

#include "ovd/embedbank.hpp"

namespace ovd {

// The linear region-to-embedding map f as a matrix (embedding dim E out,
// region feature dim F in). No bias term anywhere in these maps.
struct ProjectionWeights {
  Eigen::MatrixXd matrix;  // E x F
  bool frozen = false;
};

// 2-layer MLP applied to the projection matrix itself: W_P = w2 rho(w1 W_D).
struct TransferParams {
  Eigen::MatrixXd w_theta1;  // H x E
  Eigen::MatrixXd w_theta2;  // E x H
  double slope = 0.1;        // LeakyReLU negative slope
};

// 2-layer perceptron F -> H_s -> E over region features, same activation.
struct SkipParams {
  Eigen::MatrixXd w1;  // Hs x F
  Eigen::MatrixXd w2;  // E x Hs
  double slope = 0.1;
};

double leaky_relu(double x, double slope);
double leaky_relu_grad(double x, double slope);

// W_P = w_theta2 * rho(w_theta1 * W_D). Never mutates wd; output not frozen.
ProjectionWeights transfer(const ProjectionWeights& wd,
                           const TransferParams& p);

struct TransferCache {
  Eigen::MatrixXd pre;  // w_theta1 * W_D   (H x F)
  Eigen::MatrixXd act;  // rho(pre)
  Eigen::MatrixXd wp;   // w_theta2 * act   (E x F)
};

TransferCache transfer_forward(const ProjectionWeights& wd,
                               const TransferParams& p);

// Accumulates d loss / d theta given d loss / d W_P. W_D itself receives no
// gradient here (frozen contract).
void transfer_backward(const TransferCache& c, const TransferParams& p,
                       const ProjectionWeights& wd,
                       const Eigen::MatrixXd& d_wp, Eigen::MatrixXd& d_theta1,
                       Eigen::MatrixXd& d_theta2);

struct SkipCache {
  Eigen::VectorXd pre;  // w1 * feature
  Eigen::VectorXd act;  // rho(pre)
};

Eigen::VectorXd skip_forward(const Eigen::VectorXd& feature,
                             const SkipParams& p, SkipCache* cache = nullptr);

void skip_backward(const SkipCache& c, const SkipParams& p,
                   const Eigen::VectorXd& feature,
                   const Eigen::VectorXd& d_out, Eigen::MatrixXd& d_w1,
                   Eigen::MatrixXd& d_w2);

// W_P * feature + skip_mlp(feature), the region embedding used under
// image-level supervision.
Embedding ils_region_embed(const Eigen::VectorXd& feature,
                           const ProjectionWeights& wp,
                           const SkipParams& skip);

}  // namespace ovd
