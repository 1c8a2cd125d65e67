#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ovd/ils.hpp"
#include "ovd/optim.hpp"
#include "ovd/rkd_losses.hpp"
#include "ovd/simworld.hpp"
#include "ovd/weight_transfer.hpp"

namespace ovd {

enum class Stage { base, rkd, wt };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

inline constexpr int kBackground = -1;

struct Assignment {
  std::vector<int> matched_gt;       // index into gts, or kBackground
  std::vector<int> label;            // class id, or kBackground
  std::vector<double> iou_at_match;  // 0 for background proposals
};

// Each proposal matches the ground truth of maximum IoU when that IoU reaches
// thresh, else background. IoU ties break toward the lower ground-truth index.
Assignment assign(const std::vector<Proposal>& proposals,
                  const std::vector<GtBox>& gts, double thresh);

struct HeadParams {
  ProjectionWeights w_d;        // E x F, the distilled projection
  Eigen::MatrixXd reg_weights;  // 4 x F, corner-delta refinement
  TransferParams transfer;
  SkipParams skip;
  Stage stage = Stage::base;
  // wt stage only: route region embeddings through W_P + skip. Off realizes
  // the naive RKD+PIS combination where W_D itself keeps training.
  bool use_transfer = true;

  bool transferred_path() const { return stage == Stage::wt && use_transfer; }
};

HeadParams init_head_params(const WorldConfig& cfg, uint64_t seed,
                            int hidden_transfer = 512, int hidden_skip = 1024,
                            double leaky_slope = 0.1);

struct HeadGrads {
  Eigen::MatrixXd w_d, reg_weights, w_theta1, w_theta2, skip_w1, skip_w2;

  static HeadGrads zeros_like(const HeadParams& p);
  HeadGrads& operator+=(const HeadGrads& o);
  HeadGrads& operator*=(double s);
};

// Named views over the fields trained in the params' stage, sorted by name.
// Single source of truth for the optimizer and for gradient flattening.
std::vector<NamedParam> trainable_params(HeadParams& p, HeadGrads& g);

struct Detection {
  Box box;
  int class_id = -1;
  double score = 0.0;  // softmax probability of class_id
};

struct SmoothL1Result {
  double loss = 0.0;
  Eigen::Vector4d grad = Eigen::Vector4d::Zero();
};

// Per coordinate: 0.5 d^2 when |d| < 1, else |d| - 0.5; summed.
SmoothL1Result smooth_l1(const Eigen::Vector4d& pred,
                         const Eigen::Vector4d& target);

struct StageLossConfig {
  double tau = 50.0;
  double tau_b = 50.0;
  RkdWeights rkd;
  IlsWeights ils;
  double assign_thresh = 0.5;
  int top_k = 5;
  ProposalPreset det_preset = mvit_like_preset();  // detection-loss proposals
  ProposalPreset rkd_preset = mvit_like_preset();  // distillation top-K source
  ProposalPreset cls_preset = mvit_like_preset();  // class-query candidates
};

struct LossComponents {
  double cls = 0.0, reg = 0.0, l1 = 0.0, irm = 0.0, pms = 0.0;
  LossComponents& operator+=(const LossComponents& o);
  LossComponents& operator*=(double s);
};

// Shared per-batch state of the region-embedding path. The transferred path
// computes W_P once; scenes read it concurrently.
struct EmbedPath {
  bool transferred = false;
  TransferCache tcache;   // valid when transferred
  Eigen::MatrixXd proj;   // matrix applied to features: W_D or W_P
};

EmbedPath make_embed_path(const HeadParams& p);

struct SceneLoss {
  double loss = 0.0;
  LossComponents comps;
  HeadGrads grads;
};

// Offline teacher cache record for one scene: the class-agnostic top-K boxes
// and their teacher embeddings.
struct DistillRecord {
  std::vector<Box> boxes;
  Eigen::MatrixXd teacher;  // K x D
};

using TeacherCache = std::map<uint64_t, DistillRecord>;
using PseudoLabelCache = std::map<uint64_t, std::vector<PseudoBoxLabel>>;

DistillRecord make_distill_record(const World& w, const Scene& s,
                                  const ProposalPreset& preset, int top_k);

// Top-1 class-specific pseudo box per image label, in label order.
std::vector<PseudoBoxLabel> make_pseudo_labels(const World& w, const Scene& s,
                                               const ProposalPreset& preset);

SceneLoss det_scene_loss(const World& w, const Scene& s, const HeadParams& p,
                         const EmbedPath& path, const TextBank& train_bank,
                         const StageLossConfig& cfg,
                         const DistillRecord* distill = nullptr);

SceneLoss cls_scene_loss(const World& w, const Scene& s, const HeadParams& p,
                         const EmbedPath& path, const TextBank& full_bank,
                         const StageLossConfig& cfg,
                         const std::vector<PseudoBoxLabel>* labels = nullptr);

struct BatchScene {
  const Scene* scene = nullptr;
  BatchKind kind = BatchKind::detection;
};

struct StageLossResult {
  double loss = 0.0;
  LossComponents comps;  // scaled like the loss (mean over batch scenes)
  HeadGrads grads;
  int det_scenes = 0;
  int cls_scenes = 0;
};

enum class Exec { serial, parallel };

// Mean over the batch of the per-scene stage objectives, with gradients for
// the stage's trainable fields. Per-scene work is pure; the parallel policy
// fills per-scene slots and reduces in index order, so both policies produce
// bit-identical results.
StageLossResult stage_loss(const World& w, std::span<const BatchScene> batch,
                           const HeadParams& p, const TextBank& train_bank,
                           const TextBank& full_bank,
                           const StageLossConfig& cfg,
                           Exec exec = Exec::parallel,
                           const TeacherCache* tcache = nullptr,
                           const PseudoLabelCache* plcache = nullptr);

// Classify + refine every proposal; proposals whose argmax is background are
// dropped. Boxes move by reg_weights * feature read as corner deltas, clipped
// to the scene bounds.
std::vector<Detection> forward_detect(const World& w, const Scene& s,
                                      const std::vector<Proposal>& proposals,
                                      const HeadParams& p,
                                      const TextBank& bank, double tau);

}  // namespace ovd
