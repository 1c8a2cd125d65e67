#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ovd/embedbank.hpp"
#include "ovd/geometry.hpp"

namespace ovd {

// Tunable proposal-generator quality. mvit_like mimics tight, well-scored
// class-agnostic proposals; rpn_like produces looser boxes, background
// clutter and weakly IoU-correlated scores.
struct ProposalPreset {
  std::string name = "mvit_like";
  int count = 32;
  double jitter = 0.05;          // corner noise as a fraction of box size
  double score_noise = 0.02;
  double iou_weight = 1.0;       // score mix: iou_weight*maxIoU + rest uniform
  double background_frac = 0.0;  // fraction of purely random boxes
};

ProposalPreset mvit_like_preset();
ProposalPreset rpn_like_preset();

struct ClassSplit {
  int num_base = 20;
  int num_total = 28;
  bool is_novel(int c) const { return c >= num_base; }
  int num_novel() const { return num_total - num_base; }
};

struct WorldConfig {
  int num_classes = 28;
  int num_base = 20;  // classes [0, num_base) are base, the rest novel
  int latent_dim = 32;
  int embed_dim = 24;    // D: teacher/text space
  int feature_dim = 48;  // F: detector feature space
  double latent_noise = 0.05;   // per-object latent spread around prototypes
  double teacher_noise = 0.05;  // pre-normalization noise on teacher embeddings
  double student_noise = 0.05;  // noise on student features
  double context_mix = 0.3;     // lambda: scene-context share in teacher input
  double proto_cos_cap = 0.5;   // max pairwise prototype cosine
  double novel_object_frac = 0.15;  // share of scene objects drawn novel
  Box bounds{0.0, 0.0, 100.0, 100.0};
  int min_objects = 2, max_objects = 6;
  double min_box_size = 10.0, max_box_size = 30.0;
  int det_scenes = 500, cls_scenes = 800, eval_scenes = 200;
  ProposalPreset mvit = mvit_like_preset();
  ProposalPreset rpn = rpn_like_preset();
  uint64_t seed = 1234;

  ClassSplit split() const { return ClassSplit{num_base, num_classes}; }
};

enum class SceneKind { detection, classification };

struct SceneObject {
  Box box;
  int class_id = -1;
  Eigen::VectorXd latent;  // L-dim, prototype + latent noise
};

struct GtBox {
  Box box;
  int class_id = -1;
};

struct Scene {
  uint64_t id = 0;
  SceneKind kind = SceneKind::detection;
  Box bounds;
  std::vector<SceneObject> objects;
  Eigen::VectorXd context;        // mean of object latents
  std::vector<int> image_labels;  // classification scenes only, sorted unique
};

// Frozen stand-in for CLIP's joint space (teacher_map) and the detector
// backbone (student_map). Everything downstream is a pure function of this.
struct World {
  WorldConfig cfg;
  Eigen::MatrixXd prototypes;   // C x L, unit rows
  Eigen::MatrixXd teacher_map;  // D x L
  Eigen::MatrixXd student_map;  // F x L
};

// Deterministic from cfg.seed. Prototype rows are resampled until the
// pairwise-cosine cap holds; throws SeparationUnsatisfiable when a bounded
// retry budget runs out.
World gen_world(const WorldConfig& cfg);

// Row c = l2_normalize(teacher_map * prototype_c): the same frozen map as the
// teacher image side, so teacher image/text cosines are meaningful.
TextBank text_embeddings(const World& w);

// The training classifier: base rows only.
TextBank base_text_bank(const World& w);

// Teacher region embedding with the image-centric flaw: the latent of the
// max-IoU object is mixed with the scene context, mapped, noised and
// unit-normalized. The context share grows as the box gets looser — a tight
// box mixes at context_mix, a box with no overlap sees pure context — so
// poorly localized proposals yield scene-centric, not object-centric,
// teacher targets. Noise is hash-seeded by (world seed, scene id, box
// corners), so the offline cache is reproducible without storing it.
Embedding teacher_embed(const World& w, const Scene& s, const Box& box);

// Student region features: student_map applied to the IoU-weighted mean of
// overlapping object latents (context when nothing overlaps), plus noise.
// Deliberately not in the teacher's space, so the projection must be learned.
Eigen::VectorXd student_features(const World& w, const Scene& s,
                                 const Box& box);

// Class-agnostic proposals per preset; deterministic per (world, scene,
// preset name).
std::vector<Proposal> propose(const World& w, const Scene& s,
                              const ProposalPreset& preset);

// Class-specific query: candidate boxes as in propose, confidence =
// (1 + cos(teacher_embed(box), text row)) / 2 plus preset noise, in [0, 1].
std::vector<Proposal> query_class_specific(const World& w, const Scene& s,
                                           int class_id,
                                           const ProposalPreset& preset);

// Detection scenes expose only base-class boxes; classification scenes
// expose none (they carry image labels instead).
std::vector<GtBox> train_annotations(const Scene& s, const ClassSplit& split);

// Full ground truth, for evaluation.
std::vector<GtBox> all_annotations(const Scene& s);

struct Datasets {
  std::vector<Scene> det;
  std::vector<Scene> cls;
  std::vector<Scene> eval;
};

Datasets gen_datasets(const World& w);

// Exposed for tests; id feeds the per-scene noise streams.
Scene make_scene(const World& w, uint64_t id, SceneKind kind, uint64_t seed);

const ProposalPreset& preset_by_name(const WorldConfig& cfg,
                                     const std::string& name);

}  // namespace ovd
