#include "ovd/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ovd/errors.hpp"
#include "ovd/rng.hpp"

namespace ovd {

namespace {

uint64_t box_hash(uint64_t h, const Box& b) {
  return rng::mix(h, rng::bits(b.x1), rng::bits(b.y1), rng::bits(b.x2),
                  rng::bits(b.y2));
}

// Latent seen through a box: the max-IoU object's latent for the teacher,
// the IoU-weighted mean for the student, scene context when nothing overlaps.
const Eigen::VectorXd& max_iou_latent(const Scene& s, const Box& box) {
  int best = -1;
  double best_iou = 0.0;
  for (int i = 0; i < static_cast<int>(s.objects.size()); ++i) {
    const double v = iou(box, s.objects[static_cast<size_t>(i)].box);
    if (v > best_iou) {
      best_iou = v;
      best = i;
    }
  }
  if (best < 0) return s.context;
  return s.objects[static_cast<size_t>(best)].latent;
}

Eigen::VectorXd overlap_weighted_latent(const Scene& s, const Box& box) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.context.size());
  double total = 0.0;
  for (const SceneObject& o : s.objects) {
    const double w = iou(box, o.box);
    if (w > 0.0) {
      acc += w * o.latent;
      total += w;
    }
  }
  if (total <= 0.0) return s.context;
  return acc / total;
}

Box random_box(std::mt19937_64& g, const WorldConfig& cfg) {
  const double w = rng::uniform(g, cfg.min_box_size, cfg.max_box_size);
  const double h = rng::uniform(g, cfg.min_box_size, cfg.max_box_size);
  const Box& b = cfg.bounds;
  const double cx = rng::uniform(g, b.x1 + w / 2, b.x2 - w / 2);
  const double cy = rng::uniform(g, b.y1 + h / 2, b.y2 - h / 2);
  return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double preset_score(std::mt19937_64& g, const ProposalPreset& p,
                    double max_iou) {
  const double u = rng::uniform(g, 0.0, 1.0);
  const double n = rng::uniform(g, -1.0, 1.0);
  return clamp01(p.iou_weight * max_iou + (1.0 - p.iou_weight) * u +
                 p.score_noise * n);
}

double max_iou_to_objects(const Scene& s, const Box& box) {
  double m = 0.0;
  for (const SceneObject& o : s.objects) m = std::max(m, iou(box, o.box));
  return m;
}

// Candidate boxes shared by propose() and the class-specific queries.
std::vector<Box> candidate_boxes(const World& w, const Scene& s,
                                 const ProposalPreset& p) {
  std::mt19937_64 g = rng::engine(
      rng::mix(w.cfg.seed, rng::tag("boxes"), s.id, rng::tag(p.name)));
  const int n_bg = static_cast<int>(
      std::lround(p.background_frac * static_cast<double>(p.count)));
  const int n_obj = p.count - n_bg;
  std::vector<Box> out;
  out.reserve(static_cast<size_t>(p.count));
  const int n_objects = static_cast<int>(s.objects.size());
  for (int i = 0; i < n_obj; ++i) {
    if (n_objects == 0) {
      out.push_back(random_box(g, w.cfg));
      continue;
    }
    const Box& src = s.objects[static_cast<size_t>(i % n_objects)].box;
    out.push_back(jitter(src, p.jitter, g, s.bounds));
  }
  for (int i = 0; i < n_bg; ++i) out.push_back(random_box(g, w.cfg));
  return out;
}

}  // namespace

ProposalPreset mvit_like_preset() {
  return ProposalPreset{"mvit_like", 32, 0.05, 0.02, 1.0, 0.0};
}

ProposalPreset rpn_like_preset() {
  return ProposalPreset{"rpn_like", 32, 0.35, 0.05, 0.4, 0.35};
}

const ProposalPreset& preset_by_name(const WorldConfig& cfg,
                                     const std::string& name) {
  if (name == cfg.mvit.name) return cfg.mvit;
  if (name == cfg.rpn.name) return cfg.rpn;
  throw ParseError("unknown proposal preset: " + name);
}

World gen_world(const WorldConfig& cfg) {
  if (cfg.num_base <= 0 || cfg.num_base >= cfg.num_classes)
    throw DimensionMismatch("gen_world: base/novel split " +
                            std::to_string(cfg.num_base) + "/" +
                            std::to_string(cfg.num_classes) + " invalid");
  World w;
  w.cfg = cfg;
  std::mt19937_64 g = rng::engine(rng::mix(cfg.seed, rng::tag("world")));

  w.prototypes.resize(cfg.num_classes, cfg.latent_dim);
  constexpr int kMaxTries = 1000;
  for (int c = 0; c < cfg.num_classes; ++c) {
    bool placed = false;
    for (int t = 0; t < kMaxTries && !placed; ++t) {
      Eigen::VectorXd cand = rng::gaussian_vector(g, cfg.latent_dim);
      const double n = cand.norm();
      if (n <= kNormEps) continue;
      cand /= n;
      placed = true;
      for (int r = 0; r < c; ++r) {
        if (std::abs(w.prototypes.row(r).dot(cand)) > cfg.proto_cos_cap) {
          placed = false;
          break;
        }
      }
      if (placed) w.prototypes.row(c) = cand.transpose();
    }
    if (!placed)
      throw SeparationUnsatisfiable(
          "gen_world: could not place prototype " + std::to_string(c) +
          " under cosine cap " + std::to_string(cfg.proto_cos_cap));
  }

  const double ts = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  w.teacher_map = ts * rng::gaussian_matrix(g, cfg.embed_dim, cfg.latent_dim);
  w.student_map = ts * rng::gaussian_matrix(g, cfg.feature_dim, cfg.latent_dim);
  return w;
}

TextBank text_embeddings(const World& w) {
  Eigen::MatrixXd rows(w.cfg.num_classes, w.cfg.embed_dim);
  for (int c = 0; c < w.cfg.num_classes; ++c)
    rows.row(c) = (w.teacher_map * w.prototypes.row(c).transpose()).transpose();
  return make_text_bank(std::move(rows));
}

TextBank base_text_bank(const World& w) {
  const TextBank full = text_embeddings(w);
  return TextBank{full.rows.topRows(w.cfg.num_base), true};
}

Embedding teacher_embed(const World& w, const Scene& s, const Box& box) {
  const Eigen::VectorXd& z = max_iou_latent(s, box);
  // The image-centric flaw: the looser the box, the more the teacher sees the
  // scene instead of the object. A tight box mixes at context_mix; a box with
  // no overlap collapses to pure context.
  const double overlap = max_iou_to_objects(s, box);
  const double lam = 1.0 - (1.0 - w.cfg.context_mix) * overlap;
  const Eigen::VectorXd mixed = (1.0 - lam) * z + lam * s.context;
  Eigen::VectorXd e = w.teacher_map * mixed;
  if (w.cfg.teacher_noise > 0.0) {
    std::mt19937_64 g = rng::engine(
        box_hash(rng::mix(w.cfg.seed, rng::tag("teacher"), s.id), box));
    e += w.cfg.teacher_noise * rng::gaussian_vector(g, e.size());
  }
  return l2_normalize(e);
}

Eigen::VectorXd student_features(const World& w, const Scene& s,
                                 const Box& box) {
  Eigen::VectorXd f = w.student_map * overlap_weighted_latent(s, box);
  if (w.cfg.student_noise > 0.0) {
    std::mt19937_64 g = rng::engine(
        box_hash(rng::mix(w.cfg.seed, rng::tag("student"), s.id), box));
    f += w.cfg.student_noise * rng::gaussian_vector(g, f.size());
  }
  return f;
}

std::vector<Proposal> propose(const World& w, const Scene& s,
                              const ProposalPreset& preset) {
  const std::vector<Box> boxes = candidate_boxes(w, s, preset);
  std::mt19937_64 g = rng::engine(
      rng::mix(w.cfg.seed, rng::tag("scores"), s.id, rng::tag(preset.name)));
  std::vector<Proposal> out;
  out.reserve(boxes.size());
  for (const Box& b : boxes)
    out.push_back(Proposal{b, preset_score(g, preset, max_iou_to_objects(s, b))});
  return out;
}

std::vector<Proposal> query_class_specific(const World& w, const Scene& s,
                                           int class_id,
                                           const ProposalPreset& preset) {
  if (class_id < 0 || class_id >= w.cfg.num_classes)
    throw IndexOutOfRange("query_class_specific: class " +
                          std::to_string(class_id));
  const std::vector<Box> boxes = candidate_boxes(w, s, preset);
  const Embedding text_row =
      l2_normalize(w.teacher_map * w.prototypes.row(class_id).transpose());
  std::mt19937_64 g = rng::engine(rng::mix(w.cfg.seed, rng::tag("query"), s.id,
                                           static_cast<uint64_t>(class_id),
                                           rng::tag(preset.name)));
  std::vector<Proposal> out;
  out.reserve(boxes.size());
  for (const Box& b : boxes) {
    const double c = cosine(teacher_embed(w, s, b), text_row);
    const double noise = preset.score_noise * rng::uniform(g, -1.0, 1.0);
    out.push_back(Proposal{b, clamp01((1.0 + c) / 2.0 + noise)});
  }
  return out;
}

std::vector<GtBox> train_annotations(const Scene& s, const ClassSplit& split) {
  std::vector<GtBox> out;
  if (s.kind != SceneKind::detection) return out;
  for (const SceneObject& o : s.objects)
    if (!split.is_novel(o.class_id)) out.push_back(GtBox{o.box, o.class_id});
  return out;
}

std::vector<GtBox> all_annotations(const Scene& s) {
  std::vector<GtBox> out;
  out.reserve(s.objects.size());
  for (const SceneObject& o : s.objects)
    out.push_back(GtBox{o.box, o.class_id});
  return out;
}

Scene make_scene(const World& w, uint64_t id, SceneKind kind, uint64_t seed) {
  const WorldConfig& cfg = w.cfg;
  std::mt19937_64 g = rng::engine(seed);
  Scene s;
  s.id = id;
  s.kind = kind;
  s.bounds = cfg.bounds;
  const int n = rng::uniform_int(g, cfg.min_objects, cfg.max_objects);
  s.objects.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.box = random_box(g, cfg);
    if (rng::uniform(g, 0.0, 1.0) < cfg.novel_object_frac)
      o.class_id = rng::uniform_int(g, cfg.num_base, cfg.num_classes - 1);
    else
      o.class_id = rng::uniform_int(g, 0, cfg.num_base - 1);
    o.latent = w.prototypes.row(o.class_id).transpose() +
               cfg.latent_noise * rng::gaussian_vector(g, cfg.latent_dim);
    s.objects.push_back(std::move(o));
  }
  s.context = Eigen::VectorXd::Zero(cfg.latent_dim);
  for (const SceneObject& o : s.objects) s.context += o.latent;
  s.context /= static_cast<double>(n);
  if (kind == SceneKind::classification) {
    std::set<int> labels;
    for (const SceneObject& o : s.objects) labels.insert(o.class_id);
    s.image_labels.assign(labels.begin(), labels.end());
  }
  return s;
}

Datasets gen_datasets(const World& w) {
  const WorldConfig& cfg = w.cfg;
  Datasets ds;
  ds.det.reserve(static_cast<size_t>(cfg.det_scenes));
  ds.cls.reserve(static_cast<size_t>(cfg.cls_scenes));
  ds.eval.reserve(static_cast<size_t>(cfg.eval_scenes));
  for (int i = 0; i < cfg.det_scenes; ++i)
    ds.det.push_back(make_scene(w, static_cast<uint64_t>(i),
                                SceneKind::detection,
                                rng::mix(cfg.seed, rng::tag("det"),
                                         static_cast<uint64_t>(i))));
  for (int i = 0; i < cfg.cls_scenes; ++i)
    ds.cls.push_back(make_scene(w, (1ull << 20) + static_cast<uint64_t>(i),
                                SceneKind::classification,
                                rng::mix(cfg.seed, rng::tag("cls"),
                                         static_cast<uint64_t>(i))));
  for (int i = 0; i < cfg.eval_scenes; ++i)
    ds.eval.push_back(make_scene(w, (2ull << 20) + static_cast<uint64_t>(i),
                                 SceneKind::detection,
                                 rng::mix(cfg.seed, rng::tag("eval"),
                                          static_cast<uint64_t>(i))));
  return ds;
}

}  // namespace ovd
