#include "ovd/head.hpp"

#include <algorithm>
#include <cmath>

#include "ovd/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ovd {

namespace {

Eigen::Vector4d corners(const Box& b) {
  return Eigen::Vector4d(b.x1, b.y1, b.x2, b.y2);
}

// Accumulates gradients flowing into the region-embedding path. d_proj
// collects sum de * phi^T; the finalize step routes it to W_D or, through the
// transfer function, to the theta matrices.
struct PathAccum {
  Eigen::MatrixXd d_proj;

  explicit PathAccum(const HeadParams& p)
      : d_proj(Eigen::MatrixXd::Zero(p.w_d.matrix.rows(),
                                     p.w_d.matrix.cols())) {}
};

Eigen::VectorXd embed_region(const EmbedPath& path, const HeadParams& p,
                             const Eigen::VectorXd& phi, SkipCache* sc) {
  Eigen::VectorXd e = path.proj * phi;
  if (path.transferred) e += skip_forward(phi, p.skip, sc);
  return e;
}

void embed_backward(const EmbedPath& path, const HeadParams& p,
                    const Eigen::VectorXd& phi, const SkipCache& sc,
                    const Eigen::VectorXd& d_emb, PathAccum& accum,
                    HeadGrads& grads) {
  accum.d_proj += d_emb * phi.transpose();
  if (path.transferred)
    skip_backward(sc, p.skip, phi, d_emb, grads.skip_w1, grads.skip_w2);
}

void finalize_path(const EmbedPath& path, const HeadParams& p,
                   const PathAccum& accum, HeadGrads& grads) {
  if (path.transferred)
    transfer_backward(path.tcache, p.transfer, p.w_d, accum.d_proj,
                      grads.w_theta1, grads.w_theta2);
  else
    grads.w_d += accum.d_proj;
}

// d cos(e, t_c)/d e summed over classes with weights dl (bank rows unit).
Eigen::VectorXd cosine_rows_backward(const TextBank& bank,
                                     const Eigen::VectorXd& e,
                                     const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& dl) {
  const double norm = e.norm();
  const Eigen::VectorXd e_hat = e / norm;
  return (bank.rows.transpose() * dl - dl.dot(v) * e_hat) / norm;
}

Box refine_box(const Box& b, const Eigen::Vector4d& delta, const Box& bounds) {
  Box out{b.x1 + delta[0], b.y1 + delta[1], b.x2 + delta[2], b.y2 + delta[3]};
  out.x1 = std::clamp(out.x1, bounds.x1, bounds.x2);
  out.x2 = std::clamp(out.x2, bounds.x1, bounds.x2);
  out.y1 = std::clamp(out.y1, bounds.y1, bounds.y2);
  out.y2 = std::clamp(out.y2, bounds.y1, bounds.y2);
  if (out.x1 > out.x2) std::swap(out.x1, out.x2);
  if (out.y1 > out.y2) std::swap(out.y1, out.y2);
  return out;
}

}  // namespace

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::base:
      return "base";
    case Stage::rkd:
      return "rkd";
    case Stage::wt:
      return "wt";
  }
  return "base";
}

Stage stage_from_name(const std::string& name) {
  if (name == "base") return Stage::base;
  if (name == "rkd") return Stage::rkd;
  if (name == "wt") return Stage::wt;
  throw ParseError("unknown stage: " + name);
}

Assignment assign(const std::vector<Proposal>& proposals,
                  const std::vector<GtBox>& gts, double thresh) {
  Assignment a;
  a.matched_gt.resize(proposals.size(), kBackground);
  a.label.resize(proposals.size(), kBackground);
  a.iou_at_match.resize(proposals.size(), 0.0);
  for (size_t i = 0; i < proposals.size(); ++i) {
    int best = -1;
    double best_iou = 0.0;
    for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
      const double v = iou(proposals[i].box, gts[static_cast<size_t>(j)].box);
      if (v > best_iou) {  // strict: ties keep the lower gt index
        best_iou = v;
        best = j;
      }
    }
    if (best >= 0 && best_iou >= thresh) {
      a.matched_gt[i] = best;
      a.label[i] = gts[static_cast<size_t>(best)].class_id;
      a.iou_at_match[i] = best_iou;
    }
  }
  return a;
}

HeadParams init_head_params(const WorldConfig& cfg, uint64_t seed,
                            int hidden_transfer, int hidden_skip,
                            double leaky_slope) {
  std::mt19937_64 g = rng::engine(rng::mix(seed, rng::tag("init")));
  const int e = cfg.embed_dim;
  const int f = cfg.feature_dim;
  HeadParams p;
  p.w_d.matrix = rng::fanin_uniform_matrix(g, e, f, f);
  p.w_d.frozen = false;
  p.reg_weights = Eigen::MatrixXd::Zero(4, f);
  p.transfer.w_theta1 = rng::fanin_uniform_matrix(g, hidden_transfer, e, e);
  p.transfer.w_theta2 =
      rng::fanin_uniform_matrix(g, e, hidden_transfer, hidden_transfer);
  p.transfer.slope = leaky_slope;
  p.skip.w1 = rng::fanin_uniform_matrix(g, hidden_skip, f, f);
  p.skip.w2 = rng::fanin_uniform_matrix(g, e, hidden_skip, hidden_skip);
  p.skip.slope = leaky_slope;
  return p;
}

HeadGrads HeadGrads::zeros_like(const HeadParams& p) {
  HeadGrads g;
  g.w_d = Eigen::MatrixXd::Zero(p.w_d.matrix.rows(), p.w_d.matrix.cols());
  g.reg_weights =
      Eigen::MatrixXd::Zero(p.reg_weights.rows(), p.reg_weights.cols());
  g.w_theta1 = Eigen::MatrixXd::Zero(p.transfer.w_theta1.rows(),
                                     p.transfer.w_theta1.cols());
  g.w_theta2 = Eigen::MatrixXd::Zero(p.transfer.w_theta2.rows(),
                                     p.transfer.w_theta2.cols());
  g.skip_w1 = Eigen::MatrixXd::Zero(p.skip.w1.rows(), p.skip.w1.cols());
  g.skip_w2 = Eigen::MatrixXd::Zero(p.skip.w2.rows(), p.skip.w2.cols());
  return g;
}

HeadGrads& HeadGrads::operator+=(const HeadGrads& o) {
  w_d += o.w_d;
  reg_weights += o.reg_weights;
  w_theta1 += o.w_theta1;
  w_theta2 += o.w_theta2;
  skip_w1 += o.skip_w1;
  skip_w2 += o.skip_w2;
  return *this;
}

HeadGrads& HeadGrads::operator*=(double s) {
  w_d *= s;
  reg_weights *= s;
  w_theta1 *= s;
  w_theta2 *= s;
  skip_w1 *= s;
  skip_w2 *= s;
  return *this;
}

std::vector<NamedParam> trainable_params(HeadParams& p, HeadGrads& g) {
  std::vector<NamedParam> out;
  out.push_back({"reg_weights", &p.reg_weights, &g.reg_weights});
  if (p.transferred_path()) {
    out.push_back({"skip_w1", &p.skip.w1, &g.skip_w1});
    out.push_back({"skip_w2", &p.skip.w2, &g.skip_w2});
    out.push_back({"w_theta1", &p.transfer.w_theta1, &g.w_theta1});
    out.push_back({"w_theta2", &p.transfer.w_theta2, &g.w_theta2});
  } else {
    out.push_back({"w_d", &p.w_d.matrix, &g.w_d});
  }
  std::sort(out.begin(), out.end(),
            [](const NamedParam& a, const NamedParam& b) {
              return a.name < b.name;
            });
  return out;
}

SmoothL1Result smooth_l1(const Eigen::Vector4d& pred,
                         const Eigen::Vector4d& target) {
  SmoothL1Result r;
  for (int i = 0; i < 4; ++i) {
    const double d = pred[i] - target[i];
    const double ad = std::abs(d);
    if (ad < 1.0) {
      r.loss += 0.5 * d * d;
      r.grad[i] = d;
    } else {
      r.loss += ad - 0.5;
      r.grad[i] = d > 0.0 ? 1.0 : -1.0;
    }
  }
  return r;
}

LossComponents& LossComponents::operator+=(const LossComponents& o) {
  cls += o.cls;
  reg += o.reg;
  l1 += o.l1;
  irm += o.irm;
  pms += o.pms;
  return *this;
}

LossComponents& LossComponents::operator*=(double s) {
  cls *= s;
  reg *= s;
  l1 *= s;
  irm *= s;
  pms *= s;
  return *this;
}

EmbedPath make_embed_path(const HeadParams& p) {
  EmbedPath path;
  path.transferred = p.transferred_path();
  if (path.transferred) {
    path.tcache = transfer_forward(p.w_d, p.transfer);
    path.proj = path.tcache.wp;
  } else {
    path.proj = p.w_d.matrix;
  }
  return path;
}

DistillRecord make_distill_record(const World& w, const Scene& s,
                                  const ProposalPreset& preset, int top_k) {
  const std::vector<Proposal> top =
      select_class_agnostic_topk(propose(w, s, preset), top_k);
  DistillRecord rec;
  rec.teacher.resize(static_cast<Eigen::Index>(top.size()), w.cfg.embed_dim);
  rec.boxes.reserve(top.size());
  for (size_t k = 0; k < top.size(); ++k) {
    rec.boxes.push_back(top[k].box);
    rec.teacher.row(static_cast<Eigen::Index>(k)) =
        teacher_embed(w, s, top[k].box).transpose();
  }
  return rec;
}

std::vector<PseudoBoxLabel> make_pseudo_labels(const World& w, const Scene& s,
                                               const ProposalPreset& preset) {
  std::vector<PseudoBoxLabel> out;
  out.reserve(s.image_labels.size());
  for (int c : s.image_labels) {
    const std::vector<Proposal> cand = query_class_specific(w, s, c, preset);
    out.push_back(PseudoBoxLabel{c, select_class_specific_top1(cand)});
  }
  return out;
}

SceneLoss det_scene_loss(const World& w, const Scene& s, const HeadParams& p,
                         const EmbedPath& path, const TextBank& train_bank,
                         const StageLossConfig& cfg,
                         const DistillRecord* distill) {
  SceneLoss out;
  out.grads = HeadGrads::zeros_like(p);
  PathAccum accum(p);

  const std::vector<Proposal> proposals = propose(w, s, cfg.det_preset);
  const std::vector<GtBox> gts = train_annotations(s, w.cfg.split());
  const Assignment a = assign(proposals, gts, cfg.assign_thresh);
  const int n = static_cast<int>(proposals.size());
  int matched = 0;
  for (int i = 0; i < n; ++i)
    if (a.label[static_cast<size_t>(i)] != kBackground) ++matched;

  const int bg_index = train_bank.num_classes();
  for (int i = 0; i < n; ++i) {
    const Box& box = proposals[static_cast<size_t>(i)].box;
    const Eigen::VectorXd phi = student_features(w, s, box);
    SkipCache sc;
    const Eigen::VectorXd e = embed_region(path, p, phi, &sc);

    const Eigen::VectorXd logits = class_logits(e, train_bank, cfg.tau);
    const int label = a.label[static_cast<size_t>(i)];
    const int target = label == kBackground ? bg_index : label;
    const CeResult ce = softmax_ce(logits, target);
    out.comps.cls += ce.loss / n;

    const double norm = e.norm();
    if (norm > kNormEps) {
      const Eigen::VectorXd v = (train_bank.rows * e) / norm;
      const Eigen::VectorXd dl =
          (cfg.tau / n) * ce.grad_logits.head(train_bank.num_classes());
      const Eigen::VectorXd d_emb = cosine_rows_backward(train_bank, e, v, dl);
      embed_backward(path, p, phi, sc, d_emb, accum, out.grads);
    }

    if (label != kBackground) {
      const Eigen::Vector4d pred = p.reg_weights * phi;
      const Eigen::Vector4d target_delta =
          corners(gts[static_cast<size_t>(a.matched_gt[static_cast<size_t>(i)])]
                      .box) -
          corners(box);
      const SmoothL1Result sl = smooth_l1(pred, target_delta);
      out.comps.reg += sl.loss / matched;
      out.grads.reg_weights += (sl.grad / matched) * phi.transpose();
    }
  }

  if (p.stage != Stage::base) {
    DistillRecord local;
    const DistillRecord* rec = distill;
    if (!rec) {
      local = make_distill_record(w, s, cfg.rkd_preset, cfg.top_k);
      rec = &local;
    }
    const Eigen::Index k = rec->teacher.rows();
    if (k > 0) {
      // Embeddings are unit-normalized on both sides before the distillation
      // losses; the teacher rows already are.
      Eigen::MatrixXd student(k, rec->teacher.cols());
      Eigen::MatrixXd raw(k, rec->teacher.cols());
      std::vector<SkipCache> caches(static_cast<size_t>(k));
      std::vector<Eigen::VectorXd> phis(static_cast<size_t>(k));
      for (Eigen::Index j = 0; j < k; ++j) {
        phis[static_cast<size_t>(j)] =
            student_features(w, s, rec->boxes[static_cast<size_t>(j)]);
        const Eigen::VectorXd e = embed_region(
            path, p, phis[static_cast<size_t>(j)], &caches[static_cast<size_t>(j)]);
        const double norm = e.norm();
        if (norm <= kNormEps)
          throw RowZeroNorm("det_scene_loss: zero-norm student embedding");
        raw.row(j) = e.transpose();
        student.row(j) = e.transpose() / norm;
      }

      const BatchLossGrad l1 = l1_loss(student, rec->teacher);
      const BatchLossGrad irm = irm_loss(student, rec->teacher);
      out.comps.l1 = l1.loss;
      out.comps.irm = irm.loss;

      const Eigen::MatrixXd d_hat = cfg.rkd.beta1 * l1.grad_student +
                                    cfg.rkd.beta2 * irm.grad_student;
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::VectorXd e = raw.row(j).transpose();
        const double norm = e.norm();
        const Eigen::VectorXd e_hat = e / norm;
        const Eigen::VectorXd dh = d_hat.row(j).transpose();
        const Eigen::VectorXd d_emb = (dh - dh.dot(e_hat) * e_hat) / norm;
        embed_backward(path, p, phis[static_cast<size_t>(j)],
                       caches[static_cast<size_t>(j)], d_emb, accum, out.grads);
      }
    }
  }

  finalize_path(path, p, accum, out.grads);
  out.loss = ils_objective(BatchKind::detection,
                           DetLosses{0.0, out.comps.reg, out.comps.cls}, 0.0,
                           cfg.ils) +
             cfg.rkd.beta1 * out.comps.l1 + cfg.rkd.beta2 * out.comps.irm;
  return out;
}

SceneLoss cls_scene_loss(const World& w, const Scene& s, const HeadParams& p,
                         const EmbedPath& path, const TextBank& full_bank,
                         const StageLossConfig& cfg,
                         const std::vector<PseudoBoxLabel>* labels) {
  if (p.stage != Stage::wt)
    throw StageMismatch("classification batches are only legal in stage wt");
  SceneLoss out;
  out.grads = HeadGrads::zeros_like(p);
  PathAccum accum(p);

  std::vector<PseudoBoxLabel> local;
  if (!labels) {
    local = make_pseudo_labels(w, s, cfg.cls_preset);
    labels = &local;
  }
  const Eigen::Index n = static_cast<Eigen::Index>(labels->size());
  if (n == 0) return out;

  Eigen::MatrixXd embs(n, full_bank.dim());
  std::vector<SkipCache> caches(static_cast<size_t>(n));
  std::vector<Eigen::VectorXd> phis(static_cast<size_t>(n));
  std::vector<int> ys(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const PseudoBoxLabel& pl = (*labels)[static_cast<size_t>(i)];
    ys[static_cast<size_t>(i)] = pl.class_id;
    phis[static_cast<size_t>(i)] = student_features(w, s, pl.proposal.box);
    embs.row(i) = embed_region(path, p, phis[static_cast<size_t>(i)],
                               &caches[static_cast<size_t>(i)])
                      .transpose();
  }

  const PmsResult pms = pms_loss(embs, full_bank, ys, cfg.tau_b);
  out.comps.pms = pms.loss;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd d_emb =
        cfg.ils.alpha * pms.grad_embs.row(i).transpose();
    embed_backward(path, p, phis[static_cast<size_t>(i)],
                   caches[static_cast<size_t>(i)], d_emb, accum, out.grads);
  }

  finalize_path(path, p, accum, out.grads);
  out.loss = ils_objective(BatchKind::classification, DetLosses{},
                           out.comps.pms, cfg.ils);
  return out;
}

StageLossResult stage_loss(const World& w, std::span<const BatchScene> batch,
                           const HeadParams& p, const TextBank& train_bank,
                           const TextBank& full_bank,
                           const StageLossConfig& cfg, Exec exec,
                           const TeacherCache* tcache,
                           const PseudoLabelCache* plcache) {
  const int b = static_cast<int>(batch.size());
  StageLossResult out;
  out.grads = HeadGrads::zeros_like(p);
  if (b == 0) return out;

  const EmbedPath path = make_embed_path(p);
  std::vector<SceneLoss> results(static_cast<size_t>(b));

  auto worker = [&](int i) {
    const BatchScene& bs = batch[static_cast<size_t>(i)];
    if (bs.kind == BatchKind::detection) {
      const DistillRecord* rec = nullptr;
      if (tcache) {
        auto it = tcache->find(bs.scene->id);
        if (it != tcache->end()) rec = &it->second;
      }
      results[static_cast<size_t>(i)] =
          det_scene_loss(w, *bs.scene, p, path, train_bank, cfg, rec);
    } else {
      const std::vector<PseudoBoxLabel>* pl = nullptr;
      if (plcache) {
        auto it = plcache->find(bs.scene->id);
        if (it != plcache->end()) pl = &it->second;
      }
      results[static_cast<size_t>(i)] =
          cls_scene_loss(w, *bs.scene, p, path, full_bank, cfg, pl);
    }
  };

  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < b; ++i) worker(i);
  } else {
    for (int i = 0; i < b; ++i) worker(i);
  }

  // Index-ordered reduction keeps the result independent of thread count.
  for (int i = 0; i < b; ++i) {
    const SceneLoss& r = results[static_cast<size_t>(i)];
    out.loss += r.loss;
    out.comps += r.comps;
    out.grads += r.grads;
    if (batch[static_cast<size_t>(i)].kind == BatchKind::detection)
      ++out.det_scenes;
    else
      ++out.cls_scenes;
  }
  const double inv = 1.0 / b;
  out.loss *= inv;
  out.comps *= inv;
  out.grads *= inv;
  return out;
}

std::vector<Detection> forward_detect(const World& w, const Scene& s,
                                      const std::vector<Proposal>& proposals,
                                      const HeadParams& p,
                                      const TextBank& bank, double tau) {
  const EmbedPath path = make_embed_path(p);
  const int bg = bank.num_classes();
  std::vector<Detection> out;
  for (const Proposal& prop : proposals) {
    const Eigen::VectorXd phi = student_features(w, s, prop.box);
    const Eigen::VectorXd e = embed_region(path, p, phi, nullptr);
    const Eigen::VectorXd probs = softmax(class_logits(e, bank, tau));
    int arg = 0;
    for (int c = 1; c < static_cast<int>(probs.size()); ++c)
      if (probs[c] > probs[arg]) arg = c;
    if (arg == bg) continue;
    const Eigen::Vector4d delta = p.reg_weights * phi;
    out.push_back(
        Detection{refine_box(prop.box, delta, s.bounds), arg, probs[arg]});
  }
  return out;
}

}  // namespace ovd
