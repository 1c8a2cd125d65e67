#include <doctest.h>

#include <cmath>

#include "ovd/head.hpp"
#include "ovd/pipeline.hpp"
#include "ovd/rng.hpp"

using namespace ovd;

namespace {

WorldConfig tiny_cfg(uint64_t seed = 301) {
  WorldConfig cfg;
  cfg.num_classes = 3;
  cfg.num_base = 2;
  cfg.latent_dim = 4;
  cfg.embed_dim = 4;
  cfg.feature_dim = 5;
  cfg.proto_cos_cap = 0.9;
  cfg.bounds = Box{0, 0, 20, 20};
  cfg.min_objects = 2;
  cfg.max_objects = 3;
  cfg.min_box_size = 4;
  cfg.max_box_size = 8;
  cfg.mvit.count = 4;
  cfg.rpn.count = 4;
  cfg.seed = seed;
  return cfg;
}

StageLossConfig tiny_loss_cfg(const WorldConfig& wc) {
  StageLossConfig cfg;
  cfg.top_k = 2;
  cfg.det_preset = wc.mvit;
  cfg.rkd_preset = wc.mvit;
  cfg.cls_preset = wc.mvit;
  return cfg;
}

HeadParams tiny_params(const WorldConfig& wc, Stage stage, uint64_t seed) {
  HeadParams p = init_head_params(wc, seed, 6, 7);
  p.stage = stage;
  std::mt19937_64 g = rng::engine(rng::mix(seed, rng::tag("reg")));
  p.reg_weights = 0.05 * rng::gaussian_matrix(g, 4, wc.feature_dim);
  return p;
}

}  // namespace

TEST_SUITE("head") {

TEST_CASE("assign fixtures") {
  const std::vector<GtBox> gts{{Box{0, 0, 10, 10}, 2}, {Box{20, 20, 30, 30}, 5}};
  std::vector<Proposal> props{{Box{0, 0, 10, 10}, 0.9},   // exact hit
                              {Box{0, 0, 30, 30}, 0.5},   // max IoU ~0.11
                              {Box{21, 21, 31, 31}, 0.4}};
  const Assignment a = assign(props, gts, 0.5);
  CHECK(a.label[0] == 2);
  CHECK(a.matched_gt[0] == 0);
  CHECK(a.iou_at_match[0] == doctest::Approx(1.0));
  CHECK(a.label[1] == kBackground);
  CHECK(a.label[2] == 5);

  const Assignment none = assign(props, {}, 0.5);
  for (int lbl : none.label) CHECK(lbl == kBackground);
}

TEST_CASE("assign matches the exhaustive max-IoU oracle") {
  std::mt19937_64 g = rng::engine(51);
  std::vector<GtBox> gts;
  for (int j = 0; j < 10; ++j) {
    const double x = rng::uniform(g, 0, 80), y = rng::uniform(g, 0, 80);
    gts.push_back({Box{x, y, x + rng::uniform(g, 5, 20),
                       y + rng::uniform(g, 5, 20)},
                   j % 4});
  }
  std::vector<Proposal> props;
  for (int i = 0; i < 200; ++i) {
    const double x = rng::uniform(g, 0, 80), y = rng::uniform(g, 0, 80);
    props.push_back({Box{x, y, x + rng::uniform(g, 5, 20),
                         y + rng::uniform(g, 5, 20)},
                     0.5});
  }
  const Assignment a = assign(props, gts, 0.5);
  for (size_t i = 0; i < props.size(); ++i) {
    int best = -1;
    double best_iou = 0.0;
    for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
      const double v = iou(props[i].box, gts[static_cast<size_t>(j)].box);
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    if (best >= 0 && best_iou >= 0.5) {
      CHECK(a.matched_gt[i] == best);
      CHECK(a.label[i] == gts[static_cast<size_t>(best)].class_id);
    } else {
      CHECK(a.matched_gt[i] == kBackground);
    }
  }
}

TEST_CASE("smooth_l1 fixtures") {
  const Eigen::Vector4d zero = Eigen::Vector4d::Zero();
  CHECK(smooth_l1(zero, zero).loss == 0.0);
  CHECK(smooth_l1(Eigen::Vector4d(2, 0, 0, 0), zero).loss ==
        doctest::Approx(1.5));
  CHECK(smooth_l1(Eigen::Vector4d(0.5, 0, 0, 0), zero).loss ==
        doctest::Approx(0.125));
}

TEST_CASE("forward_detect with zero reg weights keeps proposal boxes") {
  const WorldConfig wc = tiny_cfg();
  const World w = gen_world(wc);
  const Scene s = make_scene(w, 1, SceneKind::detection, 11);
  HeadParams p = tiny_params(wc, Stage::base, 5);
  p.reg_weights.setZero();
  const TextBank bank = text_embeddings(w);
  const auto props = propose(w, s, wc.mvit);
  const auto dets = forward_detect(w, s, props, p, bank, 50.0);
  for (const Detection& d : dets) {
    bool found = false;
    for (const Proposal& pr : props)
      if (pr.box.x1 == d.box.x1 && pr.box.y1 == d.box.y1 &&
          pr.box.x2 == d.box.x2 && pr.box.y2 == d.box.y2)
        found = true;
    CHECK(found);
    CHECK(d.score > 0.0);
    CHECK(d.score < 1.0);
    CHECK(d.class_id != bank.num_classes());
  }
}

TEST_CASE("detection scores are softmax probabilities") {
  const WorldConfig wc = tiny_cfg(302);
  const World w = gen_world(wc);
  const Scene s = make_scene(w, 2, SceneKind::detection, 12);
  const HeadParams p = tiny_params(wc, Stage::base, 6);
  const TextBank bank = text_embeddings(w);
  for (const Proposal& prop : propose(w, s, wc.mvit)) {
    const Eigen::VectorXd e = p.w_d.matrix * student_features(w, s, prop.box);
    const Eigen::VectorXd probs = softmax(class_logits(e, bank, 50.0));
    CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(probs.minCoeff() > 0.0);
  }
}

TEST_CASE("teacher-aligned embedder classifies IoU-1 proposals correctly") {
  WorldConfig wc = tiny_cfg(303);
  wc.latent_noise = 0.0;
  wc.teacher_noise = 0.0;
  wc.student_noise = 0.0;
  wc.context_mix = 0.0;
  wc.mvit.jitter = 0.0;
  wc.mvit.score_noise = 0.0;
  const World w = gen_world(wc);
  const TextBank bank = text_embeddings(w);
  // construct f = A B^+ so that f(student_features) equals teacher directions
  HeadParams p = tiny_params(wc, Stage::base, 7);
  const Eigen::MatrixXd pinv =
      w.student_map.completeOrthogonalDecomposition().pseudoInverse();
  p.w_d.matrix = w.teacher_map * pinv;
  p.reg_weights.setZero();
  const Scene s = make_scene(w, 3, SceneKind::detection, 13);
  const auto dets = forward_detect(w, s, propose(w, s, wc.mvit), p, bank, 50.0);
  REQUIRE(!dets.empty());
  for (const Detection& d : dets) {
    const SceneObject* best = nullptr;
    double best_iou = 0.0;
    for (const SceneObject& o : s.objects) {
      const double v = iou(d.box, o.box);
      if (v > best_iou) {
        best_iou = v;
        best = &o;
      }
    }
    REQUIRE(best != nullptr);
    CHECK(best_iou == doctest::Approx(1.0));
    CHECK(d.class_id == best->class_id);
  }
}

TEST_CASE("cls batches are rejected outside stage wt") {
  const WorldConfig wc = tiny_cfg(304);
  const World w = gen_world(wc);
  const Scene cls = make_scene(w, 4, SceneKind::classification, 14);
  HeadParams p = tiny_params(wc, Stage::base, 8);
  const StageLossConfig cfg = tiny_loss_cfg(wc);
  const TextBank full = text_embeddings(w);
  const EmbedPath path = make_embed_path(p);
  CHECK_THROWS_AS(cls_scene_loss(w, cls, p, path, full, cfg), StageMismatch);

  std::vector<BatchScene> batch{{&cls, BatchKind::classification}};
  CHECK_THROWS_AS(
      stage_loss(w, batch, p, base_text_bank(w), full, cfg, Exec::serial),
      StageMismatch);
}

TEST_CASE("all-background batch reduces to background cross-entropy") {
  WorldConfig wc = tiny_cfg(305);
  const World w = gen_world(wc);
  Scene s = make_scene(w, 5, SceneKind::detection, 15);
  // make every object novel so no training annotation survives
  for (SceneObject& o : s.objects) o.class_id = wc.num_classes - 1;
  HeadParams p = tiny_params(wc, Stage::base, 9);
  const TextBank train_bank = base_text_bank(w);
  const StageLossConfig cfg = tiny_loss_cfg(wc);
  const EmbedPath path = make_embed_path(p);
  const SceneLoss res = det_scene_loss(w, s, p, path, train_bank, cfg);
  CHECK(res.comps.reg == 0.0);

  double expect = 0.0;
  const auto props = propose(w, s, cfg.det_preset);
  for (const Proposal& prop : props) {
    const Eigen::VectorXd e =
        p.w_d.matrix * student_features(w, s, prop.box);
    expect += softmax_ce(class_logits(e, train_bank, cfg.tau),
                         train_bank.num_classes())
                  .loss /
              static_cast<double>(props.size());
  }
  CHECK(res.comps.cls == doctest::Approx(expect).epsilon(1e-12));
  CHECK(res.loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("stage rkd with zero betas equals stage base") {
  const WorldConfig wc = tiny_cfg(306);
  const World w = gen_world(wc);
  const Scene s = make_scene(w, 6, SceneKind::detection, 16);
  StageLossConfig cfg = tiny_loss_cfg(wc);
  cfg.rkd = RkdWeights{0.0, 0.0};

  HeadParams pb = tiny_params(wc, Stage::base, 10);
  HeadParams pr = pb;
  pr.stage = Stage::rkd;
  std::vector<BatchScene> batch{{&s, BatchKind::detection}};
  const TextBank tb = base_text_bank(w), fb = text_embeddings(w);
  const StageLossResult rb = stage_loss(w, batch, pb, tb, fb, cfg, Exec::serial);
  const StageLossResult rr = stage_loss(w, batch, pr, tb, fb, cfg, Exec::serial);
  CHECK(rb.loss == doctest::Approx(rr.loss).epsilon(1e-12));
  CHECK((rb.grads.w_d - rr.grads.w_d).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stage wt loss recomposes from its six terms") {
  const WorldConfig wc = tiny_cfg(307);
  const World w = gen_world(wc);
  const Scene d0 = make_scene(w, 7, SceneKind::detection, 17);
  const Scene c0 = make_scene(w, 8, SceneKind::classification, 18);
  HeadParams p = tiny_params(wc, Stage::wt, 11);
  const StageLossConfig cfg = tiny_loss_cfg(wc);
  const TextBank tb = base_text_bank(w), fb = text_embeddings(w);
  std::vector<BatchScene> batch{{&d0, BatchKind::detection},
                                {&c0, BatchKind::classification}};
  const StageLossResult r = stage_loss(w, batch, p, tb, fb, cfg, Exec::serial);
  const double recomposed = 0.0 /* rpn surrogate */ + r.comps.cls +
                            r.comps.reg + cfg.rkd.beta1 * r.comps.l1 +
                            cfg.rkd.beta2 * r.comps.irm +
                            cfg.ils.alpha * r.comps.pms;
  CHECK(std::abs(r.loss - recomposed) <= 1e-9);
}

TEST_CASE("stage gating: gradients flow only into the stage's fields") {
  const WorldConfig wc = tiny_cfg(308);
  const World w = gen_world(wc);
  const Scene d0 = make_scene(w, 9, SceneKind::detection, 19);
  const Scene c0 = make_scene(w, 10, SceneKind::classification, 20);
  const TextBank tb = base_text_bank(w), fb = text_embeddings(w);
  const StageLossConfig cfg = tiny_loss_cfg(wc);

  SUBCASE("base and rkd stages touch only w_d and reg") {
    for (Stage stage : {Stage::base, Stage::rkd}) {
      HeadParams p = tiny_params(wc, stage, 12);
      std::vector<BatchScene> batch{{&d0, BatchKind::detection}};
      const StageLossResult r =
          stage_loss(w, batch, p, tb, fb, cfg, Exec::serial);
      CHECK(r.grads.w_d.cwiseAbs().maxCoeff() > 0.0);
      CHECK(r.grads.w_theta1.cwiseAbs().maxCoeff() == 0.0);
      CHECK(r.grads.w_theta2.cwiseAbs().maxCoeff() == 0.0);
      CHECK(r.grads.skip_w1.cwiseAbs().maxCoeff() == 0.0);
      CHECK(r.grads.skip_w2.cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("wt stage with transfer freezes w_d") {
    HeadParams p = tiny_params(wc, Stage::wt, 13);
    p.use_transfer = true;
    std::vector<BatchScene> batch{{&d0, BatchKind::detection},
                                  {&c0, BatchKind::classification}};
    const StageLossResult r = stage_loss(w, batch, p, tb, fb, cfg, Exec::serial);
    CHECK(r.grads.w_d.cwiseAbs().maxCoeff() == 0.0);  // frozen contract
    CHECK(r.grads.w_theta1.cwiseAbs().maxCoeff() > 0.0);
    CHECK(r.grads.w_theta2.cwiseAbs().maxCoeff() > 0.0);
    CHECK(r.grads.skip_w1.cwiseAbs().maxCoeff() > 0.0);
    CHECK(r.grads.skip_w2.cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("wt stage without transfer trains w_d directly") {
    HeadParams p = tiny_params(wc, Stage::wt, 14);
    p.use_transfer = false;
    std::vector<BatchScene> batch{{&d0, BatchKind::detection},
                                  {&c0, BatchKind::classification}};
    const StageLossResult r = stage_loss(w, batch, p, tb, fb, cfg, Exec::serial);
    CHECK(r.grads.w_d.cwiseAbs().maxCoeff() > 0.0);
    CHECK(r.grads.w_theta1.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("pseudo labels: one per image label, score is candidate max") {
  const WorldConfig wc = tiny_cfg(309);
  const World w = gen_world(wc);
  const Scene s = make_scene(w, 11, SceneKind::classification, 21);
  const auto labels = make_pseudo_labels(w, s, wc.mvit);
  REQUIRE(labels.size() == s.image_labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    CHECK(labels[i].class_id == s.image_labels[i]);
    const auto cand = query_class_specific(w, s, labels[i].class_id, wc.mvit);
    for (const Proposal& c : cand) CHECK(labels[i].proposal.score >= c.score);
  }
}

TEST_CASE("full stage-wt gradient matches finite differences (tiny)") {
  const double err = [] {
    auto entries = gradcheck_all(424242, 2);
    for (const auto& e : entries)
      if (e.name == "stage_wt") return e.max_rel_err;
    return 1.0;
  }();
  CHECK(err <= 1e-4);
}

}  // TEST_SUITE
