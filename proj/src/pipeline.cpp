#include "ovd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ovd/rng.hpp"

namespace ovd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<int> shuffled_indices(int n, std::mt19937_64& g) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), g);
  return idx;
}

io::TrainLogRow mean_log_row(int epoch, double lr,
                             const std::vector<StageLossResult>& steps,
                             double wall_s) {
  io::TrainLogRow row;
  row.epoch = epoch;
  row.lr = lr;
  row.wall_s = wall_s;
  if (steps.empty()) return row;
  for (const StageLossResult& r : steps) {
    row.cls += r.comps.cls;
    row.reg += r.comps.reg;
    row.l1 += r.comps.l1;
    row.irm += r.comps.irm;
    row.pms += r.comps.pms;
    row.total += r.loss;
  }
  const double inv = 1.0 / static_cast<double>(steps.size());
  row.cls *= inv;
  row.reg *= inv;
  row.l1 *= inv;
  row.irm *= inv;
  row.pms *= inv;
  row.total *= inv;
  return row;
}

double rel_err(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

Eigen::VectorXd flatten(const std::vector<NamedParam>& refs) {
  Eigen::Index total = 0;
  for (const NamedParam& p : refs) total += p.value->size();
  Eigen::VectorXd x(total);
  Eigen::Index at = 0;
  for (const NamedParam& p : refs) {
    const Eigen::MatrixXd& m = *p.value;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) x[at++] = m(r, c);
  }
  return x;
}

void unflatten(const Eigen::VectorXd& x, std::vector<NamedParam>& refs) {
  Eigen::Index at = 0;
  for (NamedParam& p : refs) {
    Eigen::MatrixXd& m = *p.value;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = x[at++];
  }
}

Eigen::VectorXd flatten_grads(const std::vector<NamedParam>& refs) {
  Eigen::Index total = 0;
  for (const NamedParam& p : refs) total += p.grad->size();
  Eigen::VectorXd x(total);
  Eigen::Index at = 0;
  for (const NamedParam& p : refs) {
    const Eigen::MatrixXd& m = *p.grad;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) x[at++] = m(r, c);
  }
  return x;
}

}  // namespace

TrainResult train_stage(const World& w, const Datasets& ds,
                        const RunConfig& rc, Stage stage,
                        const HeadParams* init, Exec exec,
                        const TeacherCache* tcache,
                        const PseudoLabelCache* plcache) {
  TrainResult out;
  if (init) {
    out.params = *init;
  } else {
    out.params = init_head_params(w.cfg, rc.train_seed(),
                                  rc.train.hidden_transfer,
                                  rc.train.hidden_skip, rc.train.leaky_slope);
  }
  HeadParams& p = out.params;
  p.stage = stage;
  p.use_transfer = rc.train.use_transfer;
  p.w_d.frozen = p.transferred_path();

  const TextBank train_bank = base_text_bank(w);
  const TextBank full_bank = text_embeddings(w);
  const StageLossConfig cfg = rc.stage_loss_config();

  SgdState sgd;
  sgd.momentum = rc.train.momentum;
  sgd.weight_decay = rc.train.weight_decay;

  std::mt19937_64 g = rng::engine(
      rng::mix(rc.train_seed(), rng::tag(stage_name(stage))));

  HeadGrads grads = HeadGrads::zeros_like(p);
  std::vector<int> det_order;
  size_t det_at = 0;
  auto next_det = [&]() -> const Scene* {
    if (det_at >= det_order.size()) {
      det_order = shuffled_indices(static_cast<int>(ds.det.size()), g);
      det_at = 0;
    }
    return &ds.det[static_cast<size_t>(det_order[det_at++])];
  };

  for (int epoch = 0; epoch < rc.train.epochs; ++epoch) {
    const auto t0 = Clock::now();
    sgd.lr = rc.train.schedule.lr_at(epoch);
    std::vector<StageLossResult> step_results;

    if (stage == Stage::wt) {
      const int steps =
          static_cast<int>(ds.cls.size()) / rc.train.cls_per_step;
      const std::vector<int> cls_order =
          shuffled_indices(static_cast<int>(ds.cls.size()), g);
      for (int step = 0; step < steps; ++step) {
        std::vector<BatchScene> batch;
        batch.reserve(static_cast<size_t>(rc.train.det_per_step +
                                          rc.train.cls_per_step));
        for (int i = 0; i < rc.train.det_per_step; ++i)
          batch.push_back(BatchScene{next_det(), BatchKind::detection});
        for (int i = 0; i < rc.train.cls_per_step; ++i)
          batch.push_back(BatchScene{
              &ds.cls[static_cast<size_t>(
                  cls_order[static_cast<size_t>(step * rc.train.cls_per_step +
                                                i)])],
              BatchKind::classification});
        StageLossResult r = stage_loss(w, batch, p, train_bank, full_bank, cfg,
                                       exec, tcache, plcache);
        grads = r.grads;
        sgd.step(trainable_params(p, grads));
        step_results.push_back(std::move(r));
      }
    } else {
      const std::vector<int> order =
          shuffled_indices(static_cast<int>(ds.det.size()), g);
      for (size_t at = 0; at < order.size(); at += rc.train.det_batch) {
        std::vector<BatchScene> batch;
        const size_t hi =
            std::min(order.size(), at + static_cast<size_t>(rc.train.det_batch));
        for (size_t i = at; i < hi; ++i)
          batch.push_back(BatchScene{&ds.det[static_cast<size_t>(order[i])],
                                     BatchKind::detection});
        StageLossResult r = stage_loss(w, batch, p, train_bank, full_bank, cfg,
                                       exec, tcache, plcache);
        grads = r.grads;
        sgd.step(trainable_params(p, grads));
        step_results.push_back(std::move(r));
      }
    }

    out.log.push_back(
        mean_log_row(epoch, sgd.lr, step_results, seconds_since(t0)));
  }

  std::ostringstream state;
  state << g;
  out.rng_state = state.str();
  return out;
}

EvalReport evaluate(const World& w, const std::vector<Scene>& eval_scenes,
                    const HeadParams& p, const RunConfig& rc, Exec exec) {
  const TextBank full_bank = text_embeddings(w);
  const ProposalPreset& preset =
      preset_by_name(w.cfg, rc.eval.proposal_preset);
  const std::vector<std::vector<Detection>> dets =
      detect_scenes(w, eval_scenes, p, full_bank, rc.train.tau, preset, exec);
  std::vector<std::vector<GtBox>> gts;
  gts.reserve(eval_scenes.size());
  for (const Scene& s : eval_scenes) gts.push_back(all_annotations(s));
  EvalReport rep = ap50(dets, gts, w.cfg.split(), exec);
  if (rc.eval.top1)
    rep.top1 = top1_region_acc(w, eval_scenes, p, full_bank, exec);
  return rep;
}

namespace {

VariantMetrics metrics_of(const EvalReport& rep) {
  VariantMetrics m;
  m.ap_novel = rep.ap_novel;
  m.ap_base = rep.ap_base;
  m.ap_all = rep.ap_all;
  if (rep.top1) {
    m.top1_base = rep.top1->base;
    m.top1_novel = rep.top1->novel;
    m.top1_overall = rep.top1->overall;
  }
  return m;
}

}  // namespace

AblationResult run_ablation(const RunConfig& rc, int num_seeds, bool extras,
                            Exec exec, std::ostream* progress) {
  AblationResult res;
  std::vector<std::string> variants(std::begin(kAblationVariants),
                                    std::end(kAblationVariants));
  if (extras)
    variants.insert(variants.end(), std::begin(kExtraVariants),
                    std::end(kExtraVariants));

  for (int s = 0; s < num_seeds; ++s) {
    RunConfig rcs = rc;
    reseed(rcs, rng::mix(rc.master_seed, rng::tag("ablate"),
                         static_cast<uint64_t>(s)));
    const World w = gen_world(rcs.world);
    const Datasets ds = gen_datasets(w);

    auto eval_variant = [&](const std::string& name, const HeadParams& p,
                            const RunConfig& cfg) {
      const EvalReport rep = evaluate(w, ds.eval, p, cfg, exec);
      res.per_seed[name].push_back(metrics_of(rep));
      if (progress)
        *progress << "[seed " << s << "] " << name
                  << ": ap_novel=" << rep.ap_novel
                  << " ap_base=" << rep.ap_base
                  << (rep.top1 ? " top1_novel=" : "")
                  << (rep.top1 ? std::to_string(rep.top1->novel) : "")
                  << std::endl;
    };

    const TrainResult base = train_stage(w, ds, rcs, Stage::base, nullptr, exec);
    eval_variant("base", base.params, rcs);

    const TrainResult rkd =
        train_stage(w, ds, rcs, Stage::rkd, &base.params, exec);
    eval_variant("rkd", rkd.params, rcs);

    {
      RunConfig pis_cfg = rcs;
      pis_cfg.train.use_transfer = false;
      pis_cfg.train.beta1 = 0.0;
      pis_cfg.train.beta2 = 0.0;
      const TrainResult pis =
          train_stage(w, ds, pis_cfg, Stage::wt, &base.params, exec);
      eval_variant("pis", pis.params, pis_cfg);
    }

    {
      RunConfig naive_cfg = rcs;
      naive_cfg.train.use_transfer = false;
      const TrainResult naive =
          train_stage(w, ds, naive_cfg, Stage::wt, &rkd.params, exec);
      eval_variant("rkd_pis_naive", naive.params, naive_cfg);
    }

    {
      const TrainResult wt =
          train_stage(w, ds, rcs, Stage::wt, &rkd.params, exec);
      eval_variant("weight_transfer", wt.params, rcs);
    }

    if (extras) {
      const TrainResult scratch =
          train_stage(w, ds, rcs, Stage::rkd, nullptr, exec);
      eval_variant("rkd_scratch", scratch.params, rcs);

      RunConfig rpn_cfg = rcs;
      rpn_cfg.train.rkd_preset = "rpn_like";
      const TrainResult rkd_rpn =
          train_stage(w, ds, rpn_cfg, Stage::rkd, &base.params, exec);
      eval_variant("rkd_rpn", rkd_rpn.params, rpn_cfg);
    }
  }

  for (const std::string& name : variants) {
    const std::vector<VariantMetrics>& runs = res.per_seed[name];
    AblationRow row;
    row.variant = name;
    auto fold = [&](auto get) {
      double sum = 0.0, lo = 1e300, hi = -1e300;
      for (const VariantMetrics& m : runs) {
        const double v = get(m);
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double mean = runs.empty() ? 0.0 : sum / runs.size();
      return std::array<double, 3>{mean, lo, hi};
    };
    auto set3 = [](std::array<double, 3> v, double& mean, double& lo,
                   double& hi) {
      mean = v[0];
      lo = v[1];
      hi = v[2];
    };
    set3(fold([](const VariantMetrics& m) { return m.ap_novel; }),
         row.mean.ap_novel, row.lo.ap_novel, row.hi.ap_novel);
    set3(fold([](const VariantMetrics& m) { return m.ap_base; }),
         row.mean.ap_base, row.lo.ap_base, row.hi.ap_base);
    set3(fold([](const VariantMetrics& m) { return m.ap_all; }),
         row.mean.ap_all, row.lo.ap_all, row.hi.ap_all);
    set3(fold([](const VariantMetrics& m) { return m.top1_base; }),
         row.mean.top1_base, row.lo.top1_base, row.hi.top1_base);
    set3(fold([](const VariantMetrics& m) { return m.top1_novel; }),
         row.mean.top1_novel, row.lo.top1_novel, row.hi.top1_novel);
    set3(fold([](const VariantMetrics& m) { return m.top1_overall; }),
         row.mean.top1_overall, row.lo.top1_overall, row.hi.top1_overall);
    res.rows.push_back(row);
  }
  return res;
}

void save_ablation_csv(const AblationResult& res, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw PathError("cannot open for writing: " + path);
  f << "variant,ap_novel_mean,ap_novel_min,ap_novel_max,"
       "ap_base_mean,ap_base_min,ap_base_max,"
       "ap_all_mean,ap_all_min,ap_all_max,"
       "top1_novel_mean,top1_novel_min,top1_novel_max\n";
  for (const AblationRow& r : res.rows)
    f << r.variant << ',' << r.mean.ap_novel << ',' << r.lo.ap_novel << ','
      << r.hi.ap_novel << ',' << r.mean.ap_base << ',' << r.lo.ap_base << ','
      << r.hi.ap_base << ',' << r.mean.ap_all << ',' << r.lo.ap_all << ','
      << r.hi.ap_all << ',' << r.mean.top1_novel << ',' << r.lo.top1_novel
      << ',' << r.hi.top1_novel << '\n';
}

namespace {

// Tiny-instance generators for the gradient oracle.

WorldConfig tiny_world_config(uint64_t seed) {
  WorldConfig cfg;
  cfg.num_classes = 3;
  cfg.num_base = 2;
  cfg.latent_dim = 4;
  cfg.embed_dim = 4;
  cfg.feature_dim = 5;
  cfg.latent_noise = 0.05;
  cfg.teacher_noise = 0.05;
  cfg.student_noise = 0.05;
  cfg.context_mix = 0.3;
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

double stage_gradcheck_instance(Stage stage, uint64_t seed) {
  const WorldConfig wc = tiny_world_config(rng::mix(seed, rng::tag("w")));
  const World w = gen_world(wc);
  const Scene det0 = make_scene(w, 1, SceneKind::detection,
                                rng::mix(seed, rng::tag("d0")));
  const Scene det1 = make_scene(w, 2, SceneKind::detection,
                                rng::mix(seed, rng::tag("d1")));
  const Scene cls0 = make_scene(w, 3, SceneKind::classification,
                                rng::mix(seed, rng::tag("c0")));
  const Scene cls1 = make_scene(w, 4, SceneKind::classification,
                                rng::mix(seed, rng::tag("c1")));

  std::vector<BatchScene> batch{{&det0, BatchKind::detection},
                                {&det1, BatchKind::detection}};
  if (stage == Stage::wt) {
    batch.push_back({&cls0, BatchKind::classification});
    batch.push_back({&cls1, BatchKind::classification});
  }

  HeadParams params = init_head_params(wc, rng::mix(seed, rng::tag("p")), 6, 7);
  params.stage = stage;
  params.use_transfer = true;
  // random refinement weights so L_reg has curvature at the test point
  std::mt19937_64 g = rng::engine(rng::mix(seed, rng::tag("reg")));
  params.reg_weights = 0.05 * rng::gaussian_matrix(g, 4, wc.feature_dim);

  StageLossConfig cfg;
  cfg.top_k = 2;
  cfg.det_preset = wc.mvit;
  cfg.rkd_preset = wc.mvit;
  cfg.cls_preset = wc.mvit;

  const TextBank train_bank = base_text_bank(w);
  const TextBank full_bank = text_embeddings(w);

  HeadGrads grads = HeadGrads::zeros_like(params);
  StageLossResult res = stage_loss(w, batch, params, train_bank, full_bank,
                                   cfg, Exec::serial);
  grads = res.grads;
  std::vector<NamedParam> refs = trainable_params(params, grads);
  const Eigen::VectorXd x0 = flatten(refs);
  const Eigen::VectorXd analytic = flatten_grads(refs);

  auto f = [&](const Eigen::VectorXd& x) {
    unflatten(x, refs);
    const double loss =
        stage_loss(w, batch, params, train_bank, full_bank, cfg, Exec::serial)
            .loss;
    return loss;
  };
  const Eigen::VectorXd fd = finite_diff_grad(f, x0, kGradCheckStep);
  unflatten(x0, refs);
  return rel_err(analytic, fd);
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_all(uint64_t seed, int instances_each) {
  std::vector<GradCheckEntry> out;
  auto add = [&](const std::string& name, auto instance_fn) {
    GradCheckEntry e;
    e.name = name;
    e.instances = instances_each;
    for (int i = 0; i < instances_each; ++i) {
      const uint64_t s = rng::mix(seed, rng::tag(name), static_cast<uint64_t>(i));
      e.max_rel_err = std::max(e.max_rel_err, instance_fn(s));
    }
    out.push_back(e);
  };

  add("softmax_ce", [](uint64_t s) {
    std::mt19937_64 g = rng::engine(s);
    const Eigen::VectorXd logits = 2.0 * rng::gaussian_vector(g, 5);
    const int target = rng::uniform_int(g, 0, 4);
    const CeResult ce = softmax_ce(logits, target);
    auto f = [&](const Eigen::VectorXd& x) { return softmax_ce(x, target).loss; };
    return rel_err(ce.grad_logits, finite_diff_grad(f, logits, kGradCheckStep));
  });

  add("l1_loss", [](uint64_t s) {
    std::mt19937_64 g = rng::engine(s);
    const int k = 4, d = 6;
    const Eigen::MatrixXd teacher = rng::gaussian_matrix(g, k, d);
    // keep |student - teacher| away from the kink at 0
    Eigen::MatrixXd student = teacher;
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < d; ++c) {
        const double mag = rng::uniform(g, 0.05, 0.5);
        student(r, c) += (rng::uniform(g, -1.0, 1.0) < 0.0 ? -mag : mag);
      }
    const BatchLossGrad lg = l1_loss(student, teacher);
    auto f = [&](const Eigen::VectorXd& x) {
      Eigen::MatrixXd m = student;
      Eigen::Index at = 0;
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < d; ++c) m(r, c) = x[at++];
      return l1_loss(m, teacher).loss;
    };
    Eigen::VectorXd x0(k * d), a0(k * d);
    Eigen::Index at = 0;
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < d; ++c) {
        x0[at] = student(r, c);
        a0[at++] = lg.grad_student(r, c);
      }
    return rel_err(a0, finite_diff_grad(f, x0, kGradCheckStep));
  });

  add("irm_loss", [](uint64_t s) {
    std::mt19937_64 g = rng::engine(s);
    const int k = 3, d = 5;
    const Eigen::MatrixXd teacher = rng::gaussian_matrix(g, k, d);
    const Eigen::MatrixXd student = rng::gaussian_matrix(g, k, d);
    const BatchLossGrad lg = irm_loss(student, teacher);
    auto f = [&](const Eigen::VectorXd& x) {
      Eigen::MatrixXd m(k, d);
      Eigen::Index at = 0;
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < d; ++c) m(r, c) = x[at++];
      return irm_loss(m, teacher).loss;
    };
    Eigen::VectorXd x0(k * d), a0(k * d);
    Eigen::Index at = 0;
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < d; ++c) {
        x0[at] = student(r, c);
        a0[at++] = lg.grad_student(r, c);
      }
    return rel_err(a0, finite_diff_grad(f, x0, kGradCheckStep));
  });

  add("pms_loss", [](uint64_t s) {
    std::mt19937_64 g = rng::engine(s);
    const int n = 3, c = 4, d = 8;
    const TextBank bank = make_text_bank(rng::gaussian_matrix(g, c, d));
    const Eigen::MatrixXd embs = rng::gaussian_matrix(g, n, d);
    std::vector<int> labels(n);
    for (int& y : labels) y = rng::uniform_int(g, 0, c - 1);
    const PmsResult pr = pms_loss(embs, bank, labels, 5.0);
    auto f = [&](const Eigen::VectorXd& x) {
      Eigen::MatrixXd m(n, d);
      Eigen::Index at = 0;
      for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < d; ++cc) m(r, cc) = x[at++];
      return pms_loss(m, bank, labels, 5.0).loss;
    };
    Eigen::VectorXd x0(n * d), a0(n * d);
    Eigen::Index at = 0;
    for (int r = 0; r < n; ++r)
      for (int cc = 0; cc < d; ++cc) {
        x0[at] = embs(r, cc);
        a0[at++] = pr.grad_embs(r, cc);
      }
    return rel_err(a0, finite_diff_grad(f, x0, kGradCheckStep));
  });

  add("transfer", [](uint64_t s) {
    std::mt19937_64 g = rng::engine(s);
    const int e = 4, f_dim = 6, h = 5;
    ProjectionWeights wd{rng::gaussian_matrix(g, e, f_dim), true};
    TransferParams tp{rng::gaussian_matrix(g, h, e),
                      rng::gaussian_matrix(g, e, h), 0.1};
    const Eigen::MatrixXd r_mat = rng::gaussian_matrix(g, e, f_dim);
    // downstream scalar: sum(W_P .* R)
    const TransferCache cache = transfer_forward(wd, tp);
    Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(h, e);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(e, h);
    transfer_backward(cache, tp, wd, r_mat, d1, d2);
    const int n1 = h * e, n2 = e * h;
    Eigen::VectorXd x0(n1 + n2), a0(n1 + n2);
    Eigen::Index at = 0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < e; ++c) {
        x0[at] = tp.w_theta1(r, c);
        a0[at++] = d1(r, c);
      }
    for (int r = 0; r < e; ++r)
      for (int c = 0; c < h; ++c) {
        x0[at] = tp.w_theta2(r, c);
        a0[at++] = d2(r, c);
      }
    auto f = [&](const Eigen::VectorXd& x) {
      TransferParams t2 = tp;
      Eigen::Index i = 0;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < e; ++c) t2.w_theta1(r, c) = x[i++];
      for (int r = 0; r < e; ++r)
        for (int c = 0; c < h; ++c) t2.w_theta2(r, c) = x[i++];
      return (transfer_forward(wd, t2).wp.array() * r_mat.array()).sum();
    };
    return rel_err(a0, finite_diff_grad(f, x0, kGradCheckStep));
  });

  add("skip", [](uint64_t s) {
    std::mt19937_64 g = rng::engine(s);
    const int e = 4, f_dim = 6, hs = 5;
    SkipParams sp{rng::gaussian_matrix(g, hs, f_dim),
                  rng::gaussian_matrix(g, e, hs), 0.1};
    const Eigen::VectorXd feature = rng::gaussian_vector(g, f_dim);
    const Eigen::VectorXd r_vec = rng::gaussian_vector(g, e);
    SkipCache cache;
    skip_forward(feature, sp, &cache);
    Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(hs, f_dim);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(e, hs);
    skip_backward(cache, sp, feature, r_vec, d1, d2);
    const int n1 = hs * f_dim, n2 = e * hs;
    Eigen::VectorXd x0(n1 + n2), a0(n1 + n2);
    Eigen::Index at = 0;
    for (int r = 0; r < hs; ++r)
      for (int c = 0; c < f_dim; ++c) {
        x0[at] = sp.w1(r, c);
        a0[at++] = d1(r, c);
      }
    for (int r = 0; r < e; ++r)
      for (int c = 0; c < hs; ++c) {
        x0[at] = sp.w2(r, c);
        a0[at++] = d2(r, c);
      }
    auto f = [&](const Eigen::VectorXd& x) {
      SkipParams s2 = sp;
      Eigen::Index i = 0;
      for (int r = 0; r < hs; ++r)
        for (int c = 0; c < f_dim; ++c) s2.w1(r, c) = x[i++];
      for (int r = 0; r < e; ++r)
        for (int c = 0; c < hs; ++c) s2.w2(r, c) = x[i++];
      return r_vec.dot(skip_forward(feature, s2));
    };
    return rel_err(a0, finite_diff_grad(f, x0, kGradCheckStep));
  });

  add("smooth_l1", [](uint64_t s) {
    std::mt19937_64 g = rng::engine(s);
    Eigen::Vector4d target, pred;
    for (int i = 0; i < 4; ++i) {
      target[i] = rng::uniform(g, -2.0, 2.0);
      // keep |pred - target| away from the quadratic/linear switch at 1
      double d = rng::uniform(g, -1.8, 1.8);
      if (std::abs(std::abs(d) - 1.0) < 0.05) d = d > 0 ? 0.5 : -0.5;
      pred[i] = target[i] + d;
    }
    const SmoothL1Result sr = smooth_l1(pred, target);
    auto f = [&](const Eigen::VectorXd& x) {
      return smooth_l1(Eigen::Vector4d(x), target).loss;
    };
    Eigen::VectorXd x0 = pred, a0 = sr.grad;
    return rel_err(a0, finite_diff_grad(f, x0, kGradCheckStep));
  });

  add("stage_base",
      [](uint64_t s) { return stage_gradcheck_instance(Stage::base, s); });
  add("stage_rkd",
      [](uint64_t s) { return stage_gradcheck_instance(Stage::rkd, s); });
  add("stage_wt",
      [](uint64_t s) { return stage_gradcheck_instance(Stage::wt, s); });

  return out;
}

void save_gradcheck_csv(const std::vector<GradCheckEntry>& entries,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw PathError("cannot open for writing: " + path);
  f << "loss,max_rel_err,instances,pass\n";
  for (const GradCheckEntry& e : entries)
    f << e.name << ',' << e.max_rel_err << ',' << e.instances << ','
      << (e.max_rel_err <= kGradCheckTol ? 1 : 0) << '\n';
}

}  // namespace ovd
