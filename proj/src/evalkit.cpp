#include "ovd/evalkit.hpp"

#include <algorithm>
#include <cmath>

namespace ovd {

namespace {

struct RankedDet {
  double score;
  int scene;
  int det;
};

double class_ap50(const std::vector<std::vector<Detection>>& dets,
                  const std::vector<std::vector<GtBox>>& gts, int class_id,
                  int* num_gt_out) {
  int num_gt = 0;
  for (const auto& scene_gts : gts)
    for (const GtBox& g : scene_gts)
      if (g.class_id == class_id) ++num_gt;
  *num_gt_out = num_gt;
  if (num_gt == 0) return 0.0;

  std::vector<RankedDet> ranked;
  for (int s = 0; s < static_cast<int>(dets.size()); ++s)
    for (int d = 0; d < static_cast<int>(dets[static_cast<size_t>(s)].size());
         ++d)
      if (dets[static_cast<size_t>(s)][static_cast<size_t>(d)].class_id ==
          class_id)
        ranked.push_back(
            {dets[static_cast<size_t>(s)][static_cast<size_t>(d)].score, s, d});
  std::sort(ranked.begin(), ranked.end(),
            [](const RankedDet& a, const RankedDet& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.scene != b.scene) return a.scene < b.scene;
              return a.det < b.det;
            });

  // greedy match: highest-IoU unmatched GT of this class, IoU >= 0.5
  std::vector<std::vector<char>> used(gts.size());
  for (size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), 0);

  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const RankedDet& rd : ranked) {
    const Detection& det =
        dets[static_cast<size_t>(rd.scene)][static_cast<size_t>(rd.det)];
    const auto& scene_gts = gts[static_cast<size_t>(rd.scene)];
    int best = -1;
    double best_iou = 0.0;
    for (int j = 0; j < static_cast<int>(scene_gts.size()); ++j) {
      if (scene_gts[static_cast<size_t>(j)].class_id != class_id) continue;
      if (used[static_cast<size_t>(rd.scene)][static_cast<size_t>(j)]) continue;
      const double v = iou(det.box, scene_gts[static_cast<size_t>(j)].box);
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    if (best >= 0 && best_iou >= 0.5) {
      used[static_cast<size_t>(rd.scene)][static_cast<size_t>(best)] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / num_gt);
  }

  // 101-point interpolation: mean over r of max precision at recall >= r
  double ap = 0.0;
  for (int ri = 0; ri <= 100; ++ri) {
    const double r = ri / 100.0;
    double best_p = 0.0;
    for (size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= r) best_p = std::max(best_p, precision[i]);
    ap += best_p;
  }
  return ap / 101.0;
}

double mean_over(const std::vector<double>& ap,
                 const std::vector<uint8_t>& has_gt, int lo, int hi) {
  double sum = 0.0;
  int n = 0;
  for (int c = lo; c < hi; ++c) {
    if (!has_gt[static_cast<size_t>(c)]) continue;
    sum += ap[static_cast<size_t>(c)];
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace

EvalReport ap50(const std::vector<std::vector<Detection>>& dets_per_scene,
                const std::vector<std::vector<GtBox>>& gts_per_scene,
                const ClassSplit& split, Exec exec) {
  if (dets_per_scene.size() != gts_per_scene.size())
    throw DimensionMismatch("ap50: scene count mismatch");
  for (const auto& dets : dets_per_scene)
    for (const Detection& d : dets)
      if (d.class_id < 0 || d.class_id >= split.num_total)
        throw UnknownClass("ap50: detection class " +
                           std::to_string(d.class_id));
  for (const auto& gts : gts_per_scene)
    for (const GtBox& g : gts)
      if (g.class_id < 0 || g.class_id >= split.num_total)
        throw UnknownClass("ap50: ground-truth class " +
                           std::to_string(g.class_id));

  EvalReport rep;
  const int c = split.num_total;
  rep.per_class_ap.assign(static_cast<size_t>(c), 0.0);
  rep.class_has_gt.assign(static_cast<size_t>(c), 0);

  auto worker = [&](int cls) {
    int num_gt = 0;
    rep.per_class_ap[static_cast<size_t>(cls)] =
        class_ap50(dets_per_scene, gts_per_scene, cls, &num_gt);
    rep.class_has_gt[static_cast<size_t>(cls)] = num_gt > 0 ? 1 : 0;
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int cls = 0; cls < c; ++cls) worker(cls);
  } else {
    for (int cls = 0; cls < c; ++cls) worker(cls);
  }

  rep.ap_base = mean_over(rep.per_class_ap, rep.class_has_gt, 0, split.num_base);
  rep.ap_novel =
      mean_over(rep.per_class_ap, rep.class_has_gt, split.num_base, c);
  rep.ap_all = mean_over(rep.per_class_ap, rep.class_has_gt, 0, c);
  return rep;
}

RegionTop1 top1_region_acc(const World& w, const std::vector<Scene>& scenes,
                           const HeadParams& p, const TextBank& full_bank,
                           Exec exec) {
  const TextBank bank_no_bg{full_bank.rows, /*includes_background=*/false};
  const EmbedPath path = make_embed_path(p);
  const int n = static_cast<int>(scenes.size());
  std::vector<std::array<long, 4>> counts(static_cast<size_t>(n),
                                          {0, 0, 0, 0});  // hitB, nB, hitN, nN

  auto worker = [&](int i) {
    const Scene& s = scenes[static_cast<size_t>(i)];
    auto& cnt = counts[static_cast<size_t>(i)];
    for (const SceneObject& o : s.objects) {
      const Eigen::VectorXd phi = student_features(w, s, o.box);
      Eigen::VectorXd e = path.proj * phi;
      if (path.transferred) e += skip_forward(phi, p.skip);
      const Eigen::VectorXd logits = class_logits(e, bank_no_bg, 1.0);
      int arg = 0;
      for (int cidx = 1; cidx < static_cast<int>(logits.size()); ++cidx)
        if (logits[cidx] > logits[arg]) arg = cidx;
      const bool novel = w.cfg.split().is_novel(o.class_id);
      const bool hit = arg == o.class_id;
      if (novel) {
        cnt[3] += 1;
        if (hit) cnt[2] += 1;
      } else {
        cnt[1] += 1;
        if (hit) cnt[0] += 1;
      }
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) worker(i);
  } else {
    for (int i = 0; i < n; ++i) worker(i);
  }

  long hit_b = 0, n_b = 0, hit_n = 0, n_n = 0;
  for (const auto& cnt : counts) {
    hit_b += cnt[0];
    n_b += cnt[1];
    hit_n += cnt[2];
    n_n += cnt[3];
  }
  RegionTop1 out;
  out.base = n_b > 0 ? static_cast<double>(hit_b) / n_b : 0.0;
  out.novel = n_n > 0 ? static_cast<double>(hit_n) / n_n : 0.0;
  out.overall = (n_b + n_n) > 0
                    ? static_cast<double>(hit_b + hit_n) / (n_b + n_n)
                    : 0.0;
  return out;
}

std::vector<std::vector<Detection>> detect_scenes(
    const World& w, const std::vector<Scene>& scenes, const HeadParams& p,
    const TextBank& bank, double tau, const ProposalPreset& preset,
    Exec exec) {
  const int n = static_cast<int>(scenes.size());
  std::vector<std::vector<Detection>> out(static_cast<size_t>(n));
  auto worker = [&](int i) {
    const Scene& s = scenes[static_cast<size_t>(i)];
    out[static_cast<size_t>(i)] =
        forward_detect(w, s, propose(w, s, preset), p, bank, tau);
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) worker(i);
  } else {
    for (int i = 0; i < n; ++i) worker(i);
  }
  return out;
}

}  // namespace ovd
