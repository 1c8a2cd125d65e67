#pragma once

#include <optional>
#include <vector>

#include "ovd/head.hpp"

namespace ovd {

struct RegionTop1 {
  double base = 0.0;
  double novel = 0.0;
  double overall = 0.0;
};

struct EvalReport {
  std::vector<double> per_class_ap;   // indexed by class id
  std::vector<uint8_t> class_has_gt;  // classes without GT are excluded
  double ap_base = 0.0;
  double ap_novel = 0.0;
  double ap_all = 0.0;
  std::optional<RegionTop1> top1;
};

// AP50 with greedy IoU matching and 101-point interpolation, per class, then
// arithmetic means over the base / novel / all groups (classes with no ground
// truth excluded). Detections sort by score descending with ties broken by
// lower scene index, then lower detection index.
EvalReport ap50(const std::vector<std::vector<Detection>>& dets_per_scene,
                const std::vector<std::vector<GtBox>>& gts_per_scene,
                const ClassSplit& split, Exec exec = Exec::parallel);

// Zero-shot region classification over ground-truth boxes: argmax of the
// model's class logits over base + novel rows, no background row.
RegionTop1 top1_region_acc(const World& w, const std::vector<Scene>& scenes,
                           const HeadParams& p, const TextBank& full_bank,
                           Exec exec = Exec::parallel);

// forward_detect over a scene list with per-scene slots (order-stable).
std::vector<std::vector<Detection>> detect_scenes(
    const World& w, const std::vector<Scene>& scenes, const HeadParams& p,
    const TextBank& bank, double tau, const ProposalPreset& preset,
    Exec exec = Exec::parallel);

}  // namespace ovd
