#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ovd/evalkit.hpp"
#include "ovd/io.hpp"
#include "ovd/runconfig.hpp"

namespace ovd {

struct TrainResult {
  HeadParams params;
  std::vector<io::TrainLogRow> log;
  std::string rng_state;  // training engine state after the last step
};

// One stage of the stage-wise recipe. init must be a base-stage checkpoint
// for rkd and an rkd-stage checkpoint for wt; nullptr trains from scratch
// (the from-scratch ablation for rkd). The wt stage freezes W_D when the
// transferred path is enabled and interleaves detection and classification
// images at the configured ratio.
TrainResult train_stage(const World& w, const Datasets& ds,
                        const RunConfig& rc, Stage stage,
                        const HeadParams* init, Exec exec = Exec::parallel,
                        const TeacherCache* tcache = nullptr,
                        const PseudoLabelCache* plcache = nullptr);

// Detect on the eval split with the full base+novel bank and score AP50;
// top-1 region accuracies attached when rc.eval.top1 is set.
EvalReport evaluate(const World& w, const std::vector<Scene>& eval_scenes,
                    const HeadParams& p, const RunConfig& rc,
                    Exec exec = Exec::parallel);

struct VariantMetrics {
  double ap_novel = 0.0, ap_base = 0.0, ap_all = 0.0;
  double top1_base = 0.0, top1_novel = 0.0, top1_overall = 0.0;
};

struct AblationRow {
  std::string variant;
  VariantMetrics mean, lo, hi;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // fixed variant order
  std::map<std::string, std::vector<VariantMetrics>> per_seed;
};

inline constexpr const char* kAblationVariants[] = {
    "base", "rkd", "pis", "rkd_pis_naive", "weight_transfer"};
inline constexpr const char* kExtraVariants[] = {"rkd_scratch", "rkd_rpn"};

// Trains and evaluates the ablation table variants over num_seeds seeded
// worlds. Extras add the rkd-from-scratch and rpn-proposal-distillation
// variants used by the initialization and proposal-quality comparisons.
AblationResult run_ablation(const RunConfig& rc, int num_seeds, bool extras,
                            Exec exec = Exec::parallel,
                            std::ostream* progress = nullptr);

void save_ablation_csv(const AblationResult& res, const std::string& path);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int instances = 0;
};

// Finite-difference verification of every analytic gradient on seeded tiny
// instances. Relative error uses a 1e-6 denominator floor.
std::vector<GradCheckEntry> gradcheck_all(uint64_t seed, int instances_each);

void save_gradcheck_csv(const std::vector<GradCheckEntry>& entries,
                        const std::string& path);

inline constexpr double kGradCheckTol = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;

}  // namespace ovd
