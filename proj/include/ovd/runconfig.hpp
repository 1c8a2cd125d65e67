#pragma once

#include <string>

#include "ovd/head.hpp"
#include "ovd/optim.hpp"
#include "ovd/simworld.hpp"

namespace ovd {

struct TrainSection {
  int epochs = 12;  // one "1x" schedule per stage
  StepSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double tau = 50.0;
  double tau_b = 50.0;
  double alpha = 0.1;
  double beta1 = 0.15;
  double beta2 = 0.15;
  int top_k = 5;
  double assign_thresh = 0.5;
  int det_batch = 8;     // scenes per step in base/rkd stages
  int det_per_step = 2;  // wt stage: detection images per step
  int cls_per_step = 8;  // wt stage: classification images per step (1:4)
  std::string det_preset = "mvit_like";
  std::string rkd_preset = "mvit_like";
  std::string cls_preset = "mvit_like";
  bool use_transfer = true;
  int hidden_transfer = 512;
  int hidden_skip = 1024;
  double leaky_slope = 0.1;
};

struct EvalSection {
  std::string proposal_preset = "mvit_like";
  bool top1 = true;
};

struct PathsSection {
  std::string pseudo_labels;  // optional, produced by the pseudolabel command
  std::string teacher_cache;  // optional
};

struct RunConfig {
  uint64_t master_seed = 1234;
  WorldConfig world;  // world.seed is derived from master_seed
  TrainSection train;
  EvalSection eval;
  PathsSection paths;

  uint64_t train_seed() const;
  StageLossConfig stage_loss_config() const;
};

RunConfig default_run_config();

// JSON file with optional sections "world", "train", "eval", "paths" and an
// optional top-level "seed"; anything missing keeps its default.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);

// Re-derives seed-dependent fields after a seed override.
void reseed(RunConfig& rc, uint64_t master_seed);

}  // namespace ovd
