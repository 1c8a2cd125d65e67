#pragma once

#include <string>
#include <vector>

#include "ovd/evalkit.hpp"
#include "ovd/head.hpp"
#include "ovd/simworld.hpp"

namespace ovd::io {

// Text bank file: header line "C D", then C whitespace-separated rows with
// round-trip-exact decimals. The background row is implied, never stored.
void save_text_bank(const TextBank& bank, const std::string& path);
TextBank load_text_bank(const std::string& path);

// World and scene files are JSON (one scene per line in dataset files), with
// a schema version field. Doubles use shortest round-trip formatting, so
// regeneration from the same seed is byte-identical.
void save_world(const World& w, const std::string& path);
World load_world(const std::string& path);

void save_scenes(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> load_scenes(const std::string& path);

// Checkpoint: versioned text header, stage tag, matrices with shape prefixes
// in hexfloat (bit-exact round trip), training RNG state, world identifier.
struct Checkpoint {
  HeadParams params;
  uint64_t world_seed = 0;
  std::string rng_state;  // mt19937_64 textual state at save time
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// One record per (scene, class): scene_id class_id x1 y1 x2 y2 score.
void save_pseudo_labels(const PseudoLabelCache& labels,
                        const std::string& path);
PseudoLabelCache load_pseudo_labels(const std::string& path);

// One record per (scene, k): scene_id k x1 y1 x2 y2 e_0 ... e_{D-1}.
void save_teacher_cache(const TeacherCache& cache, const std::string& path);
TeacherCache load_teacher_cache(const std::string& path);

struct TrainLogRow {
  int epoch = 0;
  double lr = 0.0;
  double cls = 0.0, reg = 0.0, l1 = 0.0, irm = 0.0, pms = 0.0, total = 0.0;
  double wall_s = 0.0;
};

void save_train_log(const std::vector<TrainLogRow>& rows,
                    const std::string& path);

// class_id,group,ap rows followed by summary rows (group means, and top-1
// accuracies when present).
void save_eval_report(const EvalReport& rep, const ClassSplit& split,
                      const std::string& path);

std::string slurp(const std::string& path);
bool file_exists(const std::string& path);

}  // namespace ovd::io
