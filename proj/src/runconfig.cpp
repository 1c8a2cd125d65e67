#include "ovd/runconfig.hpp"

#include <json.hpp>

#include "ovd/io.hpp"
#include "ovd/rng.hpp"

namespace ovd {

namespace {

using nlohmann::json;

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_preset(const json& j, ProposalPreset& p) {
  maybe(j, "count", p.count);
  maybe(j, "jitter", p.jitter);
  maybe(j, "score_noise", p.score_noise);
  maybe(j, "iou_weight", p.iou_weight);
  maybe(j, "background_frac", p.background_frac);
}

void parse_world(const json& j, WorldConfig& w) {
  maybe(j, "num_classes", w.num_classes);
  maybe(j, "num_base", w.num_base);
  maybe(j, "latent_dim", w.latent_dim);
  maybe(j, "embed_dim", w.embed_dim);
  maybe(j, "feature_dim", w.feature_dim);
  maybe(j, "latent_noise", w.latent_noise);
  maybe(j, "teacher_noise", w.teacher_noise);
  maybe(j, "student_noise", w.student_noise);
  maybe(j, "context_mix", w.context_mix);
  maybe(j, "novel_object_frac", w.novel_object_frac);
  maybe(j, "proto_cos_cap", w.proto_cos_cap);
  maybe(j, "min_objects", w.min_objects);
  maybe(j, "max_objects", w.max_objects);
  maybe(j, "min_box_size", w.min_box_size);
  maybe(j, "max_box_size", w.max_box_size);
  maybe(j, "det_scenes", w.det_scenes);
  maybe(j, "cls_scenes", w.cls_scenes);
  maybe(j, "eval_scenes", w.eval_scenes);
  if (j.contains("mvit")) parse_preset(j.at("mvit"), w.mvit);
  if (j.contains("rpn")) parse_preset(j.at("rpn"), w.rpn);
}

void parse_train(const json& j, TrainSection& t) {
  maybe(j, "epochs", t.epochs);
  maybe(j, "base_lr", t.schedule.base_lr);
  maybe(j, "drop_factor", t.schedule.drop_factor);
  maybe(j, "drop_epochs", t.schedule.drop_epochs);
  maybe(j, "momentum", t.momentum);
  maybe(j, "weight_decay", t.weight_decay);
  maybe(j, "tau", t.tau);
  maybe(j, "tau_b", t.tau_b);
  maybe(j, "alpha", t.alpha);
  maybe(j, "beta1", t.beta1);
  maybe(j, "beta2", t.beta2);
  maybe(j, "top_k", t.top_k);
  maybe(j, "assign_thresh", t.assign_thresh);
  maybe(j, "det_batch", t.det_batch);
  maybe(j, "det_per_step", t.det_per_step);
  maybe(j, "cls_per_step", t.cls_per_step);
  maybe(j, "det_preset", t.det_preset);
  maybe(j, "rkd_preset", t.rkd_preset);
  maybe(j, "cls_preset", t.cls_preset);
  maybe(j, "use_transfer", t.use_transfer);
  maybe(j, "hidden_transfer", t.hidden_transfer);
  maybe(j, "hidden_skip", t.hidden_skip);
  maybe(j, "leaky_slope", t.leaky_slope);
}

}  // namespace

uint64_t RunConfig::train_seed() const {
  return rng::mix(master_seed, rng::tag("train"));
}

StageLossConfig RunConfig::stage_loss_config() const {
  StageLossConfig cfg;
  cfg.tau = train.tau;
  cfg.tau_b = train.tau_b;
  cfg.rkd = RkdWeights{train.beta1, train.beta2};
  cfg.ils = IlsWeights{train.alpha};
  cfg.assign_thresh = train.assign_thresh;
  cfg.top_k = train.top_k;
  cfg.det_preset = preset_by_name(world, train.det_preset);
  cfg.rkd_preset = preset_by_name(world, train.rkd_preset);
  cfg.cls_preset = preset_by_name(world, train.cls_preset);
  return cfg;
}

RunConfig default_run_config() {
  RunConfig rc;
  reseed(rc, rc.master_seed);
  return rc;
}

RunConfig run_config_from_json_text(const std::string& text) {
  RunConfig rc = default_run_config();
  json j = json::parse(text);
  uint64_t seed = rc.master_seed;
  maybe(j, "seed", seed);
  if (j.contains("world")) parse_world(j.at("world"), rc.world);
  if (j.contains("train")) parse_train(j.at("train"), rc.train);
  if (j.contains("eval")) {
    maybe(j.at("eval"), "proposal_preset", rc.eval.proposal_preset);
    maybe(j.at("eval"), "top1", rc.eval.top1);
  }
  if (j.contains("paths")) {
    maybe(j.at("paths"), "pseudo_labels", rc.paths.pseudo_labels);
    maybe(j.at("paths"), "teacher_cache", rc.paths.teacher_cache);
  }
  reseed(rc, seed);
  if (rc.train.det_per_step < 1 || rc.train.cls_per_step < 1 ||
      rc.train.det_batch < 1)
    throw ParseError("config: batch sizes must be positive");
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json_text(io::slurp(path));
}

void reseed(RunConfig& rc, uint64_t master_seed) {
  rc.master_seed = master_seed;
  rc.world.seed = rng::mix(master_seed, rng::tag("world-seed"));
}

}  // namespace ovd
