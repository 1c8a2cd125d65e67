#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ovd/pipeline.hpp"
#include "ovd/rng.hpp"

namespace fs = std::filesystem;
using namespace ovd;

namespace {

RunConfig config_from_flags(const std::string& config_path, bool have_seed,
                            uint64_t seed) {
  RunConfig rc = config_path.empty() ? default_run_config()
                                     : load_run_config(config_path);
  if (have_seed) reseed(rc, seed);
  return rc;
}

void require_out_dir(const std::string& out) {
  const fs::path dir(out);
  if (!fs::exists(dir) || !fs::is_directory(dir))
    throw PathError("output directory does not exist: " + out);
}

void refuse_overwrite(const std::vector<std::string>& paths, bool force) {
  if (force) return;
  for (const std::string& p : paths)
    if (io::file_exists(p))
      throw PathError("refusing to overwrite " + p + " (use --force)");
}

int cmd_gen(const std::string& config_path, bool have_seed, uint64_t seed,
            const std::string& out, bool force) {
  const RunConfig rc = config_from_flags(config_path, have_seed, seed);
  require_out_dir(out);
  const fs::path dir(out);
  const std::string world_path = (dir / "world.json").string();
  const std::string det_path = (dir / "det.jsonl").string();
  const std::string cls_path = (dir / "cls.jsonl").string();
  const std::string eval_path = (dir / "eval.jsonl").string();
  const std::string bank_path = (dir / "textbank.txt").string();
  refuse_overwrite({world_path, det_path, cls_path, eval_path, bank_path},
                   force);

  const World w = gen_world(rc.world);
  const Datasets ds = gen_datasets(w);
  io::save_world(w, world_path);
  io::save_scenes(ds.det, det_path);
  io::save_scenes(ds.cls, cls_path);
  io::save_scenes(ds.eval, eval_path);
  io::save_text_bank(text_embeddings(w), bank_path);
  std::cout << "wrote " << world_path << " (" << w.cfg.num_classes
            << " classes, " << w.cfg.num_base << " base)\n"
            << "wrote " << det_path << " (" << ds.det.size() << " scenes)\n"
            << "wrote " << cls_path << " (" << ds.cls.size() << " scenes)\n"
            << "wrote " << eval_path << " (" << ds.eval.size() << " scenes)\n"
            << "wrote " << bank_path << '\n';
  return 0;
}

struct DataArgs {
  std::string world, det, cls, eval;
};

World load_world_checked(const std::string& path) {
  if (path.empty()) throw PathError("--world is required");
  return io::load_world(path);
}

int cmd_train(const std::string& config_path, bool have_seed, uint64_t seed,
              const DataArgs& data, const std::string& stage_str,
              const std::string& from_ckpt, const std::string& out,
              bool allow_stage_skip) {
  RunConfig rc = config_from_flags(config_path, have_seed, seed);
  const Stage stage = stage_from_name(stage_str);

  const World w = load_world_checked(data.world);
  Datasets ds;
  if (data.det.empty()) throw PathError("--det is required");
  ds.det = io::load_scenes(data.det);
  if (stage == Stage::wt) {
    if (data.cls.empty()) throw PathError("--cls is required for stage wt");
    ds.cls = io::load_scenes(data.cls);
  }

  HeadParams init;
  const HeadParams* init_ptr = nullptr;
  if (stage != Stage::base) {
    if (from_ckpt.empty()) {
      if (!allow_stage_skip)
        throw MissingCheckpoint(
            "stage " + stage_str +
            " requires --from-checkpoint (or --allow-stage-skip to train "
            "from scratch)");
    } else {
      const io::Checkpoint ckpt = io::load_checkpoint(from_ckpt);
      const Stage expect = stage == Stage::rkd ? Stage::base : Stage::rkd;
      if (ckpt.params.stage != expect && !allow_stage_skip)
        throw StageOrderError("stage " + stage_str + " expects a " +
                              stage_name(expect) + " checkpoint, got " +
                              stage_name(ckpt.params.stage));
      init = ckpt.params;
      init_ptr = &init;
    }
  } else if (!from_ckpt.empty()) {
    init = io::load_checkpoint(from_ckpt).params;
    init_ptr = &init;
  }

  TeacherCache tcache;
  const TeacherCache* tcache_ptr = nullptr;
  if (!rc.paths.teacher_cache.empty()) {
    tcache = io::load_teacher_cache(rc.paths.teacher_cache);
    tcache_ptr = &tcache;
  }
  PseudoLabelCache plcache;
  const PseudoLabelCache* plcache_ptr = nullptr;
  if (!rc.paths.pseudo_labels.empty()) {
    plcache = io::load_pseudo_labels(rc.paths.pseudo_labels);
    plcache_ptr = &plcache;
  }

  const TrainResult res =
      train_stage(w, ds, rc, stage, init_ptr, Exec::parallel, tcache_ptr,
                  plcache_ptr);
  io::save_checkpoint(
      io::Checkpoint{res.params, w.cfg.seed, res.rng_state}, out);
  io::save_train_log(res.log, out + ".log.csv");
  const io::TrainLogRow& last = res.log.back();
  std::cout << "stage " << stage_str << " done: final total=" << last.total
            << " cls=" << last.cls << " reg=" << last.reg << " l1=" << last.l1
            << " irm=" << last.irm << " pms=" << last.pms << '\n'
            << "wrote " << out << " and " << out << ".log.csv\n";
  return 0;
}

int cmd_eval(const std::string& config_path, bool have_seed, uint64_t seed,
             const DataArgs& data, const std::string& ckpt_path,
             const std::string& out) {
  const RunConfig rc = config_from_flags(config_path, have_seed, seed);
  const World w = load_world_checked(data.world);
  if (data.eval.empty()) throw PathError("--data is required");
  const std::vector<Scene> scenes = io::load_scenes(data.eval);
  const io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
  if (ckpt.params.w_d.matrix.cols() != w.cfg.feature_dim)
    throw DimensionMismatch("checkpoint feature dim does not match world");
  const EvalReport rep = evaluate(w, scenes, ckpt.params, rc);
  io::save_eval_report(rep, w.cfg.split(), out);
  std::cout << "ap_base=" << rep.ap_base << " ap_novel=" << rep.ap_novel
            << " ap_all=" << rep.ap_all;
  if (rep.top1)
    std::cout << " top1_base=" << rep.top1->base
              << " top1_novel=" << rep.top1->novel
              << " top1_overall=" << rep.top1->overall;
  std::cout << "\nwrote " << out << '\n';
  return 0;
}

int cmd_pseudolabel(const std::string& config_path, bool have_seed,
                    uint64_t seed, const DataArgs& data,
                    const std::string& out, const std::string& teacher_out) {
  const RunConfig rc = config_from_flags(config_path, have_seed, seed);
  const World w = load_world_checked(data.world);
  const StageLossConfig cfg = rc.stage_loss_config();

  if (!out.empty()) {
    if (data.cls.empty()) throw PathError("--cls is required for --out");
    const std::vector<Scene> scenes = io::load_scenes(data.cls);
    PseudoLabelCache cache;
    for (const Scene& s : scenes)
      cache[s.id] = make_pseudo_labels(w, s, cfg.cls_preset);
    io::save_pseudo_labels(cache, out);
    std::cout << "wrote " << out << " (" << cache.size() << " scenes)\n";
  }
  if (!teacher_out.empty()) {
    if (data.det.empty()) throw PathError("--det is required for --teacher-cache");
    const std::vector<Scene> scenes = io::load_scenes(data.det);
    TeacherCache cache;
    for (const Scene& s : scenes)
      cache[s.id] = make_distill_record(w, s, cfg.rkd_preset, cfg.top_k);
    io::save_teacher_cache(cache, teacher_out);
    std::cout << "wrote " << teacher_out << " (" << cache.size()
              << " scenes)\n";
  }
  return 0;
}

int cmd_gradcheck(bool have_seed, uint64_t seed, const std::string& out,
                  int instances) {
  const uint64_t s = have_seed ? seed : 20240501ull;
  const std::vector<GradCheckEntry> entries = gradcheck_all(s, instances);
  bool all_pass = true;
  for (const GradCheckEntry& e : entries) {
    const bool pass = e.max_rel_err <= kGradCheckTol;
    all_pass = all_pass && pass;
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << e.name
              << " max_rel_err=" << e.max_rel_err << " (" << e.instances
              << " instances)\n";
  }
  if (!out.empty()) {
    save_gradcheck_csv(entries, out);
    std::cout << "wrote " << out << '\n';
  }
  return all_pass ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, bool have_seed, uint64_t seed,
               const std::string& out, int seeds) {
  const RunConfig rc = config_from_flags(config_path, have_seed, seed);
  const AblationResult res =
      run_ablation(rc, seeds, /*extras=*/false, Exec::parallel, &std::cout);
  save_ablation_csv(res, out);
  std::cout << "\nvariant            ap_novel (min..max)    ap_base\n";
  for (const AblationRow& r : res.rows) {
    std::ostringstream line;
    line << r.variant;
    while (line.str().size() < 19) line << ' ';
    line << r.mean.ap_novel << " (" << r.lo.ap_novel << ".." << r.hi.ap_novel
         << ")  " << r.mean.ap_base;
    std::cout << line.str() << '\n';
  }
  std::cout << "wrote " << out << '\n';

  auto mean_of = [&](const char* name) {
    for (const AblationRow& r : res.rows)
      if (r.variant == name) return r.mean;
    return VariantMetrics{};
  };
  const VariantMetrics base = mean_of("base"), rkd = mean_of("rkd"),
                       pis = mean_of("pis"), naive = mean_of("rkd_pis_naive"),
                       wt = mean_of("weight_transfer");
  const bool ok = base.ap_novel < rkd.ap_novel && base.ap_novel < pis.ap_novel &&
                  wt.ap_novel >= naive.ap_novel;
  std::cout << (ok ? "ordering checks passed\n" : "ordering checks FAILED\n");
  return ok ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& inputs,
               const std::string& out) {
  std::ofstream f(out);
  if (!f) throw PathError("cannot open for writing: " + out);
  f << "source,row\n";
  for (const std::string& in : inputs) {
    std::istringstream ss(io::slurp(in));
    std::string line;
    bool first = true;
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      if (first) {  // skip each file's header row
        first = false;
        continue;
      }
      f << fs::path(in).filename().string() << ',' << line << '\n';
    }
  }
  std::cout << "wrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic open-vocabulary detection sandbox"};
  app.require_subcommand(1);

  std::string config_path, out, stage_str = "base", from_ckpt, ckpt_path;
  std::string teacher_out;
  DataArgs data;
  uint64_t seed = 0;
  bool force = false, allow_stage_skip = false;
  int seeds = 3, instances = 20;
  std::vector<std::string> inputs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "master seed override");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate world + datasets");
  add_common(gen);
  gen->add_option("--out", out, "output directory")->required();
  gen->add_flag("--force", force, "overwrite existing files");

  CLI::App* train = app.add_subcommand("train", "train one stage");
  add_common(train);
  train->add_option("--stage", stage_str, "base | rkd | wt")->required();
  train->add_option("--world", data.world, "world file")->required();
  train->add_option("--det", data.det, "detection dataset");
  train->add_option("--cls", data.cls, "classification dataset");
  train->add_option("--from-checkpoint", from_ckpt, "previous-stage checkpoint");
  train->add_option("--out", out, "checkpoint output path")->required();
  train->add_flag("--allow-stage-skip", allow_stage_skip,
                  "permit training without the usual previous stage");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--world", data.world, "world file")->required();
  eval->add_option("--checkpoint", ckpt_path, "checkpoint")->required();
  eval->add_option("--data", data.eval, "scene file to evaluate on")->required();
  eval->add_option("--out", out, "report CSV path")->required();

  CLI::App* plabel =
      app.add_subcommand("pseudolabel", "dump pseudo-box labels / teacher cache");
  add_common(plabel);
  plabel->add_option("--world", data.world, "world file")->required();
  plabel->add_option("--cls", data.cls, "classification dataset");
  plabel->add_option("--det", data.det, "detection dataset");
  plabel->add_option("--out", out, "pseudo-label output path");
  plabel->add_option("--teacher-cache", teacher_out,
                     "teacher-embedding cache output path");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gradcheck);
  gradcheck->add_option("--out", out, "report CSV path");
  gradcheck->add_option("--instances", instances, "instances per loss");

  CLI::App* ablate = app.add_subcommand("ablate", "component ablation table");
  add_common(ablate);
  ablate->add_option("--out", out, "table CSV path")->required();
  ablate->add_option("--seeds", seeds, "number of seeds");

  CLI::App* report = app.add_subcommand("report", "merge CSV reports");
  report->add_option("--inputs", inputs, "CSV files")->required();
  report->add_option("--out", out, "merged CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  const CLI::App* active = app.get_subcommands().front();
  const bool have_seed =
      active->get_option_no_throw("--seed") != nullptr &&
      active->count("--seed") > 0;

  try {
    if (gen->parsed()) return cmd_gen(config_path, have_seed, seed, out, force);
    if (train->parsed())
      return cmd_train(config_path, have_seed, seed, data, stage_str,
                       from_ckpt, out, allow_stage_skip);
    if (eval->parsed())
      return cmd_eval(config_path, have_seed, seed, data, ckpt_path, out);
    if (plabel->parsed())
      return cmd_pseudolabel(config_path, have_seed, seed, data, out,
                             teacher_out);
    if (gradcheck->parsed())
      return cmd_gradcheck(have_seed, seed, out, instances);
    if (ablate->parsed())
      return cmd_ablate(config_path, have_seed, seed, out, seeds);
    if (report->parsed()) return cmd_report(inputs, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
