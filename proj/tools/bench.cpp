// Times the serial reference against the OpenMP kernels on the two hot
// paths: batched stage-loss gradients and dataset evaluation.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ovd/pipeline.hpp"
#include "ovd/rng.hpp"

using namespace ovd;
using Clock = std::chrono::steady_clock;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best,
                    std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int batch_size = argc > 1 ? std::atoi(argv[1]) : 64;
  const int reps = argc > 2 ? std::atoi(argv[2]) : 3;

  RunConfig rc = default_run_config();
  const World w = gen_world(rc.world);
  const Datasets ds = gen_datasets(w);
  const TextBank train_bank = base_text_bank(w);
  const TextBank full_bank = text_embeddings(w);
  const StageLossConfig cfg = rc.stage_loss_config();

  HeadParams params = init_head_params(w.cfg, 7);
  params.stage = Stage::wt;
  params.use_transfer = true;

  std::vector<BatchScene> batch;
  for (int i = 0; i < batch_size; ++i) {
    if (i % 5 == 0)
      batch.push_back({&ds.det[static_cast<size_t>(i) % ds.det.size()],
                       BatchKind::detection});
    else
      batch.push_back({&ds.cls[static_cast<size_t>(i) % ds.cls.size()],
                       BatchKind::classification});
  }

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (no OpenMP)\n");
#endif
  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial[s]", "parallel[s]",
              "speedup");

  {
    StageLossResult serial_res, parallel_res;
    const double ts = time_of(
        [&] {
          serial_res = stage_loss(w, batch, params, train_bank, full_bank,
                                  cfg, Exec::serial);
        },
        reps);
    const double tp = time_of(
        [&] {
          parallel_res = stage_loss(w, batch, params, train_bank, full_bank,
                                    cfg, Exec::parallel);
        },
        reps);
    std::printf("%-28s %10.4f %10.4f %7.2fx\n", "stage_loss (wt batch)", ts,
                tp, ts / tp);
    if (serial_res.loss != parallel_res.loss)
      std::printf("  WARNING: serial/parallel loss mismatch (%.17g vs %.17g)\n",
                  serial_res.loss, parallel_res.loss);
  }

  {
    std::vector<std::vector<Detection>> serial_dets, parallel_dets;
    const double ts = time_of(
        [&] {
          serial_dets = detect_scenes(w, ds.eval, params, full_bank,
                                      rc.train.tau, w.cfg.mvit, Exec::serial);
        },
        reps);
    const double tp = time_of(
        [&] {
          parallel_dets =
              detect_scenes(w, ds.eval, params, full_bank, rc.train.tau,
                            w.cfg.mvit, Exec::parallel);
        },
        reps);
    std::printf("%-28s %10.4f %10.4f %7.2fx\n", "detect_scenes (eval set)", ts,
                tp, ts / tp);

    std::vector<std::vector<GtBox>> gts;
    for (const Scene& s : ds.eval) gts.push_back(all_annotations(s));
    const double tas = time_of(
        [&] { ap50(parallel_dets, gts, w.cfg.split(), Exec::serial); }, reps);
    const double tap = time_of(
        [&] { ap50(parallel_dets, gts, w.cfg.split(), Exec::parallel); },
        reps);
    std::printf("%-28s %10.4f %10.4f %7.2fx\n", "ap50 (per-class)", tas, tap,
                tas / tap);
  }
  return 0;
}
