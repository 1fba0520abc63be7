// Compares the serial reference kernel against the OpenMP one and times a
// full pipeline run. Not part of the test suite.
#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lorafuse/config.hpp"
#include "lorafuse/matrix.hpp"
#include "lorafuse/rng.hpp"
#include "lorafuse/sim.hpp"

using namespace lorafuse;

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void bench_matmul(std::size_t n, int reps) {
  Rng rng(7);
  const DenseMatrix a = DenseMatrix::gaussian(n, n, rng);
  const DenseMatrix b = DenseMatrix::gaussian(n, n, rng);

  double t0 = now_s();
  DenseMatrix c_serial;
  for (int r = 0; r < reps; ++r) c_serial = matmul_serial(a, b);
  const double serial_s = (now_s() - t0) / reps;

  t0 = now_s();
  DenseMatrix c_par;
  for (int r = 0; r < reps; ++r) c_par = matmul(a, b);
  const double par_s = (now_s() - t0) / reps;

  const bool identical = c_serial == c_par;
  const double flops = 2.0 * static_cast<double>(n) * n * n;
  std::printf("matmul %4zu^3  serial %8.2f MFLOP/s  parallel %8.2f MFLOP/s  "
              "speedup %.2fx  bitwise_equal=%s\n",
              n, flops / serial_s / 1e6, flops / par_s / 1e6,
              serial_s / par_s, identical ? "yes" : "NO");
}

void bench_pipeline() {
  Config cfg = default_config(1);
  const double t0 = now_s();
  const PipelineResult result = run_pipeline(cfg);
  std::printf("pipeline (default config): %.3f s  [train %.3f s, cr %.3f s]\n",
              now_s() - t0, result.report.timings.train_s,
              result.report.timings.cr_s);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled (serial build)\n");
#endif
  bench_matmul(64, 20);
  bench_matmul(256, 5);
  bench_matmul(512, 3);
  bench_pipeline();
  return 0;
}
