// Times the Monte-Carlo certification kernels with the serial reference path
// (jobs = 1) against the OpenMP path, and checks that both produce identical
// results (they must: samples write to preassigned slots and the reduction is
// a serial fold).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "unroll/parallel.hpp"
#include "unroll/properties.hpp"

using namespace unroll;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct BenchResult {
  double seconds = 0.0;
  double checksum = 0.0;
};

BenchResult run_suite(PropertyConfig cfg, int jobs) {
  cfg.jobs = jobs;
  const auto t0 = std::chrono::steady_clock::now();
  double checksum = 0.0;
  for (Alg alg : {Alg::kGd, Alg::kNag}) {
    cfg.alg = alg;
    const Interval region = stable_region(alg, cfg.mu, cfg.L, cfg.c0);
    const double phi = 0.5 * (region.lo + region.hi);
    for (double v : empirical_cvg(cfg, phi)) checksum += v;
    for (double v : empirical_stab(cfg, phi)) checksum += v;
    for (double v : empirical_sens(cfg)) checksum += v;
  }
  return {seconds_since(t0), checksum};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark: serial reference vs OpenMP certification kernels"};
  int jobs = 0;
  int samples = 400;
  uint64_t seed = 0;
  app.add_option("--jobs", jobs, "parallel worker count (0 = hardware)");
  app.add_option("--samples", samples, "Monte-Carlo samples per estimator");
  app.add_option("--seed", seed, "base seed");
  CLI11_PARSE(app, argc, argv);
  if (jobs <= 0) jobs = hardware_jobs();

  PropertyConfig cfg;
  cfg.n_samples = samples;
  cfg.k_grid = {1, 5, 20, 100};
  cfg.seed = seed;

  std::printf("certification kernels, %d samples per estimator, k grid {1,5,20,100}\n", samples);
  const BenchResult serial = run_suite(cfg, 1);
  std::printf("serial reference (jobs=1): %8.3f s\n", serial.seconds);
  const BenchResult parallel = run_suite(cfg, jobs);
  std::printf("openmp           (jobs=%d): %8.3f s\n", jobs, parallel.seconds);
  std::printf("speedup: %.2fx\n", serial.seconds / parallel.seconds);

  if (serial.checksum != parallel.checksum) {
    std::printf("MISMATCH: serial %.17g vs parallel %.17g\n", serial.checksum, parallel.checksum);
    return 1;
  }
  std::printf("results identical (checksum %.17g)\n", serial.checksum);
  return 0;
}
