// Throughput comparison of the OpenMP morphology kernels against the serial
// reference implementation, plus a correctness cross-check on each size.
#include <chrono>
#include <cstdio>
#include <cstring>

#include <omp.h>

#include "morphseg/morphology.hpp"
#include "morphseg/rng.hpp"

using namespace morphseg;
using clock_type = std::chrono::steady_clock;

namespace {

Volume3D random_volume(int k, int m, int n, SplitMix64& rng) {
  Volume3D v(k, m, n);
  for (auto& x : v.data) x = static_cast<float>(rng.next_double());
  return v;
}

template <typename F>
double time_ms(F&& f, int reps) {
  auto t0 = clock_type::now();
  for (int r = 0; r < reps; ++r) f();
  auto t1 = clock_type::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  SplitMix64 rng(42);
  printf("threads=%d reps=%d\n", omp_get_max_threads(), reps);
  printf("%-14s %12s %12s %8s %8s\n", "size", "serial_ms", "openmp_ms",
         "speedup", "match");
  const int sizes[][3] = {{16, 32, 32}, {32, 64, 64}, {32, 128, 128},
                          {64, 128, 128}};
  for (auto& s : sizes) {
    Volume3D v = random_volume(s[0], s[1], s[2], rng);
    Volume3D ref_si = reference::si(v), ref_is = reference::is_op(v);
    Volume3D par_si = si(v), par_is = is_op(v);
    bool match = std::memcmp(ref_si.data.data(), par_si.data.data(),
                             ref_si.size() * sizeof(float)) == 0 &&
                 std::memcmp(ref_is.data.data(), par_is.data.data(),
                             ref_is.size() * sizeof(float)) == 0;
    double t_ser = time_ms([&] { reference::si(v); reference::is_op(v); }, reps);
    double t_par = time_ms([&] { si(v); is_op(v); }, reps);
    char label[32];
    snprintf(label, sizeof(label), "%dx%dx%d", s[0], s[1], s[2]);
    printf("%-14s %12.3f %12.3f %8.2f %8s\n", label, t_ser, t_par,
           t_ser / t_par, match ? "yes" : "NO");
    if (!match) return 1;
  }
  return 0;
}
