// Timing comparison between the serial reference kernels and the OpenMP
// kernels, with a bitwise equality check on every case.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "vaquita/kernels.hpp"

using namespace vaquita;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

template <typename F>
double time_ms(F&& fn, int reps) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double flops, double ref_ms, double par_ms,
            bool equal) {
  std::printf("%-22s ref %8.2f ms (%6.2f GF/s)   omp %8.2f ms (%6.2f GF/s)   "
              "speedup %4.2fx   bitwise %s\n",
              name, ref_ms, flops / ref_ms / 1e6, par_ms,
              flops / par_ms / 1e6, ref_ms / par_ms,
              equal ? "OK" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  const int reps = quick ? 1 : 3;
  std::mt19937_64 rng(2024);

  std::printf("threads: %d\n", kernels::max_threads());

  {
    const std::size_t r = 356, k = 1024, n = quick ? 512 : 4096;
    auto a = random_vec(rng, r * k);
    auto b = random_vec(rng, k * n);
    std::vector<double> c_ref(r * n), c_par(r * n);
    const double flops = 2.0 * r * k * n;
    const double ref_ms =
        time_ms([&] { kernels::ref::matmul_nn(a, b, c_ref, r, k, n); }, reps);
    const double par_ms =
        time_ms([&] { kernels::matmul_nn(a, b, c_par, r, k, n); }, reps);
    report("matmul_nn 356x1024xN", flops, ref_ms, par_ms,
           std::memcmp(c_ref.data(), c_par.data(),
                       c_ref.size() * sizeof(double)) == 0);
  }

  {
    const std::size_t r = 356, k = 64, n = quick ? 4096 : 25956;
    auto a = random_vec(rng, r * k);
    auto b = random_vec(rng, n * k);
    std::vector<double> c_ref(r * n), c_par(r * n);
    const double flops = 2.0 * r * k * n;
    const double ref_ms =
        time_ms([&] { kernels::ref::matmul_nt(a, b, c_ref, r, k, n); }, reps);
    const double par_ms =
        time_ms([&] { kernels::matmul_nt(a, b, c_par, r, k, n); }, reps);
    report("matmul_nt 356x64xN", flops, ref_ms, par_ms,
           std::memcmp(c_ref.data(), c_par.data(),
                       c_ref.size() * sizeof(double)) == 0);
  }

  {
    const std::size_t r = 356, c = quick ? 4096 : 25956;
    auto x = random_vec(rng, r * c);
    std::vector<double> y_ref(r * c), y_par(r * c);
    const double flops = 4.0 * r * c;  // exp + three passes, roughly
    const double ref_ms =
        time_ms([&] { kernels::ref::softmax_rows(x, y_ref, r, c); }, reps);
    const double par_ms =
        time_ms([&] { kernels::softmax_rows(x, y_par, r, c); }, reps);
    report("softmax_rows 356xN", flops, ref_ms, par_ms,
           std::memcmp(y_ref.data(), y_par.data(),
                       y_ref.size() * sizeof(double)) == 0);
  }

  {
    const std::size_t r = quick ? 2560 : 25600, c = 1024;
    auto x = random_vec(rng, r * c);
    auto gamma = random_vec(rng, c);
    auto beta = random_vec(rng, c);
    std::vector<double> y_ref(r * c), y_par(r * c);
    const double flops = 6.0 * r * c;
    const double ref_ms = time_ms(
        [&] { kernels::ref::layer_norm(x, gamma, beta, 1e-5, y_ref, r, c); },
        reps);
    const double par_ms = time_ms(
        [&] { kernels::layer_norm(x, gamma, beta, 1e-5, y_par, r, c); }, reps);
    report("layer_norm Nx1024", flops, ref_ms, par_ms,
           std::memcmp(y_ref.data(), y_par.data(),
                       y_ref.size() * sizeof(double)) == 0);
  }

  {
    const std::size_t n = quick ? 1u << 20 : 1u << 24;
    auto x = random_vec(rng, n);
    std::vector<double> y_ref(n), y_par(n);
    const double flops = 10.0 * n;
    const double ref_ms =
        time_ms([&] { kernels::ref::gelu(x, y_ref, n); }, reps);
    const double par_ms = time_ms([&] { kernels::gelu(x, y_par, n); }, reps);
    report("gelu N", flops, ref_ms, par_ms,
           std::memcmp(y_ref.data(), y_par.data(), n * sizeof(double)) == 0);
  }

  return 0;
}
