// Times the parallel forward kernels against the serial reference and checks
// that both agree. Usage: bench_kernels [side] [reps]
#include <chrono>
#include <iomanip>
#include <iostream>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "disp/isp.hpp"
#include "disp/nn.hpp"
#include "ref_kernels.hpp"

using namespace disp;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(int reps, const std::function<Tensor()>& f, Tensor& last) {
  last = f();  // warm-up, also the value used for the agreement check
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) last = f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

void row(const std::string& name, int reps, const std::function<Tensor()>& par,
         const std::function<Tensor()>& ser) {
  Tensor a, b;
  const double tp = time_ms(reps, par, a);
  const double ts = time_ms(reps, ser, b);
  std::cout << std::left << std::setw(10) << name << std::right << std::fixed
            << std::setprecision(3) << "  parallel " << std::setw(9) << tp << " ms   serial "
            << std::setw(9) << ts << " ms   speedup " << std::setprecision(2) << ts / tp
            << "x   max|diff| " << std::scientific << std::setprecision(2) << max_abs_diff(a, b)
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  const int side = argc > 1 ? std::atoi(argv[1]) : 256;
  const int reps = argc > 2 ? std::atoi(argv[2]) : 5;
#ifdef _OPENMP
  std::cout << "threads: " << omp_get_max_threads() << ", image " << side << "x" << side << ", "
            << reps << " reps\n";
#else
  std::cout << "built without OpenMP; both columns are serial\n";
#endif

  std::mt19937_64 rng(7);
  const Tensor img = rand_uniform({1, side, side}, rng, 0.0, 1.0);
  const Tensor feat = randn({8, side / 4, side / 4}, rng);
  const Tensor kernels = randn({16, 8, 3, 3}, rng, 0.1);

  Tensor p_dn({3}, {0.7, 1.2, 0.2});
  Tensor p_sn({2}, {0.5, 1.0});

  row("dn", reps, [&] { return apply_dn(img, p_dn).output; },
      [&] { return ref::dn(img, p_dn[0], p_dn[1], p_dn[2]); });
  row("sn", reps, [&] { return apply_sn(img, p_sn).output; },
      [&] { return ref::sn(img, p_sn[0], p_sn[1]); });
  row("conv2d", reps, [&] { return conv2d(feat, kernels, 2, Pad::Reflect).output; },
      [&] { return ref::conv2d(feat, kernels, 2, Pad::Reflect); });
  return 0;
}
