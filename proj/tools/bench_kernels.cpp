// Benchmark comparing the serial reference kernels against the OpenMP ones.
// Run with no arguments for the default sweep, or pass a size list.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "faceanim/kernels.hpp"
#include "faceanim/rng.hpp"
#include "faceanim/tensor.hpp"

using namespace faceanim;
namespace k = faceanim::kernels;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <class F>
double time_best_ms(F&& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        fn();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

void bench_matmul(int m, int n, int kk, int reps) {
    Rng rng(1);
    Tensor a({m, kk}), b({n, kk}), c({m, n});
    rng.fill_normal(a);
    rng.fill_normal(b);

    const double ts = time_best_ms([&] { k::serial::matmul_nt(a.ptr(), b.ptr(), c.ptr(), m, n, kk); }, reps);
    Tensor cref = c;
    const double tp = time_best_ms([&] { k::omp::matmul_nt(a.ptr(), b.ptr(), c.ptr(), m, n, kk); }, reps);
    const bool same = cref.bit_equal(c);
    const double flops = 2.0 * m * n * kk;
    std::printf("matmul_nt  %4dx%4dx%4d  serial %8.3f ms (%6.2f GFLOPS)  omp %8.3f ms (%6.2f GFLOPS)  speedup %.2fx  bitexact=%s\n",
                m, n, kk, ts, flops / ts / 1e6, tp, flops / tp / 1e6, ts / tp, same ? "yes" : "NO");
}

void bench_conv(int c, int hw, int cout, int reps) {
    Rng rng(2);
    Tensor x({c, hw, hw}), w({cout, c, 3, 3});
    rng.fill_normal(x);
    rng.fill_normal(w);
    const int oh = k::conv_out_dim(hw, 3, 1, 1);
    Tensor cols({oh * oh, c * 9}), out({cout, oh * oh});

    auto run_serial = [&] {
        k::serial::im2col(x.ptr(), cols.ptr(), c, hw, hw, 3, 3, 1, 1, oh, oh);
        k::serial::matmul_nt(w.ptr(), cols.ptr(), out.ptr(), cout, oh * oh, c * 9);
    };
    auto run_omp = [&] {
        k::omp::im2col(x.ptr(), cols.ptr(), c, hw, hw, 3, 3, 1, 1, oh, oh);
        k::omp::matmul_nt(w.ptr(), cols.ptr(), out.ptr(), cout, oh * oh, c * 9);
    };
    const double ts = time_best_ms(run_serial, reps);
    Tensor ref = out;
    const double tp = time_best_ms(run_omp, reps);
    const double flops = 2.0 * cout * oh * oh * c * 9;
    std::printf("conv3x3    %3dch %3dpx ->%3dch  serial %8.3f ms (%6.2f GFLOPS)  omp %8.3f ms (%6.2f GFLOPS)  speedup %.2fx  bitexact=%s\n",
                c, hw, cout, ts, flops / ts / 1e6, tp, flops / tp / 1e6, ts / tp,
                ref.bit_equal(out) ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::stoi(argv[1]);
    std::printf("kernel benchmark, best of %d reps\n", reps);
    bench_matmul(256, 256, 256, reps);
    bench_matmul(256, 864, 96, reps);
    bench_matmul(65, 384, 128, reps);
    bench_matmul(1024, 512, 512, reps);
    bench_conv(96, 16, 64, reps);
    bench_conv(64, 16, 64, reps);
    bench_conv(32, 64, 32, reps);
    return 0;
}
