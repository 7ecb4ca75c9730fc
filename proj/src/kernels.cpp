#include "faceanim/kernels.hpp"

#include <omp.h>

#include <atomic>

namespace faceanim::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

void set_num_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

#define FA_DISPATCH(fn, ...)                  \
    do {                                      \
        if (g_parallel.load())                \
            omp::fn(__VA_ARGS__);             \
        else                                  \
            serial::fn(__VA_ARGS__);          \
    } while (0)

void matmul_nt(const double* a, const double* b, double* c, int m, int n, int k) {
    FA_DISPATCH(matmul_nt, a, b, c, m, n, k);
}
void matmul_nn(const double* a, const double* b, double* c, int m, int n, int k) {
    FA_DISPATCH(matmul_nn, a, b, c, m, n, k);
}
void matmul_tn(const double* a, const double* b, double* c, int m, int n, int k) {
    FA_DISPATCH(matmul_tn, a, b, c, m, n, k);
}
void transpose(const double* a, double* at, int rows, int cols) {
    FA_DISPATCH(transpose, a, at, rows, cols);
}
void im2col(const double* x, double* cols, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow) {
    FA_DISPATCH(im2col, x, cols, c, h, w, kh, kw, stride, pad, oh, ow);
}
void col2im(const double* cols, double* dx, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow) {
    FA_DISPATCH(col2im, cols, dx, c, h, w, kh, kw, stride, pad, oh, ow);
}
void axpy(int64_t n, double alpha, const double* x, double* y) { FA_DISPATCH(axpy, n, alpha, x, y); }
void col_sum(const double* a, double* out, int rows, int cols) { FA_DISPATCH(col_sum, a, out, rows, cols); }
void softmax_rows(const double* x, double* y, int rows, int cols) {
    FA_DISPATCH(softmax_rows, x, y, rows, cols);
}

#undef FA_DISPATCH

}  // namespace faceanim::kernels
