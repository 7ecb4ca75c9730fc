#include <omp.h>

#include <vector>

#include "faceanim/kernels.hpp"
#include "kernels_detail.hpp"

// OpenMP kernels. Each pragma partitions independent output elements; the
// per-element arithmetic is the shared detail:: code, so outputs are
// bit-identical to the serial reference for any thread count.

namespace faceanim::kernels::omp {

void matmul_nt(const double* a, const double* b, double* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<long>(i) * k;
        double* ci = c + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = detail::dot(ai, b + static_cast<long>(j) * k, k);
    }
}

void matmul_nn(const double* a, const double* b, double* c, int m, int n, int k) {
    std::vector<double> bt(static_cast<size_t>(n) * k);
    transpose(b, bt.data(), k, n);
    matmul_nt(a, bt.data(), c, m, n, k);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int n, int k) {
    std::vector<double> at(static_cast<size_t>(m) * k);
    transpose(a, at.data(), k, m);
    matmul_nn(at.data(), b, c, m, n, k);
}

void transpose(const double* a, double* at, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) at[static_cast<long>(j) * rows + i] = a[static_cast<long>(i) * cols + j];
}

void im2col(const double* x, double* cols, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow) {
    const int row_len = c * kh * kw;
    const int total = oh * ow;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < total; ++p)
        detail::im2col_row(x, cols + static_cast<long>(p) * row_len, c, h, w, kh, kw, stride, pad, ow, p);
}

void col2im(const double* cols, double* dx, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow) {
    // Parallel over input channels: every (ch, iy, ix) cell is written by one
    // thread only, and the accumulation order over (p, ky, kx) matches the
    // serial reference.
    const int row_len = c * kh * kw;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        double* xc = dx + static_cast<long>(ch) * h * w;
        for (int p = 0; p < oh * ow; ++p) {
            const int oy = p / ow;
            const int ox = p % ow;
            const double* row = cols + static_cast<long>(p) * row_len + static_cast<long>(ch) * kh * kw;
            int idx = 0;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - pad + ky;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - pad + kx;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w) xc[iy * w + ix] += row[idx];
                    ++idx;
                }
            }
        }
    }
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void col_sum(const double* a, double* out, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < rows; ++i) acc += a[static_cast<long>(i) * cols + j];
        out[j] += acc;
    }
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i)
        detail::softmax_row(x + static_cast<long>(i) * cols, y + static_cast<long>(i) * cols, cols);
}

}  // namespace faceanim::kernels::omp
