#pragma once

#include <cstdint>

namespace faceanim::kernels {

// Dense numeric kernels used by every module. Each kernel has a serial
// reference implementation (namespace serial) and an OpenMP one (namespace
// omp). Both share the same per-output-element arithmetic, so results are
// bit-identical regardless of thread count: parallelism only partitions
// independent output elements.
//
// The dispatching functions at namespace scope pick the OpenMP version when
// parallel mode is enabled (the default) and the serial version otherwise.

void set_parallel(bool enabled);
bool parallel_enabled();
void set_num_threads(int n);  // 0 = library default

namespace serial {

// c[m,n] = a[m,k] * b[n,k]^T  (dot products of contiguous rows)
void matmul_nt(const double* a, const double* b, double* c, int m, int n, int k);
// c[m,n] = a[m,k] * b[k,n]
void matmul_nn(const double* a, const double* b, double* c, int m, int n, int k);
// c[m,n] = a[k,m]^T * b[k,n]
void matmul_tn(const double* a, const double* b, double* c, int m, int n, int k);

void transpose(const double* a, double* at, int rows, int cols);

// x: [c, h, w] -> cols: [oh*ow, c*kh*kw], zero padding.
void im2col(const double* x, double* cols, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow);
// Accumulates cols back into dx (must be pre-zeroed).
void col2im(const double* cols, double* dx, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow);

// y += alpha * x
void axpy(int64_t n, double alpha, const double* x, double* y);

// row sums of a [rows, cols] matrix accumulated into out[cols]
void col_sum(const double* a, double* out, int rows, int cols);

void softmax_rows(const double* x, double* y, int rows, int cols);

}  // namespace serial

namespace omp {

void matmul_nt(const double* a, const double* b, double* c, int m, int n, int k);
void matmul_nn(const double* a, const double* b, double* c, int m, int n, int k);
void matmul_tn(const double* a, const double* b, double* c, int m, int n, int k);
void transpose(const double* a, double* at, int rows, int cols);
void im2col(const double* x, double* cols, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow);
void col2im(const double* cols, double* dx, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow);
void axpy(int64_t n, double alpha, const double* x, double* y);
void col_sum(const double* a, double* out, int rows, int cols);
void softmax_rows(const double* x, double* y, int rows, int cols);

}  // namespace omp

// Dispatching entry points.
void matmul_nt(const double* a, const double* b, double* c, int m, int n, int k);
void matmul_nn(const double* a, const double* b, double* c, int m, int n, int k);
void matmul_tn(const double* a, const double* b, double* c, int m, int n, int k);
void transpose(const double* a, double* at, int rows, int cols);
void im2col(const double* x, double* cols, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow);
void col2im(const double* cols, double* dx, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow);
void axpy(int64_t n, double alpha, const double* x, double* y);
void col_sum(const double* a, double* out, int rows, int cols);
void softmax_rows(const double* x, double* y, int rows, int cols);

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace faceanim::kernels
