#pragma once

#include <cmath>

// Per-output-element arithmetic shared by the serial and OpenMP kernels.
// Keeping one definition guarantees bit-identical results between the two.

namespace faceanim::kernels::detail {

inline double dot(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

inline void softmax_row(const double* x, double* y, int cols) {
    double m = x[0];
    for (int j = 1; j < cols; ++j)
        if (x[j] > m) m = x[j];
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - m);
        s += y[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
}

// One output row of im2col: output pixel p = (oy, ox).
inline void im2col_row(const double* x, double* row, int c, int h, int w, int kh, int kw,
                       int stride, int pad, int ow, int p) {
    const int oy = p / ow;
    const int ox = p % ow;
    int idx = 0;
    for (int ch = 0; ch < c; ++ch) {
        const double* xc = x + static_cast<long>(ch) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - pad + ky;
            for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - pad + kx;
                row[idx++] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? xc[iy * w + ix] : 0.0;
            }
        }
    }
}

}  // namespace faceanim::kernels::detail
