#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "faceanim/kernels.hpp"
#include "faceanim/rng.hpp"
#include "faceanim/tensor.hpp"
#include "testutil.hpp"

using namespace faceanim;
namespace k = faceanim::kernels;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    rng.fill_normal(t);
    return t;
}

}  // namespace

TEST_CASE("matmul_nt matches triple-loop oracle") {
    for (uint64_t seed : {1u, 2u, 3u}) {
        Tensor a = random_tensor({17, 9}, seed);
        Tensor bt = random_tensor({13, 9}, seed + 100);
        Tensor c({17, 13});
        k::matmul_nt(a.ptr(), bt.ptr(), c.ptr(), 17, 13, 9);

        // oracle computes a * bt^T via explicit transpose
        Tensor b({9, 13});
        for (int i = 0; i < 13; ++i)
            for (int j = 0; j < 9; ++j) b[j * 13 + i] = bt[i * 9 + j];
        Tensor ref = tu::matmul_oracle(a, b);
        CHECK(c.max_abs_diff(ref) < 1e-12);
    }
}

TEST_CASE("matmul_nn and matmul_tn match oracle") {
    Tensor a = random_tensor({8, 12}, 7);
    Tensor b = random_tensor({12, 10}, 8);
    Tensor c({8, 10});
    k::matmul_nn(a.ptr(), b.ptr(), c.ptr(), 8, 10, 12);
    CHECK(c.max_abs_diff(tu::matmul_oracle(a, b)) < 1e-12);

    // tn: c2 = a2^T b2
    Tensor a2 = random_tensor({12, 8}, 9);
    Tensor c2({8, 10});
    k::matmul_tn(a2.ptr(), b.ptr(), c2.ptr(), 8, 10, 12);
    Tensor a2t({8, 12});
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 8; ++j) a2t[j * 12 + i] = a2[i * 8 + j];
    CHECK(c2.max_abs_diff(tu::matmul_oracle(a2t, b)) < 1e-12);
}

TEST_CASE("parallel kernels are bit-identical to serial reference") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const int m = 1 + static_cast<int>(rng.uniform_int(40));
        const int n = 1 + static_cast<int>(rng.uniform_int(40));
        const int kk = 1 + static_cast<int>(rng.uniform_int(60));
        Tensor a = random_tensor({m, kk}, 1000 + trial);
        Tensor b = random_tensor({n, kk}, 2000 + trial);
        Tensor cs({m, n}), cp({m, n});
        k::serial::matmul_nt(a.ptr(), b.ptr(), cs.ptr(), m, n, kk);
        k::omp::matmul_nt(a.ptr(), b.ptr(), cp.ptr(), m, n, kk);
        CHECK(cs.bit_equal(cp));

        Tensor b2 = random_tensor({kk, n}, 3000 + trial);
        Tensor ds({m, n}), dp({m, n});
        k::serial::matmul_nn(a.ptr(), b2.ptr(), ds.ptr(), m, n, kk);
        k::omp::matmul_nn(a.ptr(), b2.ptr(), dp.ptr(), m, n, kk);
        CHECK(ds.bit_equal(dp));
    }

    // im2col / col2im
    const int C = 3, H = 11, W = 13, kh = 3, kw = 3, stride = 2, pad = 1;
    const int OH = k::conv_out_dim(H, kh, stride, pad);
    const int OW = k::conv_out_dim(W, kw, stride, pad);
    Tensor x = random_tensor({C, H, W}, 77);
    Tensor cols_s({OH * OW, C * kh * kw}), cols_p({OH * OW, C * kh * kw});
    k::serial::im2col(x.ptr(), cols_s.ptr(), C, H, W, kh, kw, stride, pad, OH, OW);
    k::omp::im2col(x.ptr(), cols_p.ptr(), C, H, W, kh, kw, stride, pad, OH, OW);
    CHECK(cols_s.bit_equal(cols_p));

    Tensor dxs({C, H, W}), dxp({C, H, W});
    k::serial::col2im(cols_s.ptr(), dxs.ptr(), C, H, W, kh, kw, stride, pad, OH, OW);
    k::omp::col2im(cols_s.ptr(), dxp.ptr(), C, H, W, kh, kw, stride, pad, OH, OW);
    CHECK(dxs.bit_equal(dxp));

    // softmax / col_sum / transpose / axpy
    Tensor sm = random_tensor({33, 21}, 88);
    Tensor ys({33, 21}), yp({33, 21});
    k::serial::softmax_rows(sm.ptr(), ys.ptr(), 33, 21);
    k::omp::softmax_rows(sm.ptr(), yp.ptr(), 33, 21);
    CHECK(ys.bit_equal(yp));

    Tensor cs0 = Tensor::zeros({21}), cp0 = Tensor::zeros({21});
    k::serial::col_sum(sm.ptr(), cs0.ptr(), 33, 21);
    k::omp::col_sum(sm.ptr(), cp0.ptr(), 33, 21);
    CHECK(cs0.bit_equal(cp0));

    Tensor ts({21, 33}), tp({21, 33});
    k::serial::transpose(sm.ptr(), ts.ptr(), 33, 21);
    k::omp::transpose(sm.ptr(), tp.ptr(), 33, 21);
    CHECK(ts.bit_equal(tp));

    Tensor as = random_tensor({693}, 99), ap = as;
    k::serial::axpy(693, 0.37, sm.ptr(), as.ptr());
    k::omp::axpy(693, 0.37, sm.ptr(), ap.ptr());
    CHECK(as.bit_equal(ap));
}

TEST_CASE("results are thread-count independent") {
    Tensor a = random_tensor({37, 29}, 5);
    Tensor b = random_tensor({23, 29}, 6);
    Tensor c1({37, 23}), c2({37, 23});
    k::set_num_threads(1);
    k::omp::matmul_nt(a.ptr(), b.ptr(), c1.ptr(), 37, 23, 29);
    k::set_num_threads(2);
    k::omp::matmul_nt(a.ptr(), b.ptr(), c2.ptr(), 37, 23, 29);
    CHECK(c1.bit_equal(c2));
}

TEST_CASE("softmax rows sum to 1") {
    Tensor x = random_tensor({50, 17}, 11);
    Tensor y({50, 17});
    k::softmax_rows(x.ptr(), y.ptr(), 50, 17);
    for (int i = 0; i < 50; ++i) {
        double s = 0.0;
        for (int j = 0; j < 17; ++j) s += y[i * 17 + j];
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("im2col reproduces direct convolution") {
    const int C = 2, H = 6, W = 5;
    Tensor x = random_tensor({C, H, W}, 21);
    Tensor w = random_tensor({4, C, 3, 3}, 22);
    const int OH = k::conv_out_dim(H, 3, 1, 1), OW = k::conv_out_dim(W, 3, 1, 1);
    Tensor cols({OH * OW, C * 9});
    k::im2col(x.ptr(), cols.ptr(), C, H, W, 3, 3, 1, 1, OH, OW);
    Tensor out({4, OH * OW});
    k::matmul_nt(w.ptr(), cols.ptr(), out.ptr(), 4, OH * OW, C * 9);

    // direct convolution oracle
    for (int co = 0; co < 4; ++co)
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                double acc = 0.0;
                for (int ci = 0; ci < C; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy - 1 + ky, ix = ox - 1 + kx;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += x[(ci * H + iy) * W + ix] * w[((co * C + ci) * 3 + ky) * 3 + kx];
                        }
                CHECK(std::fabs(out[co * OH * OW + oy * OW + ox] - acc) < 1e-12);
            }
}
