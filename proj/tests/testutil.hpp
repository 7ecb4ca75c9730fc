#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "faceanim/autodiff.hpp"
#include "faceanim/rng.hpp"
#include "faceanim/tensor.hpp"

// Independent oracles and check helpers shared by the test suites. Nothing
// here calls back into the kernels or the tape beyond evaluating a forward
// function under perturbation.

namespace tu {

using faceanim::Tensor;

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

// Plain triple-loop matmul, the dense-algebra oracle.
inline Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

// Literal softmax over the last axis of a [rows, cols] matrix.
inline Tensor softmax_oracle(const Tensor& x) {
    const int rows = x.shape[0], cols = x.shape[1];
    Tensor y(x.shape);
    for (int i = 0; i < rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < cols; ++j) m = std::max(m, x[i * cols + j]);
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += std::exp(x[i * cols + j] - m);
        for (int j = 0; j < cols; ++j) y[i * cols + j] = std::exp(x[i * cols + j] - m) / s;
    }
    return y;
}

// Step-by-step single-query softmax attention: out = softmax(q K^T / sqrt(dk)) V.
inline Tensor attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v) {
    const int tq = q.shape[0], dk = q.shape[1], tk = k.shape[0];
    Tensor scores({tq, tk});
    for (int i = 0; i < tq; ++i)
        for (int j = 0; j < tk; ++j) {
            double acc = 0.0;
            for (int t = 0; t < dk; ++t) acc += q[i * dk + t] * k[j * dk + t];
            scores[i * tk + j] = acc / std::sqrt(static_cast<double>(dk));
        }
    Tensor w = softmax_oracle(scores);
    const int dv = v.shape[1];
    Tensor out({tq, dv});
    for (int i = 0; i < tq; ++i)
        for (int j = 0; j < dv; ++j) {
            double acc = 0.0;
            for (int t = 0; t < tk; ++t) acc += w[i * tk + t] * v[t * dv + j];
            out[i * dv + j] = acc;
        }
    return out;
}

// Central finite differences of f against the analytic gradient of f at x.
// f must build a fresh scalar graph from the leaf each call. Checks a sample
// of coordinates (all when sample <= 0).
struct GradCheckResult {
    double max_rel = 0.0;
    int checked = 0;
};

inline GradCheckResult finite_diff_check(
    faceanim::ad::Var x, const std::function<faceanim::ad::Var(const faceanim::ad::Var&)>& f,
    double h = 1e-6, int sample = 0, unsigned seed = 1234) {
    using namespace faceanim;
    auto root = f(x);
    for (auto& g : x->grad.data) g = 0.0;
    x->zero_grad();
    ad::backward(root);
    x->ensure_grad();
    Tensor analytic = x->grad;

    std::vector<int64_t> coords;
    const int64_t n = x->numel();
    if (sample <= 0 || sample >= n) {
        for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
        Rng rng(seed);
        for (int s = 0; s < sample; ++s) coords.push_back(rng.uniform_int(n));
    }

    GradCheckResult res;
    for (int64_t i : coords) {
        const double orig = x->value[i];
        x->value[i] = orig + h;
        const double fp = f(x)->value[0];
        x->value[i] = orig - h;
        const double fm = f(x)->value[0];
        x->value[i] = orig;
        const double num = (fp - fm) / (2.0 * h);
        const double ana = analytic[i];
        const double denom = std::max({std::fabs(num), std::fabs(ana), 1e-4});
        res.max_rel = std::max(res.max_rel, std::fabs(num - ana) / denom);
        ++res.checked;
    }
    return res;
}

}  // namespace tu
