#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "faceanim/tensor.hpp"

namespace faceanim::ad {

// Reverse-mode tape. A Var is a shared node in the DAG; ops build nodes on
// the fly. Backward walks nodes in reverse creation order, so closures run
// in a fixed, reproducible sequence.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by ensure_grad()
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;
    int64_t id = 0;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.shape.empty()) grad = Tensor::zeros(value.shape);
    }
    void zero_grad() {
        if (!grad.shape.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0);
    }
    int64_t numel() const { return value.numel(); }
    const std::vector<int>& shape() const { return value.shape; }
};

Var leaf(Tensor value, bool requires_grad = true);
Var constant(Tensor value);
Var constant_scalar(double v);

// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);

bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

// --- elementwise / arithmetic ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var silu(const Var& x);
Var gelu(const Var& x);

// --- shape ---
Var reshape(const Var& x, std::vector<int> shape);
Var permute(const Var& x, std::vector<int> axes);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(const Var& x, int axis, int start, int len);

// --- dense algebra ---
Var matmul(const Var& a, const Var& b);     // [m,k]x[k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k]x[n,k]^T -> [m,n]
Var bmm(const Var& a, const Var& b);        // [B,m,k]x[B,k,n]
Var bmm_nt(const Var& a, const Var& b);     // [B,m,k]x[B,n,k]^T -> [B,m,n]
// x: [..., din] flattened to rows; w: [din, dout]; b: [dout] (optional)
Var linear(const Var& x, const Var& w, const Var& b);
Var linear_nobias(const Var& x, const Var& w);
Var dot(const Var& a, const Var& b);  // same-shape tensors -> [1]

// --- normalization / softmax ---
Var softmax_last(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// x: [N,C,H,W], gamma/beta: [C]
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps = 1e-5);

// --- convolution / resampling ---
// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] (may be empty Var for no bias)
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);

// --- reductions / losses ---
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mse(const Var& a, const Var& b);

// --- broadcast helpers ---
Var add_bias(const Var& x, const Var& b);  // x: [..., d], b: [d]
// x: [F,C,H,W] + b: [F,C] broadcast over spatial dims
Var add_frame_channel_bias(const Var& x, const Var& b);

}  // namespace faceanim::ad
