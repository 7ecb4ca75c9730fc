#include <cmath>
#include <cstring>

#include "faceanim/autodiff.hpp"
#include "faceanim/kernels.hpp"

// Op library for the tape. Forward math goes through faceanim::kernels where
// a dense kernel exists; backward closures accumulate into parent grads in a
// fixed order.

namespace faceanim::ad {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw);

namespace {

Tensor& pgrad(Node* p) {
    p->ensure_grad();
    return p->grad;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a->value.same_shape(b->value), std::string(op) + ": shape mismatch " +
                                               shape_str(a->shape()) + " vs " + shape_str(b->shape()));
}

std::vector<int64_t> row_strides(const std::vector<int>& shape) {
    std::vector<int64_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * shape[i + 1];
    return st;
}

}  // namespace

// ---------------------------------------------------------------- arithmetic

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] += b->value[i];
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->requires_grad) kernels::axpy(self.numel(), 1.0, self.grad.ptr(), pgrad(pa).ptr());
        if (pb->requires_grad) kernels::axpy(self.numel(), 1.0, self.grad.ptr(), pgrad(pb).ptr());
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] -= b->value[i];
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->requires_grad) kernels::axpy(self.numel(), 1.0, self.grad.ptr(), pgrad(pa).ptr());
        if (pb->requires_grad) kernels::axpy(self.numel(), -1.0, self.grad.ptr(), pgrad(pb).ptr());
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] *= b->value[i];
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
        const int64_t n = self.numel();
        if (pa->requires_grad) {
            Tensor& ga = pgrad(pa);
            for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            Tensor& gb = pgrad(pb);
            for (int64_t i = 0; i < n; ++i) gb[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    Tensor out = a->value;
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] /= b->value[i];
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
        const int64_t n = self.numel();
        if (pa->requires_grad) {
            Tensor& ga = pgrad(pa);
            for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] / pb->value[i];
        }
        if (pb->requires_grad) {
            Tensor& gb = pgrad(pb);
            for (int64_t i = 0; i < n; ++i)
                gb[i] -= self.grad[i] * pa->value[i] / (pb->value[i] * pb->value[i]);
        }
    });
}

Var scale(const Var& x, double s) {
    Tensor out = x->value;
    for (double& v : out.data) v *= s;
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px, s](Node& self) {
        kernels::axpy(self.numel(), s, self.grad.ptr(), pgrad(px).ptr());
    });
}

Var add_scalar(const Var& x, double s) {
    Tensor out = x->value;
    for (double& v : out.data) v += s;
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px](Node& self) {
        kernels::axpy(self.numel(), 1.0, self.grad.ptr(), pgrad(px).ptr());
    });
}

Var exp(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = std::exp(v);
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px](Node& self) {
        Tensor& g = pgrad(px);
        const int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * self.value[i];
    });
}

Var log(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = std::log(v);
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px](Node& self) {
        Tensor& g = pgrad(px);
        const int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] / px->value[i];
    });
}

Var sqrt(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = std::sqrt(v);
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px](Node& self) {
        Tensor& g = pgrad(px);
        const int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * 0.5 / self.value[i];
    });
}

Var silu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = v / (1.0 + std::exp(-v));
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px](Node& self) {
        Tensor& g = pgrad(px);
        const int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double v = px->value[i];
            const double s = 1.0 / (1.0 + std::exp(-v));
            g[i] += self.grad[i] * s * (1.0 + v * (1.0 - s));
        }
    });
}

Var gelu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244));
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px](Node& self) {
        Tensor& g = pgrad(px);
        const int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double v = px->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
            const double pdf = std::exp(-0.5 * v * v) * 0.3989422804014326779;
            g[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

// --------------------------------------------------------------------- shape

Var reshape(const Var& x, std::vector<int> shape) {
    require(Tensor::count(shape) == x->numel(),
            "reshape: element count mismatch " + shape_str(x->shape()) + " -> " + shape_str(shape));
    Tensor out(std::move(shape), x->value.data);
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px](Node& self) {
        kernels::axpy(self.numel(), 1.0, self.grad.ptr(), pgrad(px).ptr());
    });
}

namespace {

// Maps flat input index i to the flat output index under `axes`
// (out dim d comes from input dim axes[d]).
inline int64_t permuted_offset(int64_t i, int r, const std::vector<int64_t>& ist,
                               const std::vector<int64_t>& ost, const std::vector<int>& axes) {
    int idx[8];
    int64_t rem = i;
    for (int d = 0; d < r; ++d) {
        idx[d] = static_cast<int>(rem / ist[d]);
        rem %= ist[d];
    }
    int64_t o = 0;
    for (int d = 0; d < r; ++d) o += static_cast<int64_t>(idx[axes[d]]) * ost[d];
    return o;
}

}  // namespace

Var permute(const Var& x, std::vector<int> axes) {
    const int r = x->value.rank();
    require(static_cast<int>(axes.size()) == r && r <= 8, "permute: axes rank mismatch");
    std::vector<int> newshape(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) newshape[d] = x->value.shape[axes[d]];
    Tensor out(newshape);
    const auto ist = row_strides(x->value.shape);
    const auto ost = row_strides(newshape);
    const int64_t n = x->numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i)
        out.data[static_cast<size_t>(permuted_offset(i, r, ist, ost, axes))] =
            x->value.data[static_cast<size_t>(i)];
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px, axes, ist, ost, r, n](Node& self) {
        Tensor& g = pgrad(px);
        for (int64_t i = 0; i < n; ++i)
            g.data[static_cast<size_t>(i)] +=
                self.grad.data[static_cast<size_t>(permuted_offset(i, r, ist, ost, axes))];
    });
}

Var concat(const std::vector<Var>& xs, int axis) {
    require(!xs.empty(), "concat: empty input list");
    const int r = xs[0]->value.rank();
    require(axis >= 0 && axis < r, "concat: bad axis");
    std::vector<int> shape = xs[0]->value.shape;
    int total = 0;
    for (const auto& x : xs) {
        require(x->value.rank() == r, "concat: rank mismatch");
        for (int d = 0; d < r; ++d)
            if (d != axis)
                require(x->value.shape[d] == shape[d], "concat: shape mismatch off-axis");
        total += x->value.shape[axis];
    }
    shape[axis] = total;
    Tensor out(shape);

    // outer = product of dims before axis, inner = product after
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= shape[d];
    for (int d = axis + 1; d < r; ++d) inner *= shape[d];

    std::vector<int64_t> offsets;  // start (in elements of axis) per input
    {
        int64_t off = 0;
        for (const auto& x : xs) {
            offsets.push_back(off);
            off += x->value.shape[axis];
        }
    }
    for (size_t xi = 0; xi < xs.size(); ++xi) {
        const Tensor& v = xs[xi]->value;
        const int64_t ax = v.shape[axis];
        for (int64_t ou = 0; ou < outer; ++ou) {
            const double* src = v.ptr() + ou * ax * inner;
            double* dst = out.ptr() + (ou * total + offsets[xi]) * inner;
            std::memcpy(dst, src, static_cast<size_t>(ax * inner) * sizeof(double));
        }
    }
    std::vector<Var> parents = xs;
    return make_node(std::move(out), parents, [xs, offsets, outer, inner, total, axis](Node& self) {
        for (size_t xi = 0; xi < xs.size(); ++xi) {
            Node* p = xs[xi].get();
            if (!p->requires_grad) continue;
            Tensor& g = pgrad(p);
            const int64_t ax = p->value.shape[axis];
            for (int64_t ou = 0; ou < outer; ++ou) {
                const double* src = self.grad.ptr() + (ou * total + offsets[xi]) * inner;
                double* dst = g.ptr() + ou * ax * inner;
                for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Var slice(const Var& x, int axis, int start, int len) {
    const int r = x->value.rank();
    require(axis >= 0 && axis < r, "slice: bad axis");
    require(start >= 0 && len >= 0 && start + len <= x->value.shape[axis], "slice: out of range");
    std::vector<int> shape = x->value.shape;
    shape[axis] = len;
    Tensor out(shape);
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= shape[d];
    for (int d = axis + 1; d < r; ++d) inner *= shape[d];
    const int64_t ax_in = x->value.shape[axis];
    for (int64_t ou = 0; ou < outer; ++ou) {
        const double* src = x->value.ptr() + (ou * ax_in + start) * inner;
        double* dst = out.ptr() + ou * len * inner;
        std::memcpy(dst, src, static_cast<size_t>(len * inner) * sizeof(double));
    }
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px, axis, start, len, outer, inner, ax_in](Node& self) {
        Tensor& g = pgrad(px);
        for (int64_t ou = 0; ou < outer; ++ou) {
            const double* src = self.grad.ptr() + ou * len * inner;
            double* dst = g.ptr() + (ou * ax_in + start) * inner;
            for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; ++i) dst[i] += src[i];
        }
    });
}

// ------------------------------------------------------------- dense algebra

Var matmul(const Var& a, const Var& b) {
    require(a->value.rank() == 2 && b->value.rank() == 2, "matmul: rank-2 operands required");
    const int m = a->value.shape[0], k = a->value.shape[1];
    require(b->value.shape[0] == k, "matmul: inner dim mismatch");
    const int n = b->value.shape[1];
    Tensor out({m, n});
    kernels::matmul_nn(a->value.ptr(), b->value.ptr(), out.ptr(), m, n, k);
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb, m, n, k](Node& self) {
        if (pa->requires_grad) {
            Tensor da({m, k});
            kernels::matmul_nt(self.grad.ptr(), pb->value.ptr(), da.ptr(), m, k, n);
            kernels::axpy(da.numel(), 1.0, da.ptr(), pgrad(pa).ptr());
        }
        if (pb->requires_grad) {
            Tensor db({k, n});
            kernels::matmul_tn(pa->value.ptr(), self.grad.ptr(), db.ptr(), k, n, m);
            kernels::axpy(db.numel(), 1.0, db.ptr(), pgrad(pb).ptr());
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    require(a->value.rank() == 2 && b->value.rank() == 2, "matmul_nt: rank-2 operands required");
    const int m = a->value.shape[0], k = a->value.shape[1];
    require(b->value.shape[1] == k, "matmul_nt: inner dim mismatch");
    const int n = b->value.shape[0];
    Tensor out({m, n});
    kernels::matmul_nt(a->value.ptr(), b->value.ptr(), out.ptr(), m, n, k);
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb, m, n, k](Node& self) {
        if (pa->requires_grad) {
            // da[m,k] = g[m,n] * b[n,k]
            Tensor da({m, k});
            kernels::matmul_nn(self.grad.ptr(), pb->value.ptr(), da.ptr(), m, k, n);
            kernels::axpy(da.numel(), 1.0, da.ptr(), pgrad(pa).ptr());
        }
        if (pb->requires_grad) {
            // db[n,k] = g^T[n,m] * a[m,k]
            Tensor db({n, k});
            kernels::matmul_tn(self.grad.ptr(), pa->value.ptr(), db.ptr(), n, k, m);
            kernels::axpy(db.numel(), 1.0, db.ptr(), pgrad(pb).ptr());
        }
    });
}

Var bmm(const Var& a, const Var& b) {
    require(a->value.rank() == 3 && b->value.rank() == 3, "bmm: rank-3 operands required");
    const int B = a->value.shape[0], m = a->value.shape[1], k = a->value.shape[2];
    require(b->value.shape[0] == B && b->value.shape[1] == k, "bmm: shape mismatch");
    const int n = b->value.shape[2];
    Tensor out({B, m, n});
    for (int bi = 0; bi < B; ++bi)
        kernels::matmul_nn(a->value.ptr() + static_cast<int64_t>(bi) * m * k,
                           b->value.ptr() + static_cast<int64_t>(bi) * k * n,
                           out.ptr() + static_cast<int64_t>(bi) * m * n, m, n, k);
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb, B, m, n, k](Node& self) {
        for (int bi = 0; bi < B; ++bi) {
            const double* g = self.grad.ptr() + static_cast<int64_t>(bi) * m * n;
            if (pa->requires_grad) {
                Tensor da({m, k});
                kernels::matmul_nt(g, pb->value.ptr() + static_cast<int64_t>(bi) * k * n, da.ptr(), m, k, n);
                kernels::axpy(da.numel(), 1.0, da.ptr(), pgrad(pa).ptr() + static_cast<int64_t>(bi) * m * k);
            }
            if (pb->requires_grad) {
                Tensor db({k, n});
                kernels::matmul_tn(pa->value.ptr() + static_cast<int64_t>(bi) * m * k, g, db.ptr(), k, n, m);
                kernels::axpy(db.numel(), 1.0, db.ptr(), pgrad(pb).ptr() + static_cast<int64_t>(bi) * k * n);
            }
        }
    });
}

Var bmm_nt(const Var& a, const Var& b) {
    require(a->value.rank() == 3 && b->value.rank() == 3, "bmm_nt: rank-3 operands required");
    const int B = a->value.shape[0], m = a->value.shape[1], k = a->value.shape[2];
    require(b->value.shape[0] == B && b->value.shape[2] == k, "bmm_nt: shape mismatch");
    const int n = b->value.shape[1];
    Tensor out({B, m, n});
    for (int bi = 0; bi < B; ++bi)
        kernels::matmul_nt(a->value.ptr() + static_cast<int64_t>(bi) * m * k,
                           b->value.ptr() + static_cast<int64_t>(bi) * n * k,
                           out.ptr() + static_cast<int64_t>(bi) * m * n, m, n, k);
    Node *pa = a.get(), *pb = b.get();
    return make_node(std::move(out), {a, b}, [pa, pb, B, m, n, k](Node& self) {
        for (int bi = 0; bi < B; ++bi) {
            const double* g = self.grad.ptr() + static_cast<int64_t>(bi) * m * n;
            if (pa->requires_grad) {
                Tensor da({m, k});
                kernels::matmul_nn(g, pb->value.ptr() + static_cast<int64_t>(bi) * n * k, da.ptr(), m, k, n);
                kernels::axpy(da.numel(), 1.0, da.ptr(), pgrad(pa).ptr() + static_cast<int64_t>(bi) * m * k);
            }
            if (pb->requires_grad) {
                Tensor db({n, k});
                kernels::matmul_tn(g, pa->value.ptr() + static_cast<int64_t>(bi) * m * k, db.ptr(), n, k, m);
                kernels::axpy(db.numel(), 1.0, db.ptr(), pgrad(pb).ptr() + static_cast<int64_t>(bi) * n * k);
            }
        }
    });
}

namespace {

int64_t flat_rows(const std::vector<int>& shape) {
    int64_t rows = 1;
    for (size_t d = 0; d + 1 < shape.size(); ++d) rows *= shape[d];
    return rows;
}

}  // namespace

Var linear(const Var& x, const Var& w, const Var& b) {
    require(x->value.rank() >= 2, "linear: input rank must be >= 2");
    require(w->value.rank() == 2, "linear: weight must be rank 2");
    const int din = x->value.shape.back();
    require(w->value.shape[0] == din, "linear: weight rows must match input features");
    const int dout = w->value.shape[1];
    require(b->value.rank() == 1 && b->value.shape[0] == dout, "linear: bias shape mismatch");
    const int64_t rows = flat_rows(x->value.shape);

    std::vector<int> oshape = x->value.shape;
    oshape.back() = dout;
    Tensor out(oshape);
    kernels::matmul_nn(x->value.ptr(), w->value.ptr(), out.ptr(), static_cast<int>(rows), dout, din);
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < dout; ++j) out[r * dout + j] += b->value[j];

    Node *px = x.get(), *pw = w.get(), *pb = b.get();
    return make_node(std::move(out), {x, w, b}, [px, pw, pb, rows, din, dout](Node& self) {
        const int m = static_cast<int>(rows);
        if (px->requires_grad) {
            Tensor dx({m, din});
            kernels::matmul_nt(self.grad.ptr(), pw->value.ptr(), dx.ptr(), m, din, dout);
            kernels::axpy(dx.numel(), 1.0, dx.ptr(), pgrad(px).ptr());
        }
        if (pw->requires_grad) {
            Tensor dw({din, dout});
            kernels::matmul_tn(px->value.ptr(), self.grad.ptr(), dw.ptr(), din, dout, m);
            kernels::axpy(dw.numel(), 1.0, dw.ptr(), pgrad(pw).ptr());
        }
        if (pb->requires_grad) kernels::col_sum(self.grad.ptr(), pgrad(pb).ptr(), m, dout);
    });
}

Var linear_nobias(const Var& x, const Var& w) {
    require(x->value.rank() >= 2, "linear: input rank must be >= 2");
    require(w->value.rank() == 2, "linear: weight must be rank 2");
    const int din = x->value.shape.back();
    require(w->value.shape[0] == din, "linear: weight rows must match input features");
    const int dout = w->value.shape[1];
    const int64_t rows = flat_rows(x->value.shape);
    std::vector<int> oshape = x->value.shape;
    oshape.back() = dout;
    Tensor out(oshape);
    kernels::matmul_nn(x->value.ptr(), w->value.ptr(), out.ptr(), static_cast<int>(rows), dout, din);
    Node *px = x.get(), *pw = w.get();
    return make_node(std::move(out), {x, w}, [px, pw, rows, din, dout](Node& self) {
        const int m = static_cast<int>(rows);
        if (px->requires_grad) {
            Tensor dx({m, din});
            kernels::matmul_nt(self.grad.ptr(), pw->value.ptr(), dx.ptr(), m, din, dout);
            kernels::axpy(dx.numel(), 1.0, dx.ptr(), pgrad(px).ptr());
        }
        if (pw->requires_grad) {
            Tensor dw({din, dout});
            kernels::matmul_tn(px->value.ptr(), self.grad.ptr(), dw.ptr(), din, dout, m);
            kernels::axpy(dw.numel(), 1.0, dw.ptr(), pgrad(pw).ptr());
        }
    });
}

Var dot(const Var& a, const Var& b) {
    check_same_shape(a, b, "dot");
    double acc = 0.0;
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; ++i) acc += a->value[i] * b->value[i];
    Node *pa = a.get(), *pb = b.get();
    return make_node(Tensor::scalar(acc), {a, b}, [pa, pb](Node& self) {
        const double g = self.grad[0];
        const int64_t n = pa->value.numel();
        if (pa->requires_grad) {
            Tensor& ga = pgrad(pa);
            for (int64_t i = 0; i < n; ++i) ga[i] += g * pb->value[i];
        }
        if (pb->requires_grad) {
            Tensor& gb = pgrad(pb);
            for (int64_t i = 0; i < n; ++i) gb[i] += g * pa->value[i];
        }
    });
}

// ----------------------------------------------------- softmax / normalization

Var softmax_last(const Var& x) {
    const int cols = x->value.shape.back();
    const int64_t rows = flat_rows(x->value.shape);
    Tensor out(x->value.shape);
    kernels::softmax_rows(x->value.ptr(), out.ptr(), static_cast<int>(rows), cols);
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px, rows, cols](Node& self) {
        Tensor& g = pgrad(px);
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = self.value.ptr() + r * cols;
            const double* gy = self.grad.ptr() + r * cols;
            double s = 0.0;
            for (int j = 0; j < cols; ++j) s += gy[j] * y[j];
            double* gx = g.ptr() + r * cols;
            for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - s);
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const int d = x->value.shape.back();
    require(gamma->value.rank() == 1 && gamma->value.shape[0] == d, "layer_norm: gamma shape");
    require(beta->value.rank() == 1 && beta->value.shape[0] == d, "layer_norm: beta shape");
    const int64_t rows = flat_rows(x->value.shape);
    Tensor out(x->value.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x->value.ptr() + r * d;
        double* yr = out.ptr() + r * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) yr[j] = gamma->value[j] * ((xr[j] - mu) * inv) + beta->value[j];
    }
    Node *px = x.get(), *pg = gamma.get(), *pbt = beta.get();
    return make_node(std::move(out), {x, gamma, beta}, [px, pg, pbt, rows, d, eps](Node& self) {
        for (int64_t r = 0; r < rows; ++r) {
            const double* xr = px->value.ptr() + r * d;
            const double* gy = self.grad.ptr() + r * d;
            double mu = 0.0;
            for (int j = 0; j < d; ++j) mu += xr[j];
            mu /= d;
            double var = 0.0;
            for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
            var /= d;
            const double inv = 1.0 / std::sqrt(var + eps);
            if (pg->requires_grad) {
                Tensor& gg = pgrad(pg);
                for (int j = 0; j < d; ++j) gg[j] += gy[j] * ((xr[j] - mu) * inv);
            }
            if (pbt->requires_grad) {
                Tensor& gb = pgrad(pbt);
                for (int j = 0; j < d; ++j) gb[j] += gy[j];
            }
            if (px->requires_grad) {
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double xh = (xr[j] - mu) * inv;
                    const double dxh = gy[j] * pg->value[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xh;
                }
                mean_dxh /= d;
                mean_dxh_xh /= d;
                Tensor& gx = pgrad(px);
                double* gxr = gx.ptr() + r * d;
                for (int j = 0; j < d; ++j) {
                    const double xh = (xr[j] - mu) * inv;
                    const double dxh = gy[j] * pg->value[j];
                    gxr[j] += inv * (dxh - mean_dxh - xh * mean_dxh_xh);
                }
            }
        }
    });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
    require(x->value.rank() == 4, "group_norm: input must be [N,C,H,W]");
    const int N = x->value.shape[0], C = x->value.shape[1], H = x->value.shape[2], W = x->value.shape[3];
    require(C % groups == 0, "group_norm: channels not divisible by groups");
    require(gamma->value.shape == std::vector<int>{C}, "group_norm: gamma shape");
    require(beta->value.shape == std::vector<int>{C}, "group_norm: beta shape");
    const int cs = C / groups;
    const int64_t gsz = static_cast<int64_t>(cs) * H * W;
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor out(x->value.shape);
#pragma omp parallel for schedule(static) collapse(2)
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const double* xg = x->value.ptr() + (static_cast<int64_t>(n) * C + g * cs) * hw;
            double* yg = out.ptr() + (static_cast<int64_t>(n) * C + g * cs) * hw;
            double mu = 0.0;
            for (int64_t i = 0; i < gsz; ++i) mu += xg[i];
            mu /= static_cast<double>(gsz);
            double var = 0.0;
            for (int64_t i = 0; i < gsz; ++i) var += (xg[i] - mu) * (xg[i] - mu);
            var /= static_cast<double>(gsz);
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int c = 0; c < cs; ++c) {
                const double gam = gamma->value[g * cs + c];
                const double bet = beta->value[g * cs + c];
                for (int64_t i = 0; i < hw; ++i)
                    yg[c * hw + i] = gam * ((xg[c * hw + i] - mu) * inv) + bet;
            }
        }
    }
    Node *px = x.get(), *pg = gamma.get(), *pbt = beta.get();
    return make_node(std::move(out), {x, gamma, beta},
                     [px, pg, pbt, N, C, H, W, groups, cs, gsz, hw, eps](Node& self) {
                         for (int n = 0; n < N; ++n) {
                             for (int g = 0; g < groups; ++g) {
                                 const double* xg =
                                     px->value.ptr() + (static_cast<int64_t>(n) * C + g * cs) * hw;
                                 const double* gy =
                                     self.grad.ptr() + (static_cast<int64_t>(n) * C + g * cs) * hw;
                                 double mu = 0.0;
                                 for (int64_t i = 0; i < gsz; ++i) mu += xg[i];
                                 mu /= static_cast<double>(gsz);
                                 double var = 0.0;
                                 for (int64_t i = 0; i < gsz; ++i) var += (xg[i] - mu) * (xg[i] - mu);
                                 var /= static_cast<double>(gsz);
                                 const double inv = 1.0 / std::sqrt(var + eps);
                                 if (pg->requires_grad || pbt->requires_grad) {
                                     for (int c = 0; c < cs; ++c) {
                                         double sg = 0.0, sb = 0.0;
                                         for (int64_t i = 0; i < hw; ++i) {
                                             const double xh = (xg[c * hw + i] - mu) * inv;
                                             sg += gy[c * hw + i] * xh;
                                             sb += gy[c * hw + i];
                                         }
                                         if (pg->requires_grad) pgrad(pg)[g * cs + c] += sg;
                                         if (pbt->requires_grad) pgrad(pbt)[g * cs + c] += sb;
                                     }
                                 }
                                 if (px->requires_grad) {
                                     double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                                     for (int c = 0; c < cs; ++c) {
                                         const double gam = pg->value[g * cs + c];
                                         for (int64_t i = 0; i < hw; ++i) {
                                             const double xh = (xg[c * hw + i] - mu) * inv;
                                             const double dxh = gy[c * hw + i] * gam;
                                             mean_dxh += dxh;
                                             mean_dxh_xh += dxh * xh;
                                         }
                                     }
                                     mean_dxh /= static_cast<double>(gsz);
                                     mean_dxh_xh /= static_cast<double>(gsz);
                                     Tensor& gx = pgrad(px);
                                     double* gxg = gx.ptr() + (static_cast<int64_t>(n) * C + g * cs) * hw;
                                     for (int c = 0; c < cs; ++c) {
                                         const double gam = pg->value[g * cs + c];
                                         for (int64_t i = 0; i < hw; ++i) {
                                             const double xh = (xg[c * hw + i] - mu) * inv;
                                             const double dxh = gy[c * hw + i] * gam;
                                             gxg[c * hw + i] += inv * (dxh - mean_dxh - xh * mean_dxh_xh);
                                         }
                                     }
                                 }
                             }
                         }
                     });
}

// --------------------------------------------------------------- convolution

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require(x->value.rank() == 4, "conv2d: input must be [N,Cin,H,W]");
    require(w->value.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
    const int N = x->value.shape[0], Cin = x->value.shape[1], H = x->value.shape[2], W = x->value.shape[3];
    const int Cout = w->value.shape[0], kh = w->value.shape[2], kw = w->value.shape[3];
    require(w->value.shape[1] == Cin, "conv2d: channel mismatch");
    const bool has_bias = !b->value.shape.empty();
    if (has_bias) require(b->value.shape == std::vector<int>{Cout}, "conv2d: bias shape");
    const int OH = kernels::conv_out_dim(H, kh, stride, pad);
    const int OW = kernels::conv_out_dim(W, kw, stride, pad);
    require(OH > 0 && OW > 0, "conv2d: output would be empty");
    const int P = OH * OW;
    const int ckk = Cin * kh * kw;

    Tensor out({N, Cout, OH, OW});
    {
        Tensor cols({P, ckk});
        for (int n = 0; n < N; ++n) {
            kernels::im2col(x->value.ptr() + static_cast<int64_t>(n) * Cin * H * W, cols.ptr(), Cin, H,
                            W, kh, kw, stride, pad, OH, OW);
            double* on = out.ptr() + static_cast<int64_t>(n) * Cout * P;
            kernels::matmul_nt(w->value.ptr(), cols.ptr(), on, Cout, P, ckk);
            if (has_bias)
                for (int c = 0; c < Cout; ++c)
                    for (int p = 0; p < P; ++p) on[static_cast<int64_t>(c) * P + p] += b->value[c];
        }
    }
    Node *px = x.get(), *pw = w.get(), *pb = b.get();
    std::vector<Var> parents = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), parents,
                     [px, pw, pb, has_bias, N, Cin, H, W, Cout, kh, kw, stride, pad, OH, OW, P,
                      ckk](Node& self) {
                         Tensor cols({P, ckk});
                         for (int n = 0; n < N; ++n) {
                             const double* gn = self.grad.ptr() + static_cast<int64_t>(n) * Cout * P;
                             // im2col is recomputed instead of cached: trades a little
                             // compute for a large activation-memory saving.
                             if (pw->requires_grad || px->requires_grad)
                                 kernels::im2col(px->value.ptr() + static_cast<int64_t>(n) * Cin * H * W,
                                                 cols.ptr(), Cin, H, W, kh, kw, stride, pad, OH, OW);
                             if (pw->requires_grad) {
                                 Tensor dw({Cout, ckk});
                                 kernels::matmul_nn(gn, cols.ptr(), dw.ptr(), Cout, ckk, P);
                                 kernels::axpy(dw.numel(), 1.0, dw.ptr(), pgrad(pw).ptr());
                             }
                             if (has_bias && pb->requires_grad) {
                                 Tensor& gb = pgrad(pb);
                                 for (int c = 0; c < Cout; ++c) {
                                     double acc = 0.0;
                                     for (int p = 0; p < P; ++p) acc += gn[static_cast<int64_t>(c) * P + p];
                                     gb[c] += acc;
                                 }
                             }
                             if (px->requires_grad) {
                                 Tensor dcols({P, ckk});
                                 kernels::matmul_tn(gn, pw->value.ptr(), dcols.ptr(), P, ckk, Cout);
                                 kernels::col2im(dcols.ptr(),
                                                 pgrad(px).ptr() + static_cast<int64_t>(n) * Cin * H * W,
                                                 Cin, H, W, kh, kw, stride, pad, OH, OW);
                             }
                         }
                     });
}

Var upsample_nearest2x(const Var& x) {
    require(x->value.rank() == 4, "upsample_nearest2x: input must be [N,C,H,W]");
    const int N = x->value.shape[0], C = x->value.shape[1], H = x->value.shape[2], W = x->value.shape[3];
    Tensor out({N, C, H * 2, W * 2});
    const int64_t planes = static_cast<int64_t>(N) * C;
#pragma omp parallel for schedule(static)
    for (int64_t pl = 0; pl < planes; ++pl) {
        const double* xi = x->value.ptr() + pl * H * W;
        double* yo = out.ptr() + pl * H * W * 4;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const double v = xi[i * W + j];
                yo[(2 * i) * (2 * W) + 2 * j] = v;
                yo[(2 * i) * (2 * W) + 2 * j + 1] = v;
                yo[(2 * i + 1) * (2 * W) + 2 * j] = v;
                yo[(2 * i + 1) * (2 * W) + 2 * j + 1] = v;
            }
    }
    Node* px = x.get();
    return make_node(std::move(out), {x}, [px, planes, H, W](Node& self) {
        Tensor& g = pgrad(px);
        for (int64_t pl = 0; pl < planes; ++pl) {
            const double* gy = self.grad.ptr() + pl * H * W * 4;
            double* gx = g.ptr() + pl * H * W;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    gx[i * W + j] += gy[(2 * i) * (2 * W) + 2 * j] + gy[(2 * i) * (2 * W) + 2 * j + 1] +
                                     gy[(2 * i + 1) * (2 * W) + 2 * j] +
                                     gy[(2 * i + 1) * (2 * W) + 2 * j + 1];
        }
    });
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& x) {
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    Node* px = x.get();
    return make_node(Tensor::scalar(acc), {x}, [px](Node& self) {
        Tensor& g = pgrad(px);
        const double gv = self.grad[0];
        for (double& v : g.data) v += gv;
    });
}

Var mean_all(const Var& x) {
    const double inv = 1.0 / static_cast<double>(x->numel());
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    Node* px = x.get();
    return make_node(Tensor::scalar(acc * inv), {x}, [px, inv](Node& self) {
        Tensor& g = pgrad(px);
        const double gv = self.grad[0] * inv;
        for (double& v : g.data) v += gv;
    });
}

Var mse(const Var& a, const Var& b) {
    check_same_shape(a, b, "mse");
    const int64_t n = a->numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = a->value[i] - b->value[i];
        acc += d * d;
    }
    Node *pa = a.get(), *pb = b.get();
    const double inv = 1.0 / static_cast<double>(n);
    return make_node(Tensor::scalar(acc * inv), {a, b}, [pa, pb, inv, n](Node& self) {
        const double g2 = 2.0 * inv * self.grad[0];
        if (pa->requires_grad) {
            Tensor& ga = pgrad(pa);
            for (int64_t i = 0; i < n; ++i) ga[i] += g2 * (pa->value[i] - pb->value[i]);
        }
        if (pb->requires_grad) {
            Tensor& gb = pgrad(pb);
            for (int64_t i = 0; i < n; ++i) gb[i] -= g2 * (pa->value[i] - pb->value[i]);
        }
    });
}

// ----------------------------------------------------------------- broadcast

Var add_bias(const Var& x, const Var& b) {
    const int d = x->value.shape.back();
    require(b->value.rank() == 1 && b->value.shape[0] == d, "add_bias: bias shape mismatch");
    const int64_t rows = flat_rows(x->value.shape);
    Tensor out = x->value;
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) out[r * d + j] += b->value[j];
    Node *px = x.get(), *pb = b.get();
    return make_node(std::move(out), {x, b}, [px, pb, rows, d](Node& self) {
        if (px->requires_grad) kernels::axpy(self.numel(), 1.0, self.grad.ptr(), pgrad(px).ptr());
        if (pb->requires_grad)
            kernels::col_sum(self.grad.ptr(), pgrad(pb).ptr(), static_cast<int>(rows), d);
    });
}

Var add_frame_channel_bias(const Var& x, const Var& b) {
    require(x->value.rank() == 4, "add_frame_channel_bias: input must be [F,C,H,W]");
    const int F = x->value.shape[0], C = x->value.shape[1];
    const int64_t hw = static_cast<int64_t>(x->value.shape[2]) * x->value.shape[3];
    require(b->value.shape == std::vector<int>{F, C}, "add_frame_channel_bias: bias must be [F,C]");
    Tensor out = x->value;
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < C; ++c) {
            const double bv = b->value[static_cast<int64_t>(f) * C + c];
            double* o = out.ptr() + (static_cast<int64_t>(f) * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) o[i] += bv;
        }
    Node *px = x.get(), *pb = b.get();
    return make_node(std::move(out), {x, b}, [px, pb, F, C, hw](Node& self) {
        if (px->requires_grad) kernels::axpy(self.numel(), 1.0, self.grad.ptr(), pgrad(px).ptr());
        if (pb->requires_grad) {
            Tensor& gb = pgrad(pb);
            for (int f = 0; f < F; ++f)
                for (int c = 0; c < C; ++c) {
                    const double* g = self.grad.ptr() + (static_cast<int64_t>(f) * C + c) * hw;
                    double acc = 0.0;
                    for (int64_t i = 0; i < hw; ++i) acc += g[i];
                    gb[static_cast<int64_t>(f) * C + c] += acc;
                }
        }
    });
}

}  // namespace faceanim::ad
