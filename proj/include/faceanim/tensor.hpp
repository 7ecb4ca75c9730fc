#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace faceanim {

// Dense row-major tensor of doubles. Everything in this project runs in
// double precision so analytic gradients can be checked against finite
// differences at tight tolerances.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != count(shape))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Row-major offset for an explicit index list.
    int64_t offset(std::initializer_list<int> idx) const {
        if (static_cast<int>(idx.size()) != rank())
            throw std::invalid_argument("Tensor: index rank mismatch");
        int64_t off = 0;
        int i = 0;
        for (int v : idx) {
            off = off * shape[static_cast<size_t>(i)] + v;
            ++i;
        }
        return off;
    }
    double& at(std::initializer_list<int> idx) { return data[static_cast<size_t>(offset(idx))]; }
    double at(std::initializer_list<int> idx) const { return data[static_cast<size_t>(offset(idx))]; }

    bool all_finite() const;
    double max_abs() const;
    double max_abs_diff(const Tensor& o) const;
    bool bit_equal(const Tensor& o) const;
};

std::string shape_str(const std::vector<int>& s);

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace faceanim
