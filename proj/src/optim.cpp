#include "faceanim/optim.hpp"

#include <cmath>

namespace faceanim {

void Adam::init(const nn::ParamList& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const auto& [_, p] : params.items) {
        m.push_back(Tensor::zeros(p->value.shape));
        v.push_back(Tensor::zeros(p->value.shape));
    }
}

void Adam::zero_grad(const nn::ParamList& params) {
    for (const auto& [_, p] : params.items) p->zero_grad();
}

void Adam::step(const nn::ParamList& params) {
    require(m.size() == params.items.size(), "Adam: not initialized for this parameter list");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.items.size(); ++i) {
        auto& p = params.items[i].second;
        if (p->grad.shape.empty()) continue;  // never touched by backward
        double* w = p->value.ptr();
        const double* g = p->grad.ptr();
        double* mi = m[i].ptr();
        double* vi = v[i].ptr();
        const int64_t n = p->numel();
        for (int64_t j = 0; j < n; ++j) {
            mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
            vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
            const double mhat = mi[j] / bc1;
            const double vhat = vi[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void Adam::save_state(const nn::ParamList& params, TensorFile& tf, const std::string& prefix) const {
    tf.meta[prefix + ".t"] = std::to_string(t);
    for (size_t i = 0; i < params.items.size(); ++i) {
        tf.arrays.emplace_back(prefix + ".m." + params.items[i].first, m[i]);
        tf.arrays.emplace_back(prefix + ".v." + params.items[i].first, v[i]);
    }
}

void Adam::load_state(const nn::ParamList& params, const TensorFile& tf, const std::string& prefix) {
    init(params);
    t = std::stoll(tf.meta.at(prefix + ".t"));
    for (size_t i = 0; i < params.items.size(); ++i) {
        m[i] = tf.array(prefix + ".m." + params.items[i].first);
        v[i] = tf.array(prefix + ".v." + params.items[i].first);
    }
}

}  // namespace faceanim
