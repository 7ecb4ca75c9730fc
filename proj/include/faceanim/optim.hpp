#pragma once

#include "faceanim/container.hpp"
#include "faceanim/nn.hpp"

namespace faceanim {

// Adam with constant learning rate (the only optimizer used here).
struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::vector<Tensor> m, v;

    void init(const nn::ParamList& params);
    void zero_grad(const nn::ParamList& params);
    void step(const nn::ParamList& params);

    void save_state(const nn::ParamList& params, TensorFile& tf, const std::string& prefix) const;
    void load_state(const nn::ParamList& params, const TensorFile& tf, const std::string& prefix);
};

}  // namespace faceanim
