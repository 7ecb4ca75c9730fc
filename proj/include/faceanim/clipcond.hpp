#pragma once

#include "faceanim/nn.hpp"
#include "faceanim/rng.hpp"

namespace faceanim::clipcond {

// Per-frame conditioning latents and one-channel masks. Masks are spatially
// constant per frame: 1 on conditioned frames, 0 elsewhere, and mask-0
// frames carry all-zero latents.
struct ClipConditioning {
    Tensor cond_latents;  // [F, C_lat, h, w]
    Tensor masks;         // [F, 1, h, w]

    int frames() const { return cond_latents.shape.empty() ? 0 : cond_latents.shape[0]; }
    static ClipConditioning zeros(int F, int C, int h, int w);
};

// k ~ Uniform{0, 1, ..., floor(F/4)}; requires F >= 4.
int sample_k(int F, Rng& rng);
inline int max_k(int F) { return F / 4; }

// Training: first k frames get ground-truth latents plus N(0, sigma^2)
// noise, masks 1; the rest are zero with masks 0.
ClipConditioning build_training_condition(const Tensor& gt_latents, int k, double sigma, Rng& rng);

// Inference: first k frames copy the previous clip's last k denoised
// latents exactly; no noise is added.
ClipConditioning build_inference_condition(const Tensor& prev_clip_latents, int k);

// Single zero-initialized conv mapping (C_lat + 1) channels onto the
// denoiser's first-layer features.
struct CondModuleWeights {
    nn::Conv2d conv;  // 3x3, pad 1, zero weights and bias at construction
    CondModuleWeights() = default;
    CondModuleWeights(int c_lat, int c_feat);
    void collect(const std::string& prefix, nn::ParamList& out) const {
        conv.collect(prefix + ".conv", out);
    }
};

// features + W_cond(concat(cond_latents, masks))
ad::Var apply_condition(const ad::Var& first_layer_features, const ClipConditioning& cond,
                        const CondModuleWeights& w);

}  // namespace faceanim::clipcond
