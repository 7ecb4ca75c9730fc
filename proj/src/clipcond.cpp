#include "faceanim/clipcond.hpp"

#include <cstring>

namespace faceanim::clipcond {

ClipConditioning ClipConditioning::zeros(int F, int C, int h, int w) {
    ClipConditioning c;
    c.cond_latents = Tensor::zeros({F, C, h, w});
    c.masks = Tensor::zeros({F, 1, h, w});
    return c;
}

int sample_k(int F, Rng& rng) {
    require(F >= 4, "sample_k: clip length must be at least 4");
    return static_cast<int>(rng.uniform_int(max_k(F) + 1));
}

ClipConditioning build_training_condition(const Tensor& gt_latents, int k, double sigma, Rng& rng) {
    require(gt_latents.rank() == 4, "build_training_condition: latents must be [F,C,h,w]");
    const int F = gt_latents.shape[0];
    require(k >= 0 && k <= max_k(F),
            "build_training_condition: k out of range [0, " + std::to_string(max_k(F)) + "]");
    ClipConditioning c = ClipConditioning::zeros(F, gt_latents.shape[1], gt_latents.shape[2],
                                                 gt_latents.shape[3]);
    const int64_t frame_sz = gt_latents.numel() / F;
    const int64_t mask_sz = c.masks.numel() / F;
    for (int f = 0; f < k; ++f) {
        double* dst = c.cond_latents.ptr() + f * frame_sz;
        const double* src = gt_latents.ptr() + f * frame_sz;
        for (int64_t i = 0; i < frame_sz; ++i) dst[i] = src[i] + rng.normal(0.0, sigma);
        double* mk = c.masks.ptr() + f * mask_sz;
        for (int64_t i = 0; i < mask_sz; ++i) mk[i] = 1.0;
    }
    return c;
}

ClipConditioning build_inference_condition(const Tensor& prev_clip_latents, int k) {
    require(prev_clip_latents.rank() == 4, "build_inference_condition: latents must be [F,C,h,w]");
    const int F = prev_clip_latents.shape[0];
    require(k >= 1 && k <= max_k(F),
            "build_inference_condition: k out of range [1, " + std::to_string(max_k(F)) + "]");
    ClipConditioning c = ClipConditioning::zeros(F, prev_clip_latents.shape[1],
                                                 prev_clip_latents.shape[2], prev_clip_latents.shape[3]);
    const int64_t frame_sz = prev_clip_latents.numel() / F;
    const int64_t mask_sz = c.masks.numel() / F;
    // last k frames of the previous clip become the first k conditions, in order
    for (int f = 0; f < k; ++f) {
        std::memcpy(c.cond_latents.ptr() + f * frame_sz,
                    prev_clip_latents.ptr() + (F - k + f) * frame_sz,
                    static_cast<size_t>(frame_sz) * sizeof(double));
        double* mk = c.masks.ptr() + f * mask_sz;
        for (int64_t i = 0; i < mask_sz; ++i) mk[i] = 1.0;
    }
    return c;
}

CondModuleWeights::CondModuleWeights(int c_lat, int c_feat) {
    conv = nn::Conv2d::zeros(c_lat + 1, c_feat, 3, 1, 1);
}

ad::Var apply_condition(const ad::Var& first_layer_features, const ClipConditioning& cond,
                        const CondModuleWeights& w) {
    require(first_layer_features->value.rank() == 4, "apply_condition: features must be [F,C,h,w]");
    require(cond.cond_latents.shape[0] == first_layer_features->value.shape[0],
            "apply_condition: frame count mismatch");
    require(cond.cond_latents.shape[2] == first_layer_features->value.shape[2] &&
                cond.cond_latents.shape[3] == first_layer_features->value.shape[3],
            "apply_condition: spatial size mismatch");
    auto packed = ad::concat({ad::constant(cond.cond_latents), ad::constant(cond.masks)}, 1);
    return ad::add(first_layer_features, w.conv.forward(packed));
}

}  // namespace faceanim::clipcond
