#pragma once

#include "faceanim/image.hpp"
#include "faceanim/nn.hpp"

namespace faceanim::appearance {

struct EncoderConfig {
    int patch_size = 8;
    int d_model = 64;
    int n_layers = 3;
    int n_heads = 4;

    int patches(int resolution) const {
        return (resolution / patch_size) * (resolution / patch_size);
    }
    void validate(int resolution) const;
};

struct AppearanceTokens {
    ad::Var patch_tokens;  // [P, d_model]
    ad::Var class_token;   // [d_model]
};

// Small ViT: patchify -> linear embed -> class token -> pre-norm blocks.
struct AppearanceEncoder {
    EncoderConfig cfg;
    ad::Var patch_w, patch_b;  // [3*ps*ps, d], [d]
    ad::Var cls;               // [1, d]
    ad::Var pos;               // learned positional table, sized on first use? fixed at resolution
    int resolution = 64;
    std::vector<nn::TransformerBlock> blocks;
    nn::LayerNorm final_ln;

    AppearanceEncoder() = default;
    AppearanceEncoder(EncoderConfig cfg_, int resolution_, Rng& rng);
    nn::ParamList params() const;

    // image as [3,H,W] Var (differentiable w.r.t. the image)
    AppearanceTokens encode(const ad::Var& image) const;
    AppearanceTokens encode(const Image& image) const;
};

enum class PhotoTransform {
    kGrayscale,
    kColorJitter,
    kEdgeEnhance,
    kBlur,
    kSharpen,
    kLighting,
    kNoise,
    kVignette,
    kContrast,
};

inline constexpr int kNumPhotoTransforms = 9;

// Applies one named transform at the given magnitude in [0,1]. Only pixel
// value / small-neighborhood operations; geometry is untouched.
Image apply_photo_transform(const Image& img, PhotoTransform kind, double magnitude, Rng& rng);

// Randomly composes 1-3 transforms (no repeats) at magnitudes scaled by
// strength. strength 0 returns the input exactly.
Image photometric_augment(const Image& img, uint64_t rng_seed, double strength);

}  // namespace faceanim::appearance
