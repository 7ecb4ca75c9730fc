#pragma once

#include <optional>

#include "faceanim/clipcond.hpp"
#include "faceanim/nn.hpp"

namespace faceanim::diffusion {

struct NoiseSchedule {
    std::vector<double> betas, alphas, alpha_bars;
    static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);
    int T() const { return static_cast<int>(betas.size()); }
    void validate() const;
};

// Lossless space-to-depth latent transform; C_lat = 3 r^2.
inline constexpr int kSpaceToDepth = 4;
inline int latent_channels(int r = kSpaceToDepth) { return 3 * r * r; }
Tensor latent_encode(const Tensor& image_chw, int r = kSpaceToDepth);
Tensor latent_decode(const Tensor& latent, int r = kSpaceToDepth);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, elementwise over any shape.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& ns);

struct UNetConfig {
    int latent_channels = 48;   // per stream; input is [z ; render] = 2x
    int width0 = 32;
    int width1 = 64;
    int d_cond = 64;            // adapter token dimension
    int t_dim = 64;             // sinusoidal timestep embedding size
    int temb_hidden = 128;
    int gn_groups = 8;
    int cond_tokens = 65;       // P+1, informational only
};

struct ResBlock {
    nn::GroupNorm n1, n2;
    nn::Conv2d conv1, conv2;
    nn::Linear temb;  // temb_hidden -> cout
    nn::Conv2d skip;  // 1x1 when cin != cout
    bool has_skip = false;
    ResBlock() = default;
    ResBlock(int cin, int cout, int temb_hidden, int gn_groups, Rng& rng);
    ad::Var forward(const ad::Var& x, const ad::Var& temb_h) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Attention over frames at each spatial location; output projection is
// zero-initialized so the block is the identity until stage 2 trains it.
struct TemporalBlock {
    int heads = 1;
    nn::LayerNorm ln;
    nn::Linear qkv;
    nn::Linear proj;  // zero-init
    TemporalBlock() = default;
    TemporalBlock(int channels, int heads_, Rng& rng);
    ad::Var forward(const ad::Var& x) const;  // x: [F,C,H,W]
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Spatial self-attention + cross-attention to the appearance condition +
// temporal attention, each with a residual.
struct AttnPack {
    nn::GroupNorm norm_self, norm_cross;
    nn::SelfAttention self_attn;
    nn::CrossAttention cross_attn;
    TemporalBlock temporal;
    AttnPack() = default;
    AttnPack(int channels, int d_cond, int gn_groups, Rng& rng);
    // x: [F,C,H,W]; cond: [F,Tc,d_cond]
    ad::Var forward(const ad::Var& x, const ad::Var& cond, bool use_temporal) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
    void collect_temporal(const std::string& prefix, nn::ParamList& out) const;
};

struct DenoiserWeights {
    UNetConfig cfg;
    nn::Conv2d conv_in;
    nn::Linear temb1, temb2;
    ResBlock down_res0;
    AttnPack down_attn0;
    nn::Conv2d down_conv;  // stride 2
    ResBlock down_res1;
    AttnPack down_attn1;
    ResBlock mid_res1;
    AttnPack mid_attn;
    ResBlock mid_res2;
    ResBlock up_res1;
    AttnPack up_attn1;
    nn::Conv2d up_conv;  // after 2x upsample
    ResBlock up_res0;
    AttnPack up_attn0;
    nn::GroupNorm out_norm;
    nn::Conv2d conv_out;

    DenoiserWeights() = default;
    DenoiserWeights(UNetConfig cfg_, Rng& rng);
    nn::ParamList params() const;           // everything, temporal included
    nn::ParamList spatial_params() const;   // stage-1 trainable set
    nn::ParamList temporal_params() const;  // stage-2 motion-module set
};

struct IcaHook {
    const clipcond::ClipConditioning* cond = nullptr;
    const clipcond::CondModuleWeights* weights = nullptr;
};

// z_t, render_latent: [F,C,h,w]; t: one timestep per frame; condition:
// [F, Tc, d_cond]. Returns predicted noise with z_t's shape.
ad::Var denoise_forward(const ad::Var& z_t, const ad::Var& render_latent, const std::vector<int>& t,
                        const ad::Var& condition, const DenoiserWeights& w, bool use_temporal,
                        const std::optional<IcaHook>& ica = std::nullopt);

// eps_uncond + scale * (eps_cond - eps_uncond); scale 1 returns eps_cond
// exactly and scale 0 returns eps_uncond exactly.
Tensor cfg_predict(const Tensor& eps_cond, const Tensor& eps_uncond, double scale);

struct SampleRequest {
    int frames = 1;
    int steps = 50;
    double guidance_scale = 1.0;
    uint64_t seed = 0;
    bool use_temporal = false;
};

// Deterministic DDIM-style reverse process. null_condition replaces the
// appearance condition on the unconditional branch when guidance != 1.
Tensor sample(const DenoiserWeights& w, const NoiseSchedule& ns, const Tensor& render_latents,
              const Tensor& condition, const Tensor& null_condition,
              const std::optional<IcaHook>& ica, const SampleRequest& req);

}  // namespace faceanim::diffusion
