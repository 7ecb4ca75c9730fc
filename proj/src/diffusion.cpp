#include "faceanim/diffusion.hpp"

#include <cmath>

namespace faceanim::diffusion {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    require(T >= 2, "NoiseSchedule: T must be >= 2");
    NoiseSchedule ns;
    ns.betas.resize(static_cast<size_t>(T));
    ns.alphas.resize(static_cast<size_t>(T));
    ns.alpha_bars.resize(static_cast<size_t>(T));
    double bar = 1.0;
    for (int t = 0; t < T; ++t) {
        ns.betas[t] = beta_start + (beta_end - beta_start) * t / (T - 1);
        ns.alphas[t] = 1.0 - ns.betas[t];
        bar *= ns.alphas[t];
        ns.alpha_bars[t] = bar;
    }
    ns.validate();
    return ns;
}

void NoiseSchedule::validate() const {
    for (size_t t = 0; t < betas.size(); ++t) {
        require(betas[t] > 0.0 && betas[t] < 1.0, "NoiseSchedule: betas must lie in (0,1)");
        if (t > 0) require(alpha_bars[t] < alpha_bars[t - 1], "NoiseSchedule: alpha_bar not decreasing");
    }
    require(alpha_bars.front() > 0.99, "NoiseSchedule: alpha_bar[0] should be close to 1");
}

Tensor latent_encode(const Tensor& image_chw, int r) {
    require(image_chw.rank() == 3, "latent_encode: expected [C,H,W]");
    const int C = image_chw.shape[0], H = image_chw.shape[1], W = image_chw.shape[2];
    require(H % r == 0 && W % r == 0, "latent_encode: dims must be divisible by the block size");
    const int h = H / r, w = W / r;
    Tensor out({C * r * r, h, w});
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int oc = (c * r + dy) * r + dx;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        out[(static_cast<int64_t>(oc) * h + y) * w + x] =
                            image_chw[(static_cast<int64_t>(c) * H + y * r + dy) * W + x * r + dx];
            }
    return out;
}

Tensor latent_decode(const Tensor& latent, int r) {
    require(latent.rank() == 3, "latent_decode: expected [C,h,w]");
    const int Cl = latent.shape[0], h = latent.shape[1], w = latent.shape[2];
    require(Cl % (r * r) == 0, "latent_decode: channels not divisible by r^2");
    const int C = Cl / (r * r);
    Tensor out({C, h * r, w * r});
    for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int ic = (c * r + dy) * r + dx;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        out[(static_cast<int64_t>(c) * h * r + y * r + dy) * w * r + x * r + dx] =
                            latent[(static_cast<int64_t>(ic) * h + y) * w + x];
            }
    return out;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& ns) {
    require(t >= 0 && t < ns.T(), "q_sample: t out of range");
    require(x0.same_shape(eps), "q_sample: x0/eps shape mismatch");
    const double sa = std::sqrt(ns.alpha_bars[static_cast<size_t>(t)]);
    const double sb = std::sqrt(1.0 - ns.alpha_bars[static_cast<size_t>(t)]);
    Tensor out = x0;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = sa * x0.data[i] + sb * eps.data[i];
    return out;
}

ResBlock::ResBlock(int cin, int cout, int temb_hidden, int gn_groups, Rng& rng)
    : n1(cin, gn_groups),
      n2(cout, gn_groups),
      conv1(cin, cout, 3, 1, 1, rng),
      conv2(cout, cout, 3, 1, 1, rng),
      temb(temb_hidden, cout, rng),
      has_skip(cin != cout) {
    if (has_skip) skip = nn::Conv2d(cin, cout, 1, 1, 0, rng);
}

ad::Var ResBlock::forward(const ad::Var& x, const ad::Var& temb_h) const {
    auto h = conv1.forward(ad::silu(n1.forward(x)));
    h = ad::add_frame_channel_bias(h, temb.forward(temb_h));
    h = conv2.forward(ad::silu(n2.forward(h)));
    return ad::add(has_skip ? skip.forward(x) : x, h);
}

void ResBlock::collect(const std::string& prefix, nn::ParamList& out) const {
    n1.collect(prefix + ".n1", out);
    conv1.collect(prefix + ".conv1", out);
    temb.collect(prefix + ".temb", out);
    n2.collect(prefix + ".n2", out);
    conv2.collect(prefix + ".conv2", out);
    if (has_skip) skip.collect(prefix + ".skip", out);
}

TemporalBlock::TemporalBlock(int channels, int heads_, Rng& rng) : heads(heads_), ln(channels) {
    qkv = nn::Linear(channels, 3 * channels, rng);
    proj = nn::Linear::zeros(channels, channels);
}

namespace {

Tensor temporal_position_table(int positions, int frames, int channels) {
    // sinusoidal embedding over the frame axis, tiled across spatial positions
    std::vector<int> idx(static_cast<size_t>(frames));
    for (int f = 0; f < frames; ++f) idx[static_cast<size_t>(f)] = f;
    const int dim = channels % 2 == 0 ? channels : channels - 1;
    Tensor pe_row = nn::timestep_embedding(idx, dim, 128);
    Tensor pe({positions, frames, channels});
    for (int p = 0; p < positions; ++p)
        for (int f = 0; f < frames; ++f)
            for (int c = 0; c < dim; ++c)
                pe[(static_cast<int64_t>(p) * frames + f) * channels + c] =
                    0.1 * pe_row[static_cast<int64_t>(f) * dim + c];
    return pe;
}

}  // namespace

ad::Var TemporalBlock::forward(const ad::Var& x) const {
    const int F = x->value.shape[0], C = x->value.shape[1];
    const int H = x->value.shape[2], W = x->value.shape[3];
    const int HW = H * W;
    // [F,C,H,W] -> [HW,F,C]: frames become the sequence at each location
    auto tok = ad::permute(ad::reshape(x, {F, C, HW}), {2, 0, 1});
    tok = ad::add(tok, ad::constant(temporal_position_table(HW, F, C)));
    auto h = ln.forward(tok);
    auto parts = nn::split_qkv_heads(qkv.forward(h), heads);
    const int hd = C / heads;
    auto scores = ad::scale(ad::bmm_nt(parts[0], parts[1]), 1.0 / std::sqrt(static_cast<double>(hd)));
    auto ctx = ad::bmm(ad::softmax_last(scores), parts[2]);
    auto merged = nn::merge_heads(ctx, HW, heads);
    auto o = proj.forward(merged);  // [HW,F,C]
    auto back = ad::reshape(ad::permute(o, {1, 2, 0}), {F, C, H, W});
    return ad::add(x, back);
}

void TemporalBlock::collect(const std::string& prefix, nn::ParamList& out) const {
    ln.collect(prefix + ".ln", out);
    qkv.collect(prefix + ".qkv", out);
    proj.collect(prefix + ".proj", out);
}

AttnPack::AttnPack(int channels, int d_cond, int gn_groups, Rng& rng)
    : norm_self(channels, gn_groups),
      norm_cross(channels, gn_groups),
      self_attn(channels, std::max(1, channels / 32), rng),
      cross_attn(channels, d_cond, std::max(1, channels / 32), rng),
      temporal(channels, std::max(1, channels / 32), rng) {}

ad::Var AttnPack::forward(const ad::Var& x, const ad::Var& cond, bool use_temporal) const {
    const int F = x->value.shape[0], C = x->value.shape[1];
    const int H = x->value.shape[2], W = x->value.shape[3];
    const int HW = H * W;
    auto to_tokens = [&](const ad::Var& v) {
        return ad::permute(ad::reshape(v, {F, C, HW}), {0, 2, 1});  // [F,HW,C]
    };
    auto to_spatial = [&](const ad::Var& v) {
        return ad::reshape(ad::permute(v, {0, 2, 1}), {F, C, H, W});
    };
    auto h = ad::add(x, to_spatial(self_attn.forward(to_tokens(norm_self.forward(x)))));
    h = ad::add(h, to_spatial(cross_attn.forward(to_tokens(norm_cross.forward(h)), cond)));
    if (use_temporal) h = temporal.forward(h);
    return h;
}

void AttnPack::collect(const std::string& prefix, nn::ParamList& out) const {
    norm_self.collect(prefix + ".norm_self", out);
    self_attn.collect(prefix + ".self", out);
    norm_cross.collect(prefix + ".norm_cross", out);
    cross_attn.collect(prefix + ".cross", out);
}

void AttnPack::collect_temporal(const std::string& prefix, nn::ParamList& out) const {
    temporal.collect(prefix + ".temporal", out);
}

DenoiserWeights::DenoiserWeights(UNetConfig cfg_, Rng& rng) : cfg(cfg_) {
    const int cin = 2 * cfg.latent_channels;
    const int w0 = cfg.width0, w1 = cfg.width1, th = cfg.temb_hidden, g = cfg.gn_groups;
    conv_in = nn::Conv2d(cin, w0, 3, 1, 1, rng);
    temb1 = nn::Linear(cfg.t_dim, th, rng);
    temb2 = nn::Linear(th, th, rng);
    down_res0 = ResBlock(w0, w0, th, g, rng);
    down_attn0 = AttnPack(w0, cfg.d_cond, g, rng);
    down_conv = nn::Conv2d(w0, w1, 3, 2, 1, rng);
    down_res1 = ResBlock(w1, w1, th, g, rng);
    down_attn1 = AttnPack(w1, cfg.d_cond, g, rng);
    mid_res1 = ResBlock(w1, w1, th, g, rng);
    mid_attn = AttnPack(w1, cfg.d_cond, g, rng);
    mid_res2 = ResBlock(w1, w1, th, g, rng);
    up_res1 = ResBlock(w1 + w1, w1, th, g, rng);
    up_attn1 = AttnPack(w1, cfg.d_cond, g, rng);
    up_conv = nn::Conv2d(w1, w0, 3, 1, 1, rng);
    up_res0 = ResBlock(w0 + w0, w0, th, g, rng);
    up_attn0 = AttnPack(w0, cfg.d_cond, g, rng);
    out_norm = nn::GroupNorm(w0, g);
    conv_out = nn::Conv2d(w0, cfg.latent_channels, 3, 1, 1, rng);
}

nn::ParamList DenoiserWeights::params() const {
    nn::ParamList p = spatial_params();
    p.merge(temporal_params());
    return p;
}

nn::ParamList DenoiserWeights::spatial_params() const {
    nn::ParamList p;
    conv_in.collect("unet.conv_in", p);
    temb1.collect("unet.temb1", p);
    temb2.collect("unet.temb2", p);
    down_res0.collect("unet.down_res0", p);
    down_attn0.collect("unet.down_attn0", p);
    down_conv.collect("unet.down_conv", p);
    down_res1.collect("unet.down_res1", p);
    down_attn1.collect("unet.down_attn1", p);
    mid_res1.collect("unet.mid_res1", p);
    mid_attn.collect("unet.mid_attn", p);
    mid_res2.collect("unet.mid_res2", p);
    up_res1.collect("unet.up_res1", p);
    up_attn1.collect("unet.up_attn1", p);
    up_conv.collect("unet.up_conv", p);
    up_res0.collect("unet.up_res0", p);
    up_attn0.collect("unet.up_attn0", p);
    out_norm.collect("unet.out_norm", p);
    conv_out.collect("unet.conv_out", p);
    return p;
}

nn::ParamList DenoiserWeights::temporal_params() const {
    nn::ParamList p;
    down_attn0.collect_temporal("unet.down_attn0", p);
    down_attn1.collect_temporal("unet.down_attn1", p);
    mid_attn.collect_temporal("unet.mid_attn", p);
    up_attn1.collect_temporal("unet.up_attn1", p);
    up_attn0.collect_temporal("unet.up_attn0", p);
    return p;
}

ad::Var denoise_forward(const ad::Var& z_t, const ad::Var& render_latent, const std::vector<int>& t,
                        const ad::Var& condition, const DenoiserWeights& w, bool use_temporal,
                        const std::optional<IcaHook>& ica) {
    require(z_t->value.rank() == 4, "denoise_forward: z_t must be [F,C,h,w]");
    require(z_t->value.same_shape(render_latent->value),
            "denoise_forward: render latent must be frame-aligned with z_t, got " +
                shape_str(render_latent->value.shape) + " vs " + shape_str(z_t->value.shape));
    const int F = z_t->value.shape[0];
    require(static_cast<int>(t.size()) == F, "denoise_forward: one timestep per frame required");
    require(condition->value.rank() == 3 && condition->value.shape[0] == F,
            "denoise_forward: condition must be [F,Tc,d]");

    auto temb_in = ad::constant(nn::timestep_embedding(t, w.cfg.t_dim));
    auto temb_h = w.temb2.forward(ad::silu(w.temb1.forward(temb_in)));  // [F, th]

    auto x = ad::concat({z_t, render_latent}, 1);
    auto h0 = w.conv_in.forward(x);
    if (ica && ica->cond && ica->weights)
        h0 = clipcond::apply_condition(h0, *ica->cond, *ica->weights);

    auto d0 = w.down_attn0.forward(w.down_res0.forward(h0, temb_h), condition, use_temporal);
    auto d1 = w.down_conv.forward(d0);
    d1 = w.down_attn1.forward(w.down_res1.forward(d1, temb_h), condition, use_temporal);

    auto m = w.mid_res1.forward(d1, temb_h);
    m = w.mid_attn.forward(m, condition, use_temporal);
    m = w.mid_res2.forward(m, temb_h);

    auto u1 = w.up_res1.forward(ad::concat({m, d1}, 1), temb_h);
    u1 = w.up_attn1.forward(u1, condition, use_temporal);
    auto u0 = w.up_conv.forward(ad::upsample_nearest2x(u1));
    u0 = w.up_res0.forward(ad::concat({u0, d0}, 1), temb_h);
    u0 = w.up_attn0.forward(u0, condition, use_temporal);

    return w.conv_out.forward(ad::silu(w.out_norm.forward(u0)));
}

Tensor cfg_predict(const Tensor& eps_cond, const Tensor& eps_uncond, double scale) {
    require(eps_cond.same_shape(eps_uncond), "cfg_predict: shape mismatch");
    if (scale == 1.0) return eps_cond;
    if (scale == 0.0) return eps_uncond;
    Tensor out = eps_uncond;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] += scale * (eps_cond.data[i] - eps_uncond.data[i]);
    return out;
}

Tensor sample(const DenoiserWeights& w, const NoiseSchedule& ns, const Tensor& render_latents,
              const Tensor& condition, const Tensor& null_condition,
              const std::optional<IcaHook>& ica, const SampleRequest& req) {
    require(req.steps >= 1, "sample: steps must be >= 1");
    require(render_latents.rank() == 4 && render_latents.shape[0] == req.frames,
            "sample: render latents must be [F,C,h,w]");
    ad::NoGradGuard ng;

    const int T = ns.T();
    std::vector<int> ts(static_cast<size_t>(req.steps));
    for (int i = 0; i < req.steps; ++i)
        ts[static_cast<size_t>(i)] =
            req.steps == 1 ? T - 1
                           : static_cast<int>(std::lround(static_cast<double>(i) * (T - 1) /
                                                          (req.steps - 1)));
    // descending, deduplicated
    std::vector<int> sched;
    for (int i = req.steps - 1; i >= 0; --i)
        if (sched.empty() || ts[static_cast<size_t>(i)] < sched.back())
            sched.push_back(ts[static_cast<size_t>(i)]);

    Rng rng(req.seed);
    Tensor z = rng.normal_tensor(render_latents.shape);
    auto render_v = ad::constant(render_latents);
    auto cond_v = ad::constant(condition);
    auto null_v = ad::constant(null_condition);

    for (size_t si = 0; si < sched.size(); ++si) {
        const int t = sched[si];
        const double abar_t = ns.alpha_bars[static_cast<size_t>(t)];
        const double abar_next = si + 1 < sched.size()
                                     ? ns.alpha_bars[static_cast<size_t>(sched[si + 1])]
                                     : 1.0;
        const std::vector<int> tvec(static_cast<size_t>(req.frames), t);
        Tensor eps =
            denoise_forward(ad::constant(z), render_v, tvec, cond_v, w, req.use_temporal, ica)->value;
        if (req.guidance_scale != 1.0) {
            Tensor eps_u =
                denoise_forward(ad::constant(z), render_v, tvec, null_v, w, req.use_temporal, ica)
                    ->value;
            eps = cfg_predict(eps, eps_u, req.guidance_scale);
        }
        const double sa = std::sqrt(abar_t), sb = std::sqrt(1.0 - abar_t);
        const double sna = std::sqrt(abar_next), snb = std::sqrt(1.0 - abar_next);
        for (size_t i = 0; i < z.data.size(); ++i) {
            const double x0 = (z.data[i] - sb * eps.data[i]) / sa;
            z.data[i] = sna * x0 + snb * eps.data[i];
        }
        if (!z.all_finite())
            throw std::runtime_error("sample: non-finite latent at reverse step " +
                                     std::to_string(si) + " (t=" + std::to_string(t) + ")");
    }
    return z;
}

}  // namespace faceanim::diffusion
