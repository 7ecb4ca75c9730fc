#include "faceanim/nn.hpp"

#include <array>
#include <cmath>

namespace faceanim::nn {

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    rng.fill_uniform(t, -limit, limit);
    return t;
}

Linear::Linear(int din, int dout, Rng& rng) {
    w = ad::leaf(xavier_uniform({din, dout}, din, dout, rng));
    b = ad::leaf(Tensor::zeros({dout}));
}

Linear Linear::zeros(int din, int dout) {
    Linear l;
    l.w = ad::leaf(Tensor::zeros({din, dout}));
    l.b = ad::leaf(Tensor::zeros({dout}));
    return l;
}

LayerNorm::LayerNorm(int d) {
    gamma = ad::leaf(Tensor::full({d}, 1.0));
    beta = ad::leaf(Tensor::zeros({d}));
}

GroupNorm::GroupNorm(int channels, int groups_) : groups(groups_) {
    require(channels % groups == 0, "GroupNorm: channels must divide groups");
    gamma = ad::leaf(Tensor::full({channels}, 1.0));
    beta = ad::leaf(Tensor::zeros({channels}));
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng) : stride(stride_), pad(pad_) {
    const int fan_in = cin * k * k, fan_out = cout * k * k;
    w = ad::leaf(xavier_uniform({cout, cin, k, k}, fan_in, fan_out, rng));
    b = ad::leaf(Tensor::zeros({cout}));
}

Conv2d Conv2d::zeros(int cin, int cout, int k, int stride_, int pad_) {
    Conv2d c;
    c.stride = stride_;
    c.pad = pad_;
    c.w = ad::leaf(Tensor::zeros({cout, cin, k, k}));
    c.b = ad::leaf(Tensor::zeros({cout}));
    return c;
}

std::array<ad::Var, 3> split_qkv_heads(const ad::Var& qkv, int heads) {
    const int B = qkv->value.shape[0], T = qkv->value.shape[1];
    const int d = qkv->value.shape[2] / 3;
    const int hd = d / heads;
    // [B,T,3d] -> [B,T,3,h,hd] -> [3,B,h,T,hd]
    auto r = ad::reshape(qkv, {B, T, 3, heads, hd});
    auto p = ad::permute(r, {2, 0, 3, 1, 4});
    std::array<ad::Var, 3> out;
    for (int i = 0; i < 3; ++i)
        out[i] = ad::reshape(ad::slice(p, 0, i, 1), {B * heads, T, hd});
    return out;
}

ad::Var split_heads(const ad::Var& x, int heads) {
    const int B = x->value.shape[0], T = x->value.shape[1], d = x->value.shape[2];
    const int hd = d / heads;
    auto r = ad::reshape(x, {B, T, heads, hd});
    auto p = ad::permute(r, {0, 2, 1, 3});  // [B,h,T,hd]
    return ad::reshape(p, {B * heads, T, hd});
}

ad::Var merge_heads(const ad::Var& x, int batch, int heads) {
    const int T = x->value.shape[1], hd = x->value.shape[2];
    auto r = ad::reshape(x, {batch, heads, T, hd});
    auto p = ad::permute(r, {0, 2, 1, 3});  // [B,T,h,hd]
    return ad::reshape(p, {batch, T, heads * hd});
}

SelfAttention::SelfAttention(int d, int heads_, Rng& rng, bool zero_out_proj) : heads(heads_) {
    require(d % heads == 0, "SelfAttention: d must divide heads");
    qkv = Linear(d, 3 * d, rng);
    proj = zero_out_proj ? Linear::zeros(d, d) : Linear(d, d, rng);
}

ad::Var SelfAttention::forward(const ad::Var& x) const {
    const int B = x->value.shape[0];
    const int d = x->value.shape[2];
    const int hd = d / heads;
    auto parts = split_qkv_heads(qkv.forward(x), heads);
    auto scores = ad::scale(ad::bmm_nt(parts[0], parts[1]), 1.0 / std::sqrt(static_cast<double>(hd)));
    auto attn = ad::softmax_last(scores);
    auto ctx = ad::bmm(attn, parts[2]);  // [B*h,T,hd]
    return proj.forward(merge_heads(ctx, B, heads));
}

CrossAttention::CrossAttention(int d, int dc, int heads_, Rng& rng) : heads(heads_) {
    require(d % heads == 0, "CrossAttention: d must divide heads");
    wq = ad::leaf(xavier_uniform({d, d}, d, d, rng));
    wk = ad::leaf(xavier_uniform({dc, d}, dc, d, rng));
    wv = ad::leaf(xavier_uniform({dc, d}, dc, d, rng));
    proj = Linear(d, d, rng);
}

ad::Var CrossAttention::forward(const ad::Var& x, const ad::Var& ctx) const {
    const int B = x->value.shape[0];
    const int d = x->value.shape[2];
    const int hd = d / heads;
    auto q = split_heads(ad::linear_nobias(x, wq), heads);
    auto k = split_heads(ad::linear_nobias(ctx, wk), heads);
    auto v = split_heads(ad::linear_nobias(ctx, wv), heads);
    auto scores = ad::scale(ad::bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(hd)));
    auto attn = ad::softmax_last(scores);
    auto out = ad::bmm(attn, v);
    return proj.forward(merge_heads(out, B, heads));
}

TransformerBlock::TransformerBlock(int d, int heads, Rng& rng)
    : ln1(d), ln2(d), attn(d, heads, rng), fc1(d, 4 * d, rng), fc2(4 * d, d, rng) {}

ad::Var TransformerBlock::forward(const ad::Var& x) const {
    auto h = ad::add(x, attn.forward(ln1.forward(x)));
    auto m = fc2.forward(ad::gelu(fc1.forward(ln2.forward(h))));
    return ad::add(h, m);
}

Tensor timestep_embedding(const std::vector<int>& t, int dim, int max_period) {
    require(dim % 2 == 0, "timestep_embedding: dim must be even");
    const int half = dim / 2;
    Tensor out({static_cast<int>(t.size()), dim});
    for (size_t r = 0; r < t.size(); ++r) {
        for (int i = 0; i < half; ++i) {
            const double freq =
                std::exp(-std::log(static_cast<double>(max_period)) * i / static_cast<double>(half));
            const double arg = t[r] * freq;
            out[static_cast<int64_t>(r) * dim + i] = std::cos(arg);
            out[static_cast<int64_t>(r) * dim + half + i] = std::sin(arg);
        }
    }
    return out;
}

}  // namespace faceanim::nn
