#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "faceanim/autodiff.hpp"
#include "faceanim/rng.hpp"

namespace faceanim::nn {

// Ordered (name, parameter) pairs; the order defines checkpoint layout and
// optimizer state association.
struct ParamList {
    std::vector<std::pair<std::string, ad::Var>> items;
    void add(const std::string& name, const ad::Var& v) { items.emplace_back(name, v); }
    void merge(const ParamList& o) {
        items.insert(items.end(), o.items.begin(), o.items.end());
    }
    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& [_, v] : items) n += v->numel();
        return n;
    }
};

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

struct Linear {
    ad::Var w, b;  // w: [din, dout]
    Linear() = default;
    Linear(int din, int dout, Rng& rng);
    static Linear zeros(int din, int dout);
    ad::Var forward(const ad::Var& x) const { return ad::linear(x, w, b); }
    void collect(const std::string& prefix, ParamList& out) const {
        out.add(prefix + ".w", w);
        out.add(prefix + ".b", b);
    }
};

struct LayerNorm {
    ad::Var gamma, beta;
    LayerNorm() = default;
    explicit LayerNorm(int d);
    ad::Var forward(const ad::Var& x) const { return ad::layer_norm(x, gamma, beta); }
    void collect(const std::string& prefix, ParamList& out) const {
        out.add(prefix + ".gamma", gamma);
        out.add(prefix + ".beta", beta);
    }
};

struct GroupNorm {
    int groups = 8;
    ad::Var gamma, beta;
    GroupNorm() = default;
    GroupNorm(int channels, int groups_);
    ad::Var forward(const ad::Var& x) const { return ad::group_norm(x, groups, gamma, beta); }
    void collect(const std::string& prefix, ParamList& out) const {
        out.add(prefix + ".gamma", gamma);
        out.add(prefix + ".beta", beta);
    }
};

struct Conv2d {
    ad::Var w, b;  // w: [Cout,Cin,kh,kw]
    int stride = 1, pad = 0;
    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng);
    static Conv2d zeros(int cin, int cout, int k, int stride_, int pad_);
    ad::Var forward(const ad::Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
    void collect(const std::string& prefix, ParamList& out) const {
        out.add(prefix + ".w", w);
        out.add(prefix + ".b", b);
    }
};

// Multi-head self-attention over [B,T,d].
struct SelfAttention {
    int heads = 1;
    Linear qkv;   // d -> 3d
    Linear proj;  // d -> d
    SelfAttention() = default;
    SelfAttention(int d, int heads_, Rng& rng, bool zero_out_proj = false);
    ad::Var forward(const ad::Var& x) const;
    void collect(const std::string& prefix, ParamList& out) const {
        qkv.collect(prefix + ".qkv", out);
        proj.collect(prefix + ".proj", out);
    }
};

// Multi-head cross-attention: queries from [B,Tq,d], keys/values from [B,Tc,dc].
struct CrossAttention {
    int heads = 1;
    ad::Var wq, wk, wv;  // [d,di], [dc,di], [dc,di]
    Linear proj;         // di -> d
    CrossAttention() = default;
    CrossAttention(int d, int dc, int heads_, Rng& rng);
    ad::Var forward(const ad::Var& x, const ad::Var& ctx) const;
    void collect(const std::string& prefix, ParamList& out) const {
        out.add(prefix + ".wq", wq);
        out.add(prefix + ".wk", wk);
        out.add(prefix + ".wv", wv);
        proj.collect(prefix + ".proj", out);
    }
};

// Pre-norm transformer block: x += attn(ln1(x)); x += mlp(ln2(x)).
struct TransformerBlock {
    LayerNorm ln1, ln2;
    SelfAttention attn;
    Linear fc1, fc2;  // d -> 4d -> d
    TransformerBlock() = default;
    TransformerBlock(int d, int heads, Rng& rng);
    ad::Var forward(const ad::Var& x) const;
    void collect(const std::string& prefix, ParamList& out) const {
        ln1.collect(prefix + ".ln1", out);
        attn.collect(prefix + ".attn", out);
        ln2.collect(prefix + ".ln2", out);
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

// Split [B,T,3d] into per-head q,k,v of shape [B*h,T,hd].
std::array<ad::Var, 3> split_qkv_heads(const ad::Var& qkv, int heads);
// [B*h,T,hd] -> [B,T,d]
ad::Var merge_heads(const ad::Var& x, int batch, int heads);
// [B,T,d] -> [B*h,T,hd]
ad::Var split_heads(const ad::Var& x, int heads);

// Sinusoidal embedding for integer timesteps; one row per entry of t.
Tensor timestep_embedding(const std::vector<int>& t, int dim, int max_period = 10000);

}  // namespace faceanim::nn
