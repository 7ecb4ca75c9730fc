#include "faceanim/modulation.hpp"

#include <cmath>

namespace faceanim::modulation {

ModulationWeights::ModulationWeights(int d_model, int d_k, Rng& rng) {
    q_proj = ad::leaf(nn::xavier_uniform({d_model, d_k}, d_model, d_k, rng));
    k_proj = ad::leaf(nn::xavier_uniform({d_model, d_k}, d_model, d_k, rng));
    v_proj = ad::leaf(nn::xavier_uniform({d_model, d_k}, d_model, d_k, rng));
    out_proj = ad::leaf(Tensor::zeros({d_k, d_model}));
}

void ModulationWeights::collect(const std::string& prefix, nn::ParamList& out) const {
    out.add(prefix + ".q_proj", q_proj);
    out.add(prefix + ".k_proj", k_proj);
    out.add(prefix + ".v_proj", v_proj);
    out.add(prefix + ".out_proj", out_proj);
}

ad::Var modulate(const ad::Var& e_tex, const motion::MotionTokenSet& motion,
                 const ModulationWeights& w) {
    require(e_tex->value.rank() == 2, "modulate: e_tex must be [P,d]");
    require(e_tex->value.shape[1] == w.q_proj->value.shape[0],
            "modulate: e_tex feature dim does not match projection");
    require(motion.tokens->value.shape[1] == w.k_proj->value.shape[0],
            "modulate: motion token dim does not match projection");
    const int dk = w.d_k();
    auto q = ad::linear_nobias(e_tex, w.q_proj);          // [P,dk]
    auto k = ad::linear_nobias(motion.tokens, w.k_proj);  // [3,dk]
    auto v = ad::linear_nobias(motion.tokens, w.v_proj);  // [3,dk]
    auto scores = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
    auto attn = ad::softmax_last(scores);  // [P,3]
    auto ctx = ad::matmul(attn, v);        // [P,dk]
    return ad::add(e_tex, ad::linear_nobias(ctx, w.out_proj));
}

void IdentityBank::push(const Tensor& token, int identity_label) {
    require(token.rank() == 1, "IdentityBank: token must be a vector");
    double norm = 0.0;
    for (double v : token.data) norm += v * v;
    norm = std::sqrt(norm);
    require(norm > 0.0, "IdentityBank: zero-norm token");
    Entry e;
    e.token = token;
    for (double& v : e.token.data) v /= norm;
    e.identity_label = identity_label;
    entries_.push_back(std::move(e));
    while (entries_.size() > capacity_) entries_.pop_front();
}

void IdentityBank::save(std::vector<std::pair<std::string, Tensor>>& arrays,
                        std::string prefix) const {
    Tensor labels({static_cast<int>(entries_.size())});
    int i = 0;
    for (const auto& e : entries_) {
        arrays.emplace_back(prefix + ".token." + std::to_string(i), e.token);
        labels[i] = e.identity_label;
        ++i;
    }
    arrays.emplace_back(prefix + ".labels", std::move(labels));
}

void IdentityBank::load(const std::vector<std::pair<std::string, Tensor>>& arrays,
                        const std::string& prefix) {
    entries_.clear();
    const Tensor* labels = nullptr;
    for (const auto& [n, t] : arrays)
        if (n == prefix + ".labels") labels = &t;
    if (!labels) return;  // empty bank
    for (int i = 0; i < labels->shape[0]; ++i) {
        const std::string key = prefix + ".token." + std::to_string(i);
        for (const auto& [n, t] : arrays)
            if (n == key) {
                Entry e;
                e.token = t;
                e.identity_label = static_cast<int>((*labels)[i]);
                entries_.push_back(std::move(e));
            }
    }
}

namespace {

ad::Var cosine_sim(const ad::Var& a, const ad::Var& b) {
    auto na = ad::sqrt(ad::dot(a, a));
    auto nb = ad::sqrt(ad::dot(b, b));
    return ad::div(ad::dot(a, b), ad::mul(na, nb));
}

void check_nonzero(const ad::Var& v, const char* what) {
    double n = 0.0;
    for (double x : v->value.data) n += x * x;
    require(n > 0.0, std::string("identity_contrastive_loss: zero-norm ") + what);
}

}  // namespace

ad::Var identity_contrastive_loss(const ad::Var& anchor, const std::vector<ad::Var>& positives,
                                  const std::vector<ad::Var>& negatives, double temperature) {
    require(!positives.empty(), "identity_contrastive_loss: at least one positive required");
    require(temperature > 0.0, "identity_contrastive_loss: temperature must be positive");
    check_nonzero(anchor, "anchor");
    for (const auto& p : positives) check_nonzero(p, "positive");
    for (const auto& n : negatives) check_nonzero(n, "negative");

    const double inv_t = 1.0 / temperature;
    // negative sum is shared across positives
    ad::Var neg_sum = ad::constant_scalar(0.0);
    for (const auto& n : negatives)
        neg_sum = ad::add(neg_sum, ad::exp(ad::scale(cosine_sim(anchor, n), inv_t)));

    ad::Var total = ad::constant_scalar(0.0);
    for (const auto& p : positives) {
        auto sp = ad::scale(cosine_sim(anchor, p), inv_t);
        auto denom = ad::add(ad::exp(sp), neg_sum);
        total = ad::add(total, ad::sub(ad::log(denom), sp));  // -log(e^s / denom)
    }
    return ad::scale(total, 1.0 / static_cast<double>(positives.size()));
}

std::vector<ContrastiveInstance> build_contrastive_batch(
    const std::vector<std::pair<ad::Var, int>>& batch_tokens,
    const std::vector<ad::Var>& augmented_tokens, IdentityBank& bank) {
    require(batch_tokens.size() == augmented_tokens.size(),
            "build_contrastive_batch: batch and augmented lists must align one-to-one");
    std::vector<ContrastiveInstance> out;
    out.reserve(batch_tokens.size());
    for (size_t i = 0; i < batch_tokens.size(); ++i) {
        ContrastiveInstance inst;
        inst.anchor = batch_tokens[i].first;
        inst.positives.push_back(augmented_tokens[i]);
        for (const auto& e : bank.entries()) {
            if (e.identity_label == batch_tokens[i].second)
                inst.positives.push_back(ad::constant(e.token));
            else
                inst.negatives.push_back(ad::constant(e.token));
        }
        out.push_back(std::move(inst));
    }
    // bank update happens after the batch is assembled, detached
    for (const auto& [tok, label] : batch_tokens) bank.push(tok->value, label);
    return out;
}

AdapterWeights::AdapterWeights(int d_model, int heads, Rng& rng) {
    for (int i = 0; i < 3; ++i) blocks.emplace_back(d_model, heads, rng);
}

void AdapterWeights::collect(const std::string& prefix, nn::ParamList& out) const {
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(prefix + ".block" + std::to_string(i), out);
}

ad::Var adapter(const ad::Var& e_tex_mod, const ad::Var& e_id, const AdapterWeights& w) {
    require(w.blocks.size() == 3, "adapter: expected exactly 3 blocks");
    require(e_tex_mod->value.rank() == 2, "adapter: e_tex_mod must be [P,d]");
    const int d = e_tex_mod->value.shape[1];
    require(e_id->value.rank() == 1 && e_id->value.shape[0] == d,
            "adapter: e_id dim does not match patch tokens");
    const int P = e_tex_mod->value.shape[0];
    auto seq = ad::concat({e_tex_mod, ad::reshape(e_id, {1, d})}, 0);  // [P+1,d]
    auto x = ad::reshape(seq, {1, P + 1, d});
    for (const auto& blk : w.blocks) x = blk.forward(x);
    return ad::reshape(x, {P + 1, d});
}

}  // namespace faceanim::modulation
