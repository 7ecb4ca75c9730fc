#pragma once

#include <deque>

#include "faceanim/coeffs.hpp"
#include "faceanim/nn.hpp"

namespace faceanim::modulation {

// Cross-attention weights for motion modulation of the patch tokens.
// out_proj starts at zero so the module is the identity before training.
struct ModulationWeights {
    ad::Var q_proj, k_proj, v_proj;  // [d, dk]
    ad::Var out_proj;                // [dk, d], zero at construction
    ModulationWeights() = default;
    ModulationWeights(int d_model, int d_k, Rng& rng);
    void collect(const std::string& prefix, nn::ParamList& out) const;
    int d_k() const { return q_proj->value.shape[1]; }
};

// e'_tex = e_tex + out_proj(softmax(Q K^T / sqrt(d_k)) V), Q from e_tex,
// K/V from the three motion tokens.
ad::Var modulate(const ad::Var& e_tex, const motion::MotionTokenSet& motion,
                 const ModulationWeights& w);

// Bounded FIFO of detached identity tokens. Tokens are L2-normalized on
// insertion so cosine similarity against them is a plain dot product.
class IdentityBank {
public:
    explicit IdentityBank(size_t capacity = 512) : capacity_(capacity) {}

    void push(const Tensor& token, int identity_label);
    size_t size() const { return entries_.size(); }
    size_t capacity() const { return capacity_; }

    struct Entry {
        Tensor token;
        int identity_label;
    };
    const std::deque<Entry>& entries() const { return entries_; }

    void save(std::vector<std::pair<std::string, Tensor>>& arrays, std::string prefix) const;
    void load(const std::vector<std::pair<std::string, Tensor>>& arrays, const std::string& prefix);

private:
    size_t capacity_;
    std::deque<Entry> entries_;
};

// Mean over positives of -log(exp(s+) / (exp(s+) + sum_j exp(s_j-))) with
// cosine similarities; optional temperature divides every similarity
// (default 1 adds nothing).
ad::Var identity_contrastive_loss(const ad::Var& anchor, const std::vector<ad::Var>& positives,
                                  const std::vector<ad::Var>& negatives, double temperature = 1.0);

struct ContrastiveInstance {
    ad::Var anchor;
    std::vector<ad::Var> positives;
    std::vector<ad::Var> negatives;
};

// Positives: the anchor's augmented view plus same-identity bank entries;
// negatives: every different-identity bank entry. The bank is updated with
// the detached anchors afterwards.
std::vector<ContrastiveInstance> build_contrastive_batch(
    const std::vector<std::pair<ad::Var, int>>& batch_tokens,
    const std::vector<ad::Var>& augmented_tokens, IdentityBank& bank);

// Adapter over the concatenated token sequence [e'_tex ; e_id]: exactly
// three pre-norm transformer blocks.
struct AdapterWeights {
    std::vector<nn::TransformerBlock> blocks;
    AdapterWeights() = default;
    AdapterWeights(int d_model, int heads, Rng& rng);
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

// e_tex_mod: [P,d], e_id: [d] -> [P+1,d]
ad::Var adapter(const ad::Var& e_tex_mod, const ad::Var& e_id, const AdapterWeights& w);

}  // namespace faceanim::modulation
