#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace faceanim::selftest {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Individual invariant checks. Tolerances are fixed inside each check.
CheckResult check_kernel_parity();
CheckResult check_descriptor_roundtrip();
CheckResult check_edit_locality();
CheckResult check_interpolation();
CheckResult check_motion_token_oracle();
CheckResult check_renderer_determinism();
CheckResult check_motion_frame_identity_free();
CheckResult check_trajectory_cap();
CheckResult check_modulate_zero_init();     // max |modulate(x) - x| <= 1e-6 over 100 inputs
CheckResult check_modulate_oracle();        // vs dense softmax-attention oracle, 1e-6
CheckResult check_attention_rows_sum();     // softmax rows sum to 1 within 1e-6
CheckResult check_contrastive_closed_forms();  // log(1+e^-2), log(1+N)
CheckResult check_contrastive_oracle();        // 100 random instances, 1e-6 relative
CheckResult check_contrastive_bounds();        // 0 <= L <= log(1 + N e^2)
CheckResult check_bank_fifo();
CheckResult check_mask_exactness();  // Eq-3 pattern for F=12, every k
CheckResult check_sample_k_uniform();
CheckResult check_cond_noise_stats();  // sigma = 0.1, 1e5 samples
CheckResult check_latent_invertibility();
CheckResult check_q_sample_closed_form();
CheckResult check_cfg_endpoints();
CheckResult check_zero_init_noninterference();  // temporal + W_cond, <= 1e-6
CheckResult check_grad_contrastive_anchor();    // <= 1e-4 relative vs central differences
CheckResult check_grad_modulate();
CheckResult check_grad_denoiser();  // tiny config
CheckResult check_grad_encoder_input();
CheckResult check_augment_identity_and_grayscale();
CheckResult check_checkpoint_roundtrip();

const std::vector<std::function<CheckResult()>>& all_checks();

// Runs everything, prints one line per check; returns the failure count.
int run_selftest(std::ostream& os);

}  // namespace faceanim::selftest
