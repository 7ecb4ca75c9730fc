#pragma once

#include <optional>

#include "faceanim/regressor.hpp"
#include "faceanim/train.hpp"

namespace faceanim::infer {

struct AnimationRequest {
    std::vector<motion::MotionCoeffs> driving;
    int clip_length = 12;
    int overlap_k = 3;  // frames conditioned on the previous clip; 1..floor(F/4)
    double guidance_scale = 1.0;
    int steps = 50;
    uint64_t seed = 0;
    bool use_ica = true;  // when false the condition path is fully disabled (k = 0)
    bool use_temporal = true;

    void validate() const;
};

struct ChunkPlan {
    int clips = 0;
    int padded_frames = 0;  // driving frames after right-padding with the last value
    int output_frames = 0;  // equals the driving length
};
ChunkPlan plan_chunks(int driving_frames, int clip_length);

struct AnimationResult {
    std::vector<Image> frames;          // exactly driving.size() frames
    std::vector<Tensor> clip_latents;   // denoised latents per clip [F,C,h,w]
    std::vector<Tensor> clip_conditions;  // conditioning latents actually used per clip
    ChunkPlan plan;
};

AnimationResult animate(const AnimationRequest& request, const train::ModelBundle& model,
                        const Image& source);

// Mean L1 frame difference at clip boundaries minus the within-clip mean.
// Requires at least 2 clips' worth of frames.
double boundary_gap(const std::vector<Image>& frames, int clip_length);

struct FrameEval {
    int index = 0;
    double identity_cosine = 0.0;
    double exp_err = 0.0, pose_err = 0.0, gaze_err = 0.0;
    double psnr = 0.0;  // only valid in same-identity mode
};

struct EvalReport {
    double psnr = 0.0;  // capped; 0 when no ground truth was given
    bool has_psnr = false;
    double identity_cosine = 0.0;
    double exp_err = 0.0, pose_err = 0.0, gaze_err = 0.0;
    double boundary_gap_value = 0.0;
    bool has_boundary_gap = false;
    std::vector<FrameEval> frames;
};

EvalReport evaluate(const std::vector<Image>& generated, const Image& source,
                    const std::vector<motion::MotionCoeffs>& driving,
                    const world::CoeffRegressor& regressor, const train::ModelBundle& model,
                    int clip_length, const std::vector<Image>* ground_truth = nullptr);

void save_report(const EvalReport& r, const std::string& path);
EvalReport load_report(const std::string& path);

// Applies named edits to the base coefficients and animates either the single
// edited pose or a sweep of `sweep_steps` interpolated frames.
std::vector<Image> edit_and_preview(const Image& source, const motion::MotionCoeffs& base,
                                    const std::map<std::string, double>& edits, int sweep_steps,
                                    const train::ModelBundle& model, const AnimationRequest& base_req);

}  // namespace faceanim::infer
