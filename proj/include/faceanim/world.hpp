#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "faceanim/coeffs.hpp"
#include "faceanim/image.hpp"
#include "faceanim/rng.hpp"

namespace faceanim::world {

// Procedurally generated avatar: geometry derived from alpha, colors from
// delta, both pure functions of (seed, alpha, delta).
struct AvatarIdentity {
    uint64_t seed = 0;
    std::vector<double> shape_params;    // head radii, eye layout, mouth layout, hair line
    std::vector<double> texture_params;  // skin, hair, iris, mouth RGB triples
};

AvatarIdentity make_identity(uint64_t seed, const std::vector<double>& alpha,
                             const std::vector<double>& delta);

struct SceneParams {
    std::vector<double> illumination;      // brightness + linear gradient, from gamma
    std::array<double, 3> background_color{0.10, 0.12, 0.16};
};

SceneParams scene_from_gamma(const std::vector<double>& gamma,
                             const std::array<double, 3>& background);

inline const std::vector<int>& allowed_resolutions() {
    static const std::vector<int> r = {32, 64, 128};
    return r;
}

// Renders the avatar under the given motion. Deterministic; pose drives an
// affine warp (shears stand in for yaw/pitch), beta[0..2] drive mouth/eye/
// brow geometry, the remaining beta dims perturb the cheek tint weakly,
// gaze moves the pupils and illumination only rescales colors.
Image render_avatar(const AvatarIdentity& identity, const motion::MotionCoeffs& coeffs,
                    const SceneParams& scene, int resolution);

// Identity-free structural render of (rho, beta[0..2], gaze): outline plus
// landmark strokes on black. Constant in alpha, delta and gamma.
Image render_motion_frame(const motion::MotionCoeffs& coeffs, int resolution);

// Exponentially smoothed random walk through coefficient space. The L-inf
// delta between adjacent frames never exceeds (1-smoothness) * step scale
// for any group.
std::vector<motion::MotionCoeffs> sample_motion_trajectory(int length, double smoothness,
                                                           uint64_t rng_seed,
                                                           const motion::CoeffRanges& ranges =
                                                               motion::CoeffRanges());
// Same walk but starting from a fixed coefficient set, drawing from an
// existing generator. Groups listed in freeze_identity stay constant.
std::vector<motion::MotionCoeffs> sample_trajectory_from(const motion::MotionCoeffs& start,
                                                         int length, double smoothness, Rng& rng,
                                                         const motion::CoeffRanges& ranges,
                                                         bool freeze_identity);

double trajectory_delta_cap(double smoothness, double step_scale);

struct FrameRecord {
    std::string image;  // path relative to the dataset root
    motion::MotionCoeffs coeffs;
};

struct ClipRecord {
    int identity_id = 0;
    std::array<double, 3> background{};
    std::string coeff_file;  // standalone driving sequence for this clip
    std::vector<FrameRecord> frames;
};

struct DatasetManifest {
    int version = 1;
    int resolution = 64;
    uint64_t rng_seed = 0;
    std::string root;  // directory holding manifest.json; not serialized
    std::vector<AvatarIdentity> identities;
    std::vector<ClipRecord> clips;

    int64_t total_frames() const;
    std::string frame_path(const FrameRecord& f) const;
    void validate() const;
};

DatasetManifest generate_dataset(int n_identities, int clips_per_identity, int frames_per_clip,
                                 int resolution, const std::string& out_dir, uint64_t rng_seed);
DatasetManifest load_dataset(const std::string& dir);

}  // namespace faceanim::world
