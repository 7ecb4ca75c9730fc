#pragma once

#include <map>
#include <string>
#include <vector>

#include "faceanim/autodiff.hpp"
#include "faceanim/nn.hpp"
#include "faceanim/rng.hpp"
#include "faceanim/tensor.hpp"

namespace faceanim::motion {

inline constexpr int kAlphaDim = 80;
inline constexpr int kBetaDim = 64;
inline constexpr int kDeltaDim = 80;
inline constexpr int kGammaDim = 27;
inline constexpr int kRhoDim = 6;
inline constexpr int kGazeDim = 2;
inline constexpr int kDescriptorDim = kAlphaDim + kBetaDim + kDeltaDim + kGammaDim + kRhoDim;  // 257

// Pose layout: [shear_yaw, shear_pitch, roll_radians, tx, ty, log_scale].
enum RhoIndex { kShearYaw = 0, kShearPitch, kRoll, kTx, kTy, kLogScale };

struct MotionCoeffs {
    std::vector<double> alpha;  // identity
    std::vector<double> beta;   // expression; [0]=mouth curve, [1]=eye openness, [2]=brow offset
    std::vector<double> delta;  // texture
    std::vector<double> gamma;  // illumination
    std::vector<double> rho;    // pose
    std::vector<double> gaze;   // pupil offset, [-1,1]

    static MotionCoeffs zero();
    void validate() const;  // dimensions + finiteness
    bool operator==(const MotionCoeffs& o) const = default;
};

struct FaceDescriptor {
    std::vector<double> p;  // 257 = alpha|beta|delta|gamma|rho
};

FaceDescriptor assemble_descriptor(const MotionCoeffs& c);
// Exactly inverts assemble_descriptor (gaze zeroed; it is not part of the descriptor).
MotionCoeffs split_descriptor(const FaceDescriptor& d);

// Value ranges per group; coefficients are clipped against these everywhere.
// The groups' semantics come from the renderer; the numeric ranges are an
// artifact choice documented here and in the README.
struct CoeffRanges {
    double alpha_lim = 1.0;
    double beta_lim = 1.0;
    double delta_lim = 1.0;
    double gamma_lim = 0.5;
    std::vector<double> rho_lim = {0.35, 0.35, 0.5, 0.3, 0.3, 0.25};
    double gaze_lim = 1.0;

    // Per-step random-walk scales for trajectory sampling.
    double alpha_step = 0.05;
    double beta_step = 0.3;
    double delta_step = 0.05;
    double gamma_step = 0.1;
    std::vector<double> rho_step = {0.1, 0.1, 0.15, 0.09, 0.09, 0.08};
    double gaze_step = 0.35;
};

MotionCoeffs clip_to_ranges(const MotionCoeffs& c, const CoeffRanges& r);

// Named single-entry edits; unknown names are rejected. Result is clipped.
// Vocabulary: shear_yaw shear_pitch roll tx ty log_scale mouth eye_openness
// brow gaze_x gaze_y.
MotionCoeffs edit_coefficients(const MotionCoeffs& c, const std::map<std::string, double>& edits,
                               const CoeffRanges& ranges = CoeffRanges());
const std::vector<std::string>& edit_vocabulary();

MotionCoeffs interpolate(const MotionCoeffs& c0, const MotionCoeffs& c1, double t);

// Learned projections turning (rho, beta, gaze) into three motion tokens.
struct ProjectionWeights {
    ad::Var w_rho, b_rho;    // [6,d],[d]
    ad::Var w_beta, b_beta;  // [64,d],[d]
    ad::Var w_gaze, b_gaze;  // [2,d],[d]
    ProjectionWeights() = default;
    ProjectionWeights(int d_model, Rng& rng);
    void collect(const std::string& prefix, nn::ParamList& out) const;
    int d_model() const { return w_rho->value.shape[1]; }
};

struct MotionTokenSet {
    ad::Var tokens;  // [3, d_model]: rho, beta, gaze in that order
};

MotionTokenSet motion_tokens(const std::vector<double>& rho, const std::vector<double>& beta,
                             const std::vector<double>& gaze, const ProjectionWeights& w);
MotionTokenSet motion_tokens(const MotionCoeffs& c, const ProjectionWeights& w);

// Coefficient-sequence file: one JSON record per frame with the named groups
// in documented order (alpha, beta, delta, gamma, rho, gaze). This is also
// the entry point for externally produced driving signals.
void save_coefficient_sequence(const std::vector<MotionCoeffs>& seq, const std::string& path);
std::vector<MotionCoeffs> load_coefficient_sequence(const std::string& path);

}  // namespace faceanim::motion
