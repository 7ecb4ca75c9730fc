#pragma once

#include "faceanim/image.hpp"
#include "faceanim/nn.hpp"
#include "faceanim/world.hpp"

namespace faceanim::world {

// In-memory 8-bit frame cache for training loops.
struct PixelCache {
    int resolution = 0;
    std::vector<std::vector<uint8_t>> frames;    // per global index
    std::vector<std::pair<int, int>> location;   // (clip index, frame index)
    Image get(int i) const;
};

PixelCache cache_frames(const DatasetManifest& mf);

struct RegressorConfig {
    int steps = 1200;
    int batch = 32;
    double lr = 1e-3;
    uint64_t seed = 7;
    double val_fraction = 0.1;
};

// Small conv net estimating (rho, active beta dims, gaze) from a frame.
struct CoeffRegressor {
    int resolution = 64;
    nn::Conv2d c1, c2, c3;
    nn::Linear f1, f2;
    // held-out validation errors recorded when training finished
    double val_pose_err = 0.0, val_exp_err = 0.0, val_gaze_err = 0.0;

    CoeffRegressor() = default;
    CoeffRegressor(int resolution_, Rng& rng);
    nn::ParamList params() const;
    // batch of images as [N,3,H,W] -> normalized predictions [N,11]
    ad::Var forward(const ad::Var& images) const;
};

struct CoeffEstimate {
    std::vector<double> rho;        // 6
    std::vector<double> beta_head;  // 3 active expression dims
    std::vector<double> gaze;       // 2
};

CoeffRegressor train_coeff_regressor(const DatasetManifest& mf, const RegressorConfig& cfg);
CoeffEstimate estimate_coefficients(const CoeffRegressor& reg, const Image& img);

// Per-group Euclidean distances between an estimate and ground truth.
struct CoeffError {
    double pose = 0.0, exp = 0.0, gaze = 0.0;
    double total() const { return pose + exp + gaze; }
};
CoeffError estimate_error(const CoeffEstimate& est, const motion::MotionCoeffs& truth);

void save_regressor(const CoeffRegressor& reg, const std::string& path);
CoeffRegressor load_regressor(const std::string& path);

}  // namespace faceanim::world
