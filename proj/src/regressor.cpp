#include "faceanim/regressor.hpp"

#include <cmath>

#include "faceanim/container.hpp"
#include "faceanim/optim.hpp"

namespace faceanim::world {

using motion::CoeffRanges;

Image PixelCache::get(int i) const {
    return Image::from_bytes(frames[static_cast<size_t>(i)], resolution, resolution);
}

PixelCache cache_frames(const DatasetManifest& mf) {
    PixelCache pc;
    pc.resolution = mf.resolution;
    for (size_t ci = 0; ci < mf.clips.size(); ++ci) {
        const auto& clip = mf.clips[ci];
        for (size_t fi = 0; fi < clip.frames.size(); ++fi) {
            Image img = load_png(mf.frame_path(clip.frames[fi]));
            require(img.height == mf.resolution && img.width == mf.resolution,
                    "cache_frames: frame resolution mismatch");
            pc.frames.push_back(img.quantize());
            pc.location.emplace_back(static_cast<int>(ci), static_cast<int>(fi));
        }
    }
    return pc;
}

namespace {

constexpr int kOutDim = 11;  // rho(6) + beta[0..2] + gaze(2)

std::vector<double> normalized_target(const motion::MotionCoeffs& c, const CoeffRanges& r) {
    std::vector<double> t(kOutDim);
    for (int i = 0; i < 6; ++i) t[i] = c.rho[i] / r.rho_lim[i];
    for (int i = 0; i < 3; ++i) t[6 + i] = c.beta[i] / r.beta_lim;
    for (int i = 0; i < 2; ++i) t[9 + i] = c.gaze[i] / r.gaze_lim;
    return t;
}

CoeffEstimate denormalize(const double* y, const CoeffRanges& r) {
    CoeffEstimate e;
    e.rho.resize(6);
    e.beta_head.resize(3);
    e.gaze.resize(2);
    for (int i = 0; i < 6; ++i) e.rho[i] = y[i] * r.rho_lim[i];
    for (int i = 0; i < 3; ++i) e.beta_head[i] = y[6 + i] * r.beta_lim;
    for (int i = 0; i < 2; ++i) e.gaze[i] = y[9 + i] * r.gaze_lim;
    return e;
}

}  // namespace

CoeffRegressor::CoeffRegressor(int resolution_, Rng& rng) : resolution(resolution_) {
    c1 = nn::Conv2d(3, 16, 3, 2, 1, rng);
    c2 = nn::Conv2d(16, 32, 3, 2, 1, rng);
    c3 = nn::Conv2d(32, 64, 3, 2, 1, rng);
    f1 = nn::Linear(64, 64, rng);
    f2 = nn::Linear(64, kOutDim, rng);
}

nn::ParamList CoeffRegressor::params() const {
    nn::ParamList p;
    c1.collect("reg.c1", p);
    c2.collect("reg.c2", p);
    c3.collect("reg.c3", p);
    f1.collect("reg.f1", p);
    f2.collect("reg.f2", p);
    return p;
}

ad::Var CoeffRegressor::forward(const ad::Var& images) const {
    const int N = images->value.shape[0];
    auto h = ad::silu(c1.forward(images));
    h = ad::silu(c2.forward(h));
    h = ad::silu(c3.forward(h));  // [N,64,res/8,res/8]
    const int hw = h->value.shape[2] * h->value.shape[3];
    // global average pool
    auto flat = ad::reshape(h, {N, 64, hw});
    auto pooled = ad::scale(ad::reshape(ad::bmm(flat, ad::constant(Tensor::full({N, hw, 1}, 1.0))),
                                        {N, 64}),
                            1.0 / hw);
    return f2.forward(ad::silu(f1.forward(pooled)));
}

CoeffRegressor train_coeff_regressor(const DatasetManifest& mf, const RegressorConfig& cfg) {
    mf.validate();
    const PixelCache cache = cache_frames(mf);
    const int n = static_cast<int>(cache.frames.size());
    require(n >= 4, "train_coeff_regressor: dataset too small");
    const CoeffRanges ranges;

    // deterministic shuffled split
    Rng rng(cfg.seed);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(i + 1))]);
    const int n_val = std::max(1, static_cast<int>(n * cfg.val_fraction));
    const int n_train = n - n_val;

    CoeffRegressor reg(mf.resolution, rng);
    nn::ParamList params = reg.params();
    Adam opt;
    opt.lr = cfg.lr;
    opt.init(params);

    auto coeffs_of = [&](int gi) -> const motion::MotionCoeffs& {
        const auto [ci, fi] = cache.location[static_cast<size_t>(gi)];
        return mf.clips[static_cast<size_t>(ci)].frames[static_cast<size_t>(fi)].coeffs;
    };

    for (int step = 0; step < cfg.steps; ++step) {
        Tensor batch({cfg.batch, 3, mf.resolution, mf.resolution});
        Tensor target({cfg.batch, kOutDim});
        for (int b = 0; b < cfg.batch; ++b) {
            const int gi = order[static_cast<size_t>(rng.uniform_int(n_train))];
            const Tensor img = cache.get(gi).to_tensor();
            std::copy(img.data.begin(), img.data.end(),
                      batch.data.begin() + static_cast<int64_t>(b) * img.numel());
            const auto t = normalized_target(coeffs_of(gi), ranges);
            std::copy(t.begin(), t.end(), target.data.begin() + static_cast<int64_t>(b) * kOutDim);
        }
        auto loss = ad::mse(reg.forward(ad::constant(std::move(batch))), ad::constant(std::move(target)));
        if (!std::isfinite(loss->value[0]))
            throw std::runtime_error("train_coeff_regressor: loss diverged at step " +
                                     std::to_string(step));
        opt.zero_grad(params);
        ad::backward(loss);
        opt.step(params);
    }

    // validation: mean per-group Euclidean error in coefficient units
    double pose = 0.0, expd = 0.0, gaze = 0.0;
    {
        ad::NoGradGuard ng;
        for (int i = 0; i < n_val; ++i) {
            const int gi = order[static_cast<size_t>(n_train + i)];
            const CoeffEstimate est = estimate_coefficients(reg, cache.get(gi));
            const CoeffError err = estimate_error(est, coeffs_of(gi));
            pose += err.pose;
            expd += err.exp;
            gaze += err.gaze;
        }
    }
    reg.val_pose_err = pose / n_val;
    reg.val_exp_err = expd / n_val;
    reg.val_gaze_err = gaze / n_val;
    return reg;
}

CoeffEstimate estimate_coefficients(const CoeffRegressor& reg, const Image& img) {
    require(img.height == reg.resolution && img.width == reg.resolution,
            "estimate_coefficients: image resolution mismatch");
    ad::NoGradGuard ng;
    Tensor t = img.to_tensor();
    Tensor batch({1, 3, reg.resolution, reg.resolution}, std::move(t.data));
    auto y = reg.forward(ad::constant(std::move(batch)));
    return denormalize(y->value.ptr(), CoeffRanges());
}

CoeffError estimate_error(const CoeffEstimate& est, const motion::MotionCoeffs& truth) {
    CoeffError e;
    double acc = 0.0;
    for (int i = 0; i < 6; ++i) acc += (est.rho[i] - truth.rho[i]) * (est.rho[i] - truth.rho[i]);
    e.pose = std::sqrt(acc);
    acc = 0.0;
    for (int i = 0; i < 3; ++i)
        acc += (est.beta_head[i] - truth.beta[i]) * (est.beta_head[i] - truth.beta[i]);
    e.exp = std::sqrt(acc);
    acc = 0.0;
    for (int i = 0; i < 2; ++i) acc += (est.gaze[i] - truth.gaze[i]) * (est.gaze[i] - truth.gaze[i]);
    e.gaze = std::sqrt(acc);
    return e;
}

void save_regressor(const CoeffRegressor& reg, const std::string& path) {
    TensorFile tf;
    tf.meta["kind"] = "coeff_regressor";
    tf.meta["resolution"] = std::to_string(reg.resolution);
    tf.meta["val_pose_err"] = std::to_string(reg.val_pose_err);
    tf.meta["val_exp_err"] = std::to_string(reg.val_exp_err);
    tf.meta["val_gaze_err"] = std::to_string(reg.val_gaze_err);
    for (const auto& [name, p] : reg.params().items) tf.arrays.emplace_back(name, p->value);
    write_tensor_file(tf, path);
}

CoeffRegressor load_regressor(const std::string& path) {
    TensorFile tf = read_tensor_file(path);
    if (tf.meta.count("kind") && tf.meta.at("kind") != "coeff_regressor")
        throw std::runtime_error("load_regressor: file is not a regressor: " + path);
    Rng rng(0);
    CoeffRegressor reg(std::stoi(tf.meta.at("resolution")), rng);
    reg.val_pose_err = std::stod(tf.meta.at("val_pose_err"));
    reg.val_exp_err = std::stod(tf.meta.at("val_exp_err"));
    reg.val_gaze_err = std::stod(tf.meta.at("val_gaze_err"));
    for (auto& [name, p] : reg.params().items) {
        const Tensor& t = tf.array(name);
        require(t.shape == p->value.shape, "load_regressor: shape mismatch for " + name);
        p->value = t;
    }
    return reg;
}

}  // namespace faceanim::world
