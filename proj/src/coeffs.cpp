#include "faceanim/coeffs.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace faceanim::motion {

using ordered_json = nlohmann::ordered_json;

MotionCoeffs MotionCoeffs::zero() {
    MotionCoeffs c;
    c.alpha.assign(kAlphaDim, 0.0);
    c.beta.assign(kBetaDim, 0.0);
    c.delta.assign(kDeltaDim, 0.0);
    c.gamma.assign(kGammaDim, 0.0);
    c.rho.assign(kRhoDim, 0.0);
    c.gaze.assign(kGazeDim, 0.0);
    return c;
}

namespace {

void check_group(const std::vector<double>& v, int expect, const char* name) {
    if (static_cast<int>(v.size()) != expect)
        throw std::invalid_argument(std::string("MotionCoeffs: group '") + name + "' has length " +
                                    std::to_string(v.size()) + ", expected " + std::to_string(expect));
    for (double x : v)
        if (!std::isfinite(x))
            throw std::invalid_argument(std::string("MotionCoeffs: non-finite entry in group '") +
                                        name + "'");
}

double clip(double v, double lim) { return v < -lim ? -lim : (v > lim ? lim : v); }

}  // namespace

void MotionCoeffs::validate() const {
    check_group(alpha, kAlphaDim, "alpha");
    check_group(beta, kBetaDim, "beta");
    check_group(delta, kDeltaDim, "delta");
    check_group(gamma, kGammaDim, "gamma");
    check_group(rho, kRhoDim, "rho");
    check_group(gaze, kGazeDim, "gaze");
}

FaceDescriptor assemble_descriptor(const MotionCoeffs& c) {
    c.validate();
    FaceDescriptor d;
    d.p.reserve(kDescriptorDim);
    d.p.insert(d.p.end(), c.alpha.begin(), c.alpha.end());
    d.p.insert(d.p.end(), c.beta.begin(), c.beta.end());
    d.p.insert(d.p.end(), c.delta.begin(), c.delta.end());
    d.p.insert(d.p.end(), c.gamma.begin(), c.gamma.end());
    d.p.insert(d.p.end(), c.rho.begin(), c.rho.end());
    return d;
}

MotionCoeffs split_descriptor(const FaceDescriptor& d) {
    require(static_cast<int>(d.p.size()) == kDescriptorDim, "split_descriptor: expected 257 entries");
    MotionCoeffs c = MotionCoeffs::zero();
    auto it = d.p.begin();
    c.alpha.assign(it, it + kAlphaDim);
    it += kAlphaDim;
    c.beta.assign(it, it + kBetaDim);
    it += kBetaDim;
    c.delta.assign(it, it + kDeltaDim);
    it += kDeltaDim;
    c.gamma.assign(it, it + kGammaDim);
    it += kGammaDim;
    c.rho.assign(it, it + kRhoDim);
    return c;
}

MotionCoeffs clip_to_ranges(const MotionCoeffs& c, const CoeffRanges& r) {
    MotionCoeffs o = c;
    for (double& v : o.alpha) v = clip(v, r.alpha_lim);
    for (double& v : o.beta) v = clip(v, r.beta_lim);
    for (double& v : o.delta) v = clip(v, r.delta_lim);
    for (double& v : o.gamma) v = clip(v, r.gamma_lim);
    for (int i = 0; i < kRhoDim; ++i) o.rho[i] = clip(o.rho[i], r.rho_lim[i]);
    for (double& v : o.gaze) v = clip(v, r.gaze_lim);
    return o;
}

namespace {

struct EditTarget {
    int group;  // 0=rho, 1=beta, 2=gaze
    int index;
};

const std::map<std::string, EditTarget>& edit_map() {
    static const std::map<std::string, EditTarget> m = {
        {"shear_yaw", {0, kShearYaw}}, {"shear_pitch", {0, kShearPitch}}, {"roll", {0, kRoll}},
        {"tx", {0, kTx}},              {"ty", {0, kTy}},                  {"log_scale", {0, kLogScale}},
        {"mouth", {1, 0}},             {"eye_openness", {1, 1}},          {"brow", {1, 2}},
        {"gaze_x", {2, 0}},            {"gaze_y", {2, 1}},
    };
    return m;
}

}  // namespace

const std::vector<std::string>& edit_vocabulary() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> names;
        for (const auto& [k, _] : edit_map()) names.push_back(k);
        return names;
    }();
    return v;
}

MotionCoeffs edit_coefficients(const MotionCoeffs& c, const std::map<std::string, double>& edits,
                               const CoeffRanges& ranges) {
    c.validate();
    MotionCoeffs o = c;
    for (const auto& [name, delta] : edits) {
        auto it = edit_map().find(name);
        if (it == edit_map().end())
            throw std::invalid_argument("edit_coefficients: unknown edit '" + name + "'");
        const EditTarget& t = it->second;
        double* v = nullptr;
        double lim = 0.0;
        switch (t.group) {
            case 0: v = &o.rho[t.index]; lim = ranges.rho_lim[t.index]; break;
            case 1: v = &o.beta[t.index]; lim = ranges.beta_lim; break;
            default: v = &o.gaze[t.index]; lim = ranges.gaze_lim; break;
        }
        *v = clip(*v + delta, lim);
    }
    return o;
}

MotionCoeffs interpolate(const MotionCoeffs& c0, const MotionCoeffs& c1, double t) {
    require(t >= 0.0 && t <= 1.0, "interpolate: t must be in [0,1]");
    c0.validate();
    c1.validate();
    if (t == 0.0) return c0;
    if (t == 1.0) return c1;
    auto lerp = [t](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> o(a.size());
        for (size_t i = 0; i < a.size(); ++i) o[i] = (1.0 - t) * a[i] + t * b[i];
        return o;
    };
    MotionCoeffs o;
    o.alpha = lerp(c0.alpha, c1.alpha);
    o.beta = lerp(c0.beta, c1.beta);
    o.delta = lerp(c0.delta, c1.delta);
    o.gamma = lerp(c0.gamma, c1.gamma);
    o.rho = lerp(c0.rho, c1.rho);
    o.gaze = lerp(c0.gaze, c1.gaze);
    return o;
}

ProjectionWeights::ProjectionWeights(int d_model, Rng& rng) {
    w_rho = ad::leaf(nn::xavier_uniform({kRhoDim, d_model}, kRhoDim, d_model, rng));
    b_rho = ad::leaf(Tensor::zeros({d_model}));
    w_beta = ad::leaf(nn::xavier_uniform({kBetaDim, d_model}, kBetaDim, d_model, rng));
    b_beta = ad::leaf(Tensor::zeros({d_model}));
    w_gaze = ad::leaf(nn::xavier_uniform({kGazeDim, d_model}, kGazeDim, d_model, rng));
    b_gaze = ad::leaf(Tensor::zeros({d_model}));
}

void ProjectionWeights::collect(const std::string& prefix, nn::ParamList& out) const {
    out.add(prefix + ".w_rho", w_rho);
    out.add(prefix + ".b_rho", b_rho);
    out.add(prefix + ".w_beta", w_beta);
    out.add(prefix + ".b_beta", b_beta);
    out.add(prefix + ".w_gaze", w_gaze);
    out.add(prefix + ".b_gaze", b_gaze);
}

MotionTokenSet motion_tokens(const std::vector<double>& rho, const std::vector<double>& beta,
                             const std::vector<double>& gaze, const ProjectionWeights& w) {
    require(static_cast<int>(rho.size()) == w.w_rho->value.shape[0], "motion_tokens: rho length");
    require(static_cast<int>(beta.size()) == w.w_beta->value.shape[0], "motion_tokens: beta length");
    require(static_cast<int>(gaze.size()) == w.w_gaze->value.shape[0], "motion_tokens: gaze length");
    auto vrho = ad::constant(Tensor({1, static_cast<int>(rho.size())}, rho));
    auto vbeta = ad::constant(Tensor({1, static_cast<int>(beta.size())}, beta));
    auto vgaze = ad::constant(Tensor({1, static_cast<int>(gaze.size())}, gaze));
    auto t0 = ad::add_bias(ad::linear_nobias(vrho, w.w_rho), w.b_rho);
    auto t1 = ad::add_bias(ad::linear_nobias(vbeta, w.w_beta), w.b_beta);
    auto t2 = ad::add_bias(ad::linear_nobias(vgaze, w.w_gaze), w.b_gaze);
    MotionTokenSet out;
    out.tokens = ad::concat({t0, t1, t2}, 0);  // [3, d]
    return out;
}

MotionTokenSet motion_tokens(const MotionCoeffs& c, const ProjectionWeights& w) {
    c.validate();
    return motion_tokens(c.rho, c.beta, c.gaze, w);
}

namespace {

ordered_json group_to_json(const std::vector<double>& v) { return ordered_json(v); }

std::vector<double> group_from_json(const ordered_json& j, int expect, const char* name,
                                    size_t frame) {
    if (!j.is_array() || static_cast<int>(j.size()) != expect)
        throw std::runtime_error("coefficient sequence: frame " + std::to_string(frame) +
                                 " group '" + name + "' must be an array of length " +
                                 std::to_string(expect));
    std::vector<double> v = j.get<std::vector<double>>();
    for (double x : v)
        if (!std::isfinite(x))
            throw std::runtime_error("coefficient sequence: frame " + std::to_string(frame) +
                                     " group '" + name + "' contains a non-finite value");
    return v;
}

}  // namespace

ordered_json coeffs_to_json(const MotionCoeffs& c) {
    ordered_json j;
    j["alpha"] = group_to_json(c.alpha);
    j["beta"] = group_to_json(c.beta);
    j["delta"] = group_to_json(c.delta);
    j["gamma"] = group_to_json(c.gamma);
    j["rho"] = group_to_json(c.rho);
    j["gaze"] = group_to_json(c.gaze);
    return j;
}

MotionCoeffs coeffs_from_json(const ordered_json& j, size_t frame) {
    MotionCoeffs c;
    c.alpha = group_from_json(j.value("alpha", ordered_json()), kAlphaDim, "alpha", frame);
    c.beta = group_from_json(j.value("beta", ordered_json()), kBetaDim, "beta", frame);
    c.delta = group_from_json(j.value("delta", ordered_json()), kDeltaDim, "delta", frame);
    c.gamma = group_from_json(j.value("gamma", ordered_json()), kGammaDim, "gamma", frame);
    c.rho = group_from_json(j.value("rho", ordered_json()), kRhoDim, "rho", frame);
    c.gaze = group_from_json(j.value("gaze", ordered_json()), kGazeDim, "gaze", frame);
    return c;
}

void save_coefficient_sequence(const std::vector<MotionCoeffs>& seq, const std::string& path) {
    ordered_json j;
    j["version"] = 1;
    ordered_json frames = ordered_json::array();
    for (const auto& c : seq) {
        c.validate();
        frames.push_back(coeffs_to_json(c));
    }
    j["frames"] = std::move(frames);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_coefficient_sequence: cannot write " + path);
    os << j.dump(1) << "\n";
}

std::vector<MotionCoeffs> load_coefficient_sequence(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_coefficient_sequence: cannot open " + path);
    ordered_json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_coefficient_sequence: malformed JSON in " + path + ": " +
                                 e.what());
    }
    if (!j.contains("frames") || !j["frames"].is_array())
        throw std::runtime_error("load_coefficient_sequence: missing 'frames' array in " + path);
    std::vector<MotionCoeffs> seq;
    size_t idx = 0;
    for (const auto& f : j["frames"]) seq.push_back(coeffs_from_json(f, idx++));
    return seq;
}

}  // namespace faceanim::motion
