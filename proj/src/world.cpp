#include "faceanim/world.hpp"

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "coeffs_json.hpp"

namespace faceanim::world {

namespace fs = std::filesystem;
using motion::MotionCoeffs;
using ordered_json = nlohmann::ordered_json;

namespace {

// splitmix64 -> [-1, 1]; the fixed mixing basis for identity derivation.
double hash_unit(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    x = x ^ (x >> 31);
    return static_cast<double>(x >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

// Fixed pseudo-random projection of a coefficient vector; `salt` selects the
// derived feature.
double mix(const std::vector<double>& v, uint64_t salt) {
    double acc = 0.0;
    for (size_t i = 0; i < v.size(); ++i) acc += v[i] * hash_unit(salt * 1315423911ULL + i);
    return std::tanh(acc / std::sqrt(static_cast<double>(v.size())) * 2.0);
}

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Geometry in face units (fractions of the image side), face centered at 0.
struct FaceGeometry {
    double head_rx, head_ry;
    double eye_dx, eye_y, eye_r;
    double mouth_y, mouth_w, mouth_h;
    double brow_gap, brow_h, brow_w;
    double hair_line;  // normalized v/head_ry above which hair is drawn
};

FaceGeometry canonical_geometry() {
    FaceGeometry g;
    g.head_rx = 0.16;
    g.head_ry = 0.21;
    g.eye_dx = 0.068;
    g.eye_y = -0.055;
    g.eye_r = 0.030;
    g.mouth_y = 0.105;
    g.mouth_w = 0.065;
    g.mouth_h = 0.014;
    g.brow_gap = 0.040;
    g.brow_h = 0.009;
    g.brow_w = 0.040;
    g.hair_line = -0.45;
    return g;
}

FaceGeometry identity_geometry(const AvatarIdentity& id) {
    const auto& s = id.shape_params;
    FaceGeometry g;
    g.head_rx = s[0];
    g.head_ry = s[1];
    g.eye_dx = s[2];
    g.eye_y = s[3];
    g.eye_r = s[4];
    g.mouth_y = s[5];
    g.mouth_w = s[6];
    g.mouth_h = s[7];
    g.brow_gap = s[8];
    g.brow_h = s[9];
    g.brow_w = s[10];
    g.hair_line = s[11];
    return g;
}

struct Palette {
    std::array<double, 3> skin, hair, iris, mouth;
};

Palette identity_palette(const AvatarIdentity& id) {
    const auto& t = id.texture_params;
    Palette p;
    for (int c = 0; c < 3; ++c) {
        p.skin[c] = t[c];
        p.hair[c] = t[3 + c];
        p.iris[c] = t[6 + c];
        p.mouth[c] = t[9 + c];
    }
    return p;
}

struct PoseTransform {
    // maps image coords (centered, translated) to face-local coords
    double inv[4];
    double tx, ty;
};

PoseTransform pose_inverse(const std::vector<double>& rho) {
    const double shy = rho[motion::kShearYaw];
    const double shp = rho[motion::kShearPitch];
    const double th = rho[motion::kRoll];
    const double s = std::exp(rho[motion::kLogScale]);
    // forward A = s * R(th) * Shear, Shear = [[1, shy],[shp, 1]]
    const double c = std::cos(th), sn = std::sin(th);
    const double a00 = s * (c * 1.0 - sn * shp), a01 = s * (c * shy - sn * 1.0);
    const double a10 = s * (sn * 1.0 + c * shp), a11 = s * (sn * shy + c * 1.0);
    const double det = a00 * a11 - a01 * a10;
    PoseTransform t;
    t.inv[0] = a11 / det;
    t.inv[1] = -a01 / det;
    t.inv[2] = -a10 / det;
    t.inv[3] = a00 / det;
    t.tx = rho[motion::kTx];
    t.ty = rho[motion::kTy];
    return t;
}

struct MotionShape {
    double mouth_curve;  // beta[0]
    double eye_open;     // from beta[1]
    double brow_off;     // from beta[2]
    double gaze_x, gaze_y;
};

MotionShape motion_shape(const MotionCoeffs& coeffs) {
    MotionShape m;
    m.mouth_curve = coeffs.beta[0];
    m.eye_open = clampd(0.62 + 0.38 * coeffs.beta[1], 0.08, 1.0);
    m.brow_off = 0.02 * coeffs.beta[2];
    m.gaze_x = coeffs.gaze[0];
    m.gaze_y = coeffs.gaze[1];
    return m;
}

// Region classification at one face-local point. Returns a color.
std::array<double, 3> shade_avatar(double u, double v, const FaceGeometry& g, const Palette& pal,
                                   const MotionShape& m, const std::array<double, 3>& bg,
                                   double cheek_tint) {
    const double eh = (u / g.head_rx) * (u / g.head_rx) + (v / g.head_ry) * (v / g.head_ry);
    if (eh > 1.0) return bg;

    std::array<double, 3> col = pal.skin;

    if (v / g.head_ry < g.hair_line) col = pal.hair;

    // cheeks: weak tint from the inactive beta dims
    for (int sx = -1; sx <= 1; sx += 2) {
        const double du = u - sx * 0.55 * g.head_rx, dv = v - 0.35 * g.head_ry;
        if (du * du + dv * dv < 0.20 * g.head_rx * 0.20 * g.head_rx)
            col = {clampd(col[0] + cheek_tint, 0.0, 1.0), clampd(col[1] - 0.4 * cheek_tint, 0.0, 1.0),
                   clampd(col[2] - 0.4 * cheek_tint, 0.0, 1.0)};
    }

    // brows
    const double brow_y = g.eye_y - g.brow_gap + m.brow_off;
    for (int sx = -1; sx <= 1; sx += 2) {
        if (std::fabs(v - brow_y) < g.brow_h && std::fabs(u - sx * g.eye_dx) < g.brow_w * 0.5)
            col = pal.hair;
    }

    // eyes: white, iris, pupil
    const double er_v = g.eye_r * m.eye_open;
    for (int sx = -1; sx <= 1; sx += 2) {
        const double du = u - sx * g.eye_dx, dv = v - g.eye_y;
        if ((du / g.eye_r) * (du / g.eye_r) + (dv / er_v) * (dv / er_v) <= 1.0) {
            col = {0.96, 0.96, 0.96};
            const double px = du - m.gaze_x * 0.35 * g.eye_r;
            const double py = dv - m.gaze_y * 0.35 * er_v;
            const double ir = 0.55 * g.eye_r;
            if (px * px + py * py <= ir * ir) col = pal.iris;
            const double pr = 0.26 * g.eye_r;
            if (px * px + py * py <= pr * pr) col = {0.04, 0.04, 0.04};
        }
    }

    // mouth: curved band
    if (std::fabs(u) < g.mouth_w) {
        const double un = u / g.mouth_w;
        const double curve = m.mouth_curve * 0.030 * (un * un - 0.5);
        if (std::fabs(v - (g.mouth_y + curve)) < g.mouth_h) col = pal.mouth;
    }
    return col;
}

// Structural strokes for the identity-free render; grayscale levels by part.
double shade_motion(double u, double v, const FaceGeometry& g, const MotionShape& m) {
    const double eh = (u / g.head_rx) * (u / g.head_rx) + (v / g.head_ry) * (v / g.head_ry);
    if (eh >= 0.88 && eh <= 1.0) return 1.0;  // head outline ring
    if (eh > 1.0) return 0.0;

    const double brow_y = g.eye_y - g.brow_gap + m.brow_off;
    for (int sx = -1; sx <= 1; sx += 2)
        if (std::fabs(v - brow_y) < g.brow_h && std::fabs(u - sx * g.eye_dx) < g.brow_w * 0.5)
            return 0.65;

    const double er_v = g.eye_r * m.eye_open;
    for (int sx = -1; sx <= 1; sx += 2) {
        const double du = u - sx * g.eye_dx, dv = v - g.eye_y;
        const double e = (du / g.eye_r) * (du / g.eye_r) + (dv / er_v) * (dv / er_v);
        if (e <= 1.0) {
            const double px = du - m.gaze_x * 0.35 * g.eye_r;
            const double py = dv - m.gaze_y * 0.35 * er_v;
            const double pr = 0.30 * g.eye_r;
            if (px * px + py * py <= pr * pr) return 1.0;  // pupil dot
            if (e >= 0.62) return 0.8;                     // eye outline
            return 0.25;
        }
    }

    if (std::fabs(u) < g.mouth_w) {
        const double un = u / g.mouth_w;
        const double curve = m.mouth_curve * 0.030 * (un * un - 0.5);
        if (std::fabs(v - (g.mouth_y + curve)) < g.mouth_h) return 0.9;
    }
    return 0.0;
}

void check_render_inputs(const MotionCoeffs& coeffs, int resolution) {
    coeffs.validate();
    bool ok = false;
    for (int r : allowed_resolutions()) ok |= (r == resolution);
    require(ok, "render: resolution must be one of {32, 64, 128}, got " + std::to_string(resolution));
}

}  // namespace

AvatarIdentity make_identity(uint64_t seed, const std::vector<double>& alpha,
                             const std::vector<double>& delta) {
    require(static_cast<int>(alpha.size()) == motion::kAlphaDim, "make_identity: alpha length");
    require(static_cast<int>(delta.size()) == motion::kDeltaDim, "make_identity: delta length");
    AvatarIdentity id;
    id.seed = seed;
    const double j1 = 1.0 + 0.03 * hash_unit(seed * 718064159ULL + 1);
    const double j2 = 1.0 + 0.03 * hash_unit(seed * 718064159ULL + 2);

    FaceGeometry base = canonical_geometry();
    const double rx = base.head_rx * (1.0 + 0.15 * mix(alpha, 11)) * j1;
    const double ry = base.head_ry * (1.0 + 0.15 * mix(alpha, 12)) * j2;
    id.shape_params = {
        rx,
        ry,
        base.eye_dx * (1.0 + 0.18 * mix(alpha, 13)),
        base.eye_y * (1.0 + 0.20 * mix(alpha, 14)),
        base.eye_r * (1.0 + 0.22 * mix(alpha, 15)),
        base.mouth_y * (1.0 + 0.15 * mix(alpha, 16)),
        base.mouth_w * (1.0 + 0.25 * mix(alpha, 17)),
        base.mouth_h * (1.0 + 0.25 * mix(alpha, 18)),
        base.brow_gap * (1.0 + 0.20 * mix(alpha, 19)),
        base.brow_h * (1.0 + 0.25 * mix(alpha, 20)),
        base.brow_w * (1.0 + 0.20 * mix(alpha, 21)),
        clampd(base.hair_line + 0.18 * mix(alpha, 22), -0.75, -0.15),
    };

    auto color = [&](uint64_t salt, double base_r, double base_g, double base_b, double spread,
                     double lo, double hi) {
        return std::array<double, 3>{clampd(base_r + spread * mix(delta, salt + 0), lo, hi),
                                     clampd(base_g + spread * mix(delta, salt + 1), lo, hi),
                                     clampd(base_b + spread * mix(delta, salt + 2), lo, hi)};
    };
    const auto skin = color(31, 0.72, 0.58, 0.48, 0.22, 0.45, 0.95);
    const auto hair = color(41, 0.45, 0.38, 0.32, 0.42, 0.04, 0.95);
    const auto iris = color(51, 0.30, 0.32, 0.38, 0.28, 0.05, 0.70);
    const auto mouth = color(61, 0.62, 0.28, 0.28, 0.15, 0.15, 0.85);
    id.texture_params.assign({skin[0], skin[1], skin[2], hair[0], hair[1], hair[2], iris[0], iris[1],
                              iris[2], mouth[0], mouth[1], mouth[2]});
    return id;
}

SceneParams scene_from_gamma(const std::vector<double>& gamma,
                             const std::array<double, 3>& background) {
    require(static_cast<int>(gamma.size()) == motion::kGammaDim, "scene_from_gamma: gamma length");
    SceneParams s;
    s.illumination = {gamma[0], gamma[1], gamma[2]};
    s.background_color = background;
    return s;
}

Image render_avatar(const AvatarIdentity& identity, const MotionCoeffs& coeffs,
                    const SceneParams& scene, int resolution) {
    check_render_inputs(coeffs, resolution);
    require(identity.shape_params.size() == 12 && identity.texture_params.size() == 12,
            "render_avatar: identity not derived via make_identity");

    const FaceGeometry geo = identity_geometry(identity);
    const Palette pal = identity_palette(identity);
    const MotionShape m = motion_shape(coeffs);
    const PoseTransform pt = pose_inverse(coeffs.rho);
    const auto& bg = scene.background_color;

    // weak deterministic contribution of the inactive beta dims
    std::vector<double> beta_rest(coeffs.beta.begin() + 3, coeffs.beta.end());
    const double cheek = 0.06 * mix(beta_rest, 71);

    const double g0 = scene.illumination.size() > 0 ? scene.illumination[0] : 0.0;
    const double g1 = scene.illumination.size() > 1 ? scene.illumination[1] : 0.0;
    const double g2 = scene.illumination.size() > 2 ? scene.illumination[2] : 0.0;

    Image img(resolution, resolution);
    const double inv_res = 1.0 / resolution;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < resolution; ++y) {
        for (int x = 0; x < resolution; ++x) {
            double acc[3] = {0, 0, 0};
            // 2x2 supersampling
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx) {
                    const double px = (x + 0.25 + 0.5 * sx) * inv_res - 0.5 - pt.tx;
                    const double py = (y + 0.25 + 0.5 * sy) * inv_res - 0.5 - pt.ty;
                    const double u = pt.inv[0] * px + pt.inv[1] * py;
                    const double v = pt.inv[2] * px + pt.inv[3] * py;
                    const auto c = shade_avatar(u, v, geo, pal, m, bg, cheek);
                    for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
                }
            const double ux = (x + 0.5) * inv_res - 0.5;
            const double uy = (y + 0.5) * inv_res - 0.5;
            const double light = 1.0 + 0.4 * g0 + 0.5 * g1 * ux + 0.5 * g2 * uy;
            for (int ch = 0; ch < 3; ++ch)
                img.at(y, x, ch) = clampd(0.25 * acc[ch] * light, 0.0, 1.0);
        }
    }
    return img;
}

Image render_motion_frame(const MotionCoeffs& coeffs, int resolution) {
    check_render_inputs(coeffs, resolution);
    const FaceGeometry geo = canonical_geometry();
    const MotionShape m = motion_shape(coeffs);
    const PoseTransform pt = pose_inverse(coeffs.rho);

    Image img(resolution, resolution);
    const double inv_res = 1.0 / resolution;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < resolution; ++y) {
        for (int x = 0; x < resolution; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx) {
                    const double px = (x + 0.25 + 0.5 * sx) * inv_res - 0.5 - pt.tx;
                    const double py = (y + 0.25 + 0.5 * sy) * inv_res - 0.5 - pt.ty;
                    const double u = pt.inv[0] * px + pt.inv[1] * py;
                    const double v = pt.inv[2] * px + pt.inv[3] * py;
                    acc += shade_motion(u, v, geo, m);
                }
            const double g = clampd(0.25 * acc, 0.0, 1.0);
            img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = g;
        }
    }
    return img;
}

double trajectory_delta_cap(double smoothness, double step_scale) {
    return (1.0 - smoothness) * step_scale;
}

std::vector<MotionCoeffs> sample_trajectory_from(const MotionCoeffs& start, int length,
                                                 double smoothness, Rng& rng,
                                                 const motion::CoeffRanges& ranges,
                                                 bool freeze_identity) {
    require(length >= 1, "sample_trajectory: length must be positive");
    require(smoothness > 0.0 && smoothness <= 1.0, "sample_trajectory: smoothness in (0,1]");
    std::vector<MotionCoeffs> out;
    out.reserve(static_cast<size_t>(length));
    MotionCoeffs cur = motion::clip_to_ranges(start, ranges);
    out.push_back(cur);
    const double f = 1.0 - smoothness;
    for (int t = 1; t < length; ++t) {
        auto step_group = [&](std::vector<double>& v, double step, double lim) {
            for (double& x : v) {
                x += f * rng.uniform(-step, step);
                x = clampd(x, -lim, lim);
            }
        };
        if (!freeze_identity) {
            step_group(cur.alpha, ranges.alpha_step, ranges.alpha_lim);
            step_group(cur.delta, ranges.delta_step, ranges.delta_lim);
        } else {
            // keep the generator stream layout independent of the flag
            for (size_t i = 0; i < cur.alpha.size() + cur.delta.size(); ++i) rng.uniform();
        }
        step_group(cur.beta, ranges.beta_step, ranges.beta_lim);
        step_group(cur.gamma, ranges.gamma_step, ranges.gamma_lim);
        for (int i = 0; i < motion::kRhoDim; ++i) {
            cur.rho[i] += f * rng.uniform(-ranges.rho_step[i], ranges.rho_step[i]);
            cur.rho[i] = clampd(cur.rho[i], -ranges.rho_lim[i], ranges.rho_lim[i]);
        }
        step_group(cur.gaze, ranges.gaze_step, ranges.gaze_lim);
        out.push_back(cur);
    }
    return out;
}

std::vector<MotionCoeffs> sample_motion_trajectory(int length, double smoothness, uint64_t rng_seed,
                                                   const motion::CoeffRanges& ranges) {
    Rng rng(rng_seed);
    MotionCoeffs start = MotionCoeffs::zero();
    auto init_group = [&](std::vector<double>& v, double lim, double frac) {
        for (double& x : v) x = rng.uniform(-lim * frac, lim * frac);
    };
    init_group(start.alpha, ranges.alpha_lim, 0.8);
    init_group(start.beta, ranges.beta_lim, 0.7);
    init_group(start.delta, ranges.delta_lim, 0.8);
    init_group(start.gamma, ranges.gamma_lim, 0.7);
    for (int i = 0; i < motion::kRhoDim; ++i) start.rho[i] = rng.uniform(-0.5, 0.5) * ranges.rho_lim[i];
    init_group(start.gaze, ranges.gaze_lim, 0.7);
    return sample_trajectory_from(start, length, smoothness, rng, ranges, false);
}

int64_t DatasetManifest::total_frames() const {
    int64_t n = 0;
    for (const auto& c : clips) n += static_cast<int64_t>(c.frames.size());
    return n;
}

std::string DatasetManifest::frame_path(const FrameRecord& f) const {
    return (fs::path(root) / f.image).string();
}

void DatasetManifest::validate() const {
    require(!identities.empty(), "manifest: no identities");
    for (const auto& c : clips) {
        require(c.identity_id >= 0 && c.identity_id < static_cast<int>(identities.size()),
                "manifest: clip references unknown identity");
        require(c.frames.size() >= 2, "manifest: clips must have at least 2 frames");
        for (const auto& f : c.frames) f.coeffs.validate();
    }
}

namespace {

ordered_json identity_to_json(const AvatarIdentity& id) {
    ordered_json j;
    j["seed"] = id.seed;
    j["shape_params"] = id.shape_params;
    j["texture_params"] = id.texture_params;
    return j;
}

AvatarIdentity identity_from_json(const ordered_json& j) {
    AvatarIdentity id;
    id.seed = j.at("seed").get<uint64_t>();
    id.shape_params = j.at("shape_params").get<std::vector<double>>();
    id.texture_params = j.at("texture_params").get<std::vector<double>>();
    return id;
}

}  // namespace

DatasetManifest generate_dataset(int n_identities, int clips_per_identity, int frames_per_clip,
                                 int resolution, const std::string& out_dir, uint64_t rng_seed) {
    require(n_identities >= 1 && clips_per_identity >= 1 && frames_per_clip >= 1,
            "generate_dataset: all counts must be >= 1");
    require(frames_per_clip >= 2, "generate_dataset: clips need at least 2 frames");
    {
        bool ok = false;
        for (int r : allowed_resolutions()) ok |= (r == resolution);
        require(ok, "generate_dataset: unsupported resolution");
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir))
        throw std::runtime_error("generate_dataset: cannot create output dir " + out_dir);
    {  // writability probe
        const auto probe = fs::path(out_dir) / ".write_probe";
        std::ofstream p(probe);
        if (!p) throw std::runtime_error("generate_dataset: output dir not writable: " + out_dir);
        p.close();
        fs::remove(probe);
    }

    Rng rng(rng_seed);
    DatasetManifest mf;
    mf.resolution = resolution;
    mf.rng_seed = rng_seed;
    mf.root = out_dir;

    const motion::CoeffRanges ranges;
    for (int i = 0; i < n_identities; ++i) {
        MotionCoeffs idc = MotionCoeffs::zero();
        for (double& v : idc.alpha) v = clampd(rng.normal(0.0, 0.45), -ranges.alpha_lim, ranges.alpha_lim);
        for (double& v : idc.delta) v = clampd(rng.normal(0.0, 0.45), -ranges.delta_lim, ranges.delta_lim);
        const uint64_t id_seed = rng.next_u64();
        mf.identities.push_back(make_identity(id_seed, idc.alpha, idc.delta));

        for (int cl = 0; cl < clips_per_identity; ++cl) {
            ClipRecord clip;
            clip.identity_id = i;
            clip.background = {rng.uniform(0.04, 0.22), rng.uniform(0.04, 0.22),
                               rng.uniform(0.06, 0.26)};

            MotionCoeffs start = MotionCoeffs::zero();
            start.alpha = idc.alpha;
            start.delta = idc.delta;
            for (double& v : start.beta) v = rng.uniform(-0.7, 0.7) * ranges.beta_lim;
            for (double& v : start.gamma) v = rng.uniform(-0.7, 0.7) * ranges.gamma_lim;
            for (int d = 0; d < motion::kRhoDim; ++d)
                start.rho[d] = rng.uniform(-0.6, 0.6) * ranges.rho_lim[d];
            for (double& v : start.gaze) v = rng.uniform(-0.7, 0.7) * ranges.gaze_lim;

            auto traj = sample_trajectory_from(start, frames_per_clip, 0.82, rng, ranges, true);

            char sub[64];
            std::snprintf(sub, sizeof(sub), "id%03d/c%02d", i, cl);
            fs::create_directories(fs::path(out_dir) / sub);

            for (int fr = 0; fr < frames_per_clip; ++fr) {
                char name[96];
                std::snprintf(name, sizeof(name), "%s/f%03d.png", sub, fr);
                FrameRecord rec;
                rec.image = name;
                rec.coeffs = traj[static_cast<size_t>(fr)];
                clip.frames.push_back(std::move(rec));
            }
            char cname[96];
            std::snprintf(cname, sizeof(cname), "%s/coeffs.json", sub);
            clip.coeff_file = cname;
            motion::save_coefficient_sequence(traj, (fs::path(out_dir) / cname).string());
            mf.clips.push_back(std::move(clip));
        }
    }

    // Render frames. Parallelism lives inside the renderer already; clips are
    // rendered in manifest order so the run is reproducible either way.
    for (const auto& clip : mf.clips) {
        const auto& ident = mf.identities[static_cast<size_t>(clip.identity_id)];
        for (const auto& rec : clip.frames) {
            const SceneParams scene = scene_from_gamma(rec.coeffs.gamma, clip.background);
            save_png(render_avatar(ident, rec.coeffs, scene, resolution), mf.frame_path(rec));
        }
    }

    // manifest
    ordered_json j;
    j["version"] = mf.version;
    j["resolution"] = mf.resolution;
    j["rng_seed"] = mf.rng_seed;
    j["coeff_order"] = {"alpha", "beta", "delta", "gamma", "rho", "gaze"};
    ordered_json ids = ordered_json::array();
    for (const auto& id : mf.identities) ids.push_back(identity_to_json(id));
    j["identities"] = std::move(ids);
    ordered_json clips = ordered_json::array();
    for (const auto& clip : mf.clips) {
        ordered_json cj;
        cj["identity"] = clip.identity_id;
        cj["background"] = clip.background;
        cj["coeff_file"] = clip.coeff_file;
        ordered_json frames = ordered_json::array();
        for (const auto& rec : clip.frames) {
            ordered_json fj;
            fj["image"] = rec.image;
            fj["coeffs"] = motion::coeffs_to_json(rec.coeffs);
            frames.push_back(std::move(fj));
        }
        cj["frames"] = std::move(frames);
        clips.push_back(std::move(cj));
    }
    j["clips"] = std::move(clips);
    {
        std::ofstream os(fs::path(out_dir) / "manifest.json");
        if (!os) throw std::runtime_error("generate_dataset: cannot write manifest");
        os << j.dump(1) << "\n";
    }

    // verification pass: frames on disk must match records exactly
    int64_t on_disk = 0;
    for (const auto& clip : mf.clips)
        for (const auto& rec : clip.frames) {
            if (!fs::exists(mf.frame_path(rec)))
                throw std::runtime_error("generate_dataset: missing frame " + rec.image);
            ++on_disk;
        }
    if (on_disk != mf.total_frames())
        throw std::runtime_error("generate_dataset: frame count mismatch after write");
    mf.validate();
    return mf;
}

DatasetManifest load_dataset(const std::string& dir) {
    const auto path = fs::path(dir) / "manifest.json";
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_dataset: cannot open " + path.string());
    ordered_json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_dataset: malformed manifest: " + std::string(e.what()));
    }
    DatasetManifest mf;
    mf.version = j.at("version").get<int>();
    mf.resolution = j.at("resolution").get<int>();
    mf.rng_seed = j.at("rng_seed").get<uint64_t>();
    mf.root = dir;
    for (const auto& idj : j.at("identities")) mf.identities.push_back(identity_from_json(idj));
    for (const auto& cj : j.at("clips")) {
        ClipRecord clip;
        clip.identity_id = cj.at("identity").get<int>();
        const auto bgv = cj.at("background").get<std::vector<double>>();
        require(bgv.size() == 3, "load_dataset: background must have 3 channels");
        std::copy(bgv.begin(), bgv.end(), clip.background.begin());
        clip.coeff_file = cj.value("coeff_file", "");
        size_t fidx = 0;
        for (const auto& fj : cj.at("frames")) {
            FrameRecord rec;
            rec.image = fj.at("image").get<std::string>();
            rec.coeffs = motion::coeffs_from_json(fj.at("coeffs"), fidx++);
            clip.frames.push_back(std::move(rec));
        }
        mf.clips.push_back(std::move(clip));
    }
    mf.validate();
    return mf;
}

}  // namespace faceanim::world
