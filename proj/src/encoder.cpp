#include "faceanim/encoder.hpp"

#include <cmath>

namespace faceanim::appearance {

void EncoderConfig::validate(int resolution) const {
    require(patch_size > 0 && resolution % patch_size == 0,
            "EncoderConfig: resolution must be divisible by patch_size");
    require(d_model % n_heads == 0, "EncoderConfig: d_model must be divisible by n_heads");
    require(n_layers >= 1, "EncoderConfig: need at least one layer");
}

AppearanceEncoder::AppearanceEncoder(EncoderConfig cfg_, int resolution_, Rng& rng)
    : cfg(cfg_), resolution(resolution_) {
    cfg.validate(resolution);
    const int pd = 3 * cfg.patch_size * cfg.patch_size;
    patch_w = ad::leaf(nn::xavier_uniform({pd, cfg.d_model}, pd, cfg.d_model, rng));
    patch_b = ad::leaf(Tensor::zeros({cfg.d_model}));
    cls = ad::leaf(rng.normal_tensor({1, cfg.d_model}, 0.0, 0.02));
    pos = ad::leaf(rng.normal_tensor({cfg.patches(resolution) + 1, cfg.d_model}, 0.0, 0.02));
    for (int i = 0; i < cfg.n_layers; ++i) blocks.emplace_back(cfg.d_model, cfg.n_heads, rng);
    final_ln = nn::LayerNorm(cfg.d_model);
}

nn::ParamList AppearanceEncoder::params() const {
    nn::ParamList p;
    p.add("enc.patch.w", patch_w);
    p.add("enc.patch.b", patch_b);
    p.add("enc.cls", cls);
    p.add("enc.pos", pos);
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect("enc.block" + std::to_string(i), p);
    final_ln.collect("enc.final_ln", p);
    return p;
}

AppearanceTokens AppearanceEncoder::encode(const ad::Var& image) const {
    require(image->value.rank() == 3 && image->value.shape[0] == 3, "encode: image must be [3,H,W]");
    require(image->value.shape[1] == resolution && image->value.shape[2] == resolution,
            "encode: image resolution " + std::to_string(image->value.shape[1]) +
                " does not match encoder resolution " + std::to_string(resolution));
    const int ps = cfg.patch_size;
    const int g = resolution / ps;
    const int P = g * g;

    // [3,H,W] -> [P, 3*ps*ps]
    auto r1 = ad::reshape(image, {3, g, ps, g, ps});
    auto p1 = ad::permute(r1, {1, 3, 0, 2, 4});  // [g,g,3,ps,ps]
    auto patches = ad::reshape(p1, {P, 3 * ps * ps});

    auto tok = ad::add_bias(ad::linear_nobias(patches, patch_w), patch_b);  // [P,d]
    auto seq = ad::concat({cls, tok}, 0);                                    // [P+1,d]
    seq = ad::add(seq, pos);
    auto x = ad::reshape(seq, {1, P + 1, cfg.d_model});
    for (const auto& blk : blocks) x = blk.forward(x);
    x = final_ln.forward(x);
    auto flat = ad::reshape(x, {P + 1, cfg.d_model});

    AppearanceTokens out;
    out.class_token = ad::reshape(ad::slice(flat, 0, 0, 1), {cfg.d_model});
    out.patch_tokens = ad::slice(flat, 0, 1, P);
    return out;
}

AppearanceTokens AppearanceEncoder::encode(const Image& image) const {
    return encode(ad::constant(image.to_tensor()));
}

namespace {

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

Image apply_photo_transform(const Image& img, PhotoTransform kind, double magnitude, Rng& rng) {
    const double m = clampd(magnitude, 0.0, 1.0);
    const int h = img.height, w = img.width;
    Image out = img;
    switch (kind) {
        case PhotoTransform::kGrayscale: {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double l = luminance(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
                    for (int c = 0; c < 3; ++c)
                        out.at(y, x, c) = (1.0 - m) * img.at(y, x, c) + m * l;
                }
            break;
        }
        case PhotoTransform::kColorJitter: {
            double scale[3], shift[3];
            for (int c = 0; c < 3; ++c) {
                scale[c] = 1.0 + 0.25 * m * rng.uniform(-1.0, 1.0);
                shift[c] = 0.08 * m * rng.uniform(-1.0, 1.0);
            }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c) * scale[c] + shift[c];
            break;
        }
        case PhotoTransform::kEdgeEnhance: {
            const Image b = blur3(img);
            for (size_t i = 0; i < out.rgb.size(); ++i)
                out.rgb[i] = img.rgb[i] + 1.2 * m * (img.rgb[i] - b.rgb[i]);
            break;
        }
        case PhotoTransform::kBlur: {
            const Image b = blur3(img);
            for (size_t i = 0; i < out.rgb.size(); ++i)
                out.rgb[i] = (1.0 - m) * img.rgb[i] + m * b.rgb[i];
            break;
        }
        case PhotoTransform::kSharpen: {
            const Image b = blur3(blur3(img));
            for (size_t i = 0; i < out.rgb.size(); ++i)
                out.rgb[i] = img.rgb[i] + 2.0 * m * (img.rgb[i] - b.rgb[i]);
            break;
        }
        case PhotoTransform::kLighting: {
            const double s = 0.2 * m * rng.uniform(-1.0, 1.0);
            const double gx = 0.25 * m * rng.uniform(-1.0, 1.0);
            const double gy = 0.25 * m * rng.uniform(-1.0, 1.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double f = 1.0 + s + gx * (static_cast<double>(x) / w - 0.5) +
                                     gy * (static_cast<double>(y) / h - 0.5);
                    for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c) * f;
                }
            break;
        }
        case PhotoTransform::kNoise: {
            const double sigma = 0.03 * m;
            for (double& v : out.rgb) v += rng.normal(0.0, sigma);
            break;
        }
        case PhotoTransform::kVignette: {
            const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
            const double rmax2 = cx * cx + cy * cy;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / rmax2;
                    const double f = 1.0 - 0.25 * m * r2;
                    for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c) * f;
                }
            break;
        }
        case PhotoTransform::kContrast: {
            const double c = 1.0 + 0.3 * m * rng.uniform(-1.0, 1.0);
            for (double& v : out.rgb) v = (v - 0.5) * c + 0.5;
            break;
        }
    }
    out.clamp01();
    return out;
}

Image photometric_augment(const Image& img, uint64_t rng_seed, double strength) {
    require(strength >= 0.0 && strength <= 1.0, "photometric_augment: strength in [0,1]");
    if (strength == 0.0) return img;
    Rng rng(rng_seed);
    const int count = 1 + static_cast<int>(rng.uniform_int(3));

    // sample distinct transforms
    std::vector<int> pool(kNumPhotoTransforms);
    for (int i = 0; i < kNumPhotoTransforms; ++i) pool[static_cast<size_t>(i)] = i;
    Image out = img;
    for (int k = 0; k < count; ++k) {
        const int pick = static_cast<int>(rng.uniform_int(static_cast<int64_t>(pool.size())));
        const PhotoTransform kind = static_cast<PhotoTransform>(pool[static_cast<size_t>(pick)]);
        pool.erase(pool.begin() + pick);
        const double mag = strength * rng.uniform(0.4, 1.0);
        out = apply_photo_transform(out, kind, mag, rng);
    }
    return out;
}

}  // namespace faceanim::appearance
