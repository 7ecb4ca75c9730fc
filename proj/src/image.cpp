#include "faceanim/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace faceanim {

void Image::clamp01() {
    for (double& v : rgb) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

bool Image::bit_equal(const Image& o) const {
    return height == o.height && width == o.width &&
           std::memcmp(rgb.data(), o.rgb.data(), rgb.size() * sizeof(double)) == 0;
}

double Image::max_abs_diff(const Image& o) const {
    require(height == o.height && width == o.width, "Image::max_abs_diff: size mismatch");
    double m = 0.0;
    for (size_t i = 0; i < rgb.size(); ++i) m = std::max(m, std::fabs(rgb[i] - o.rgb[i]));
    return m;
}

Tensor Image::to_tensor() const {
    Tensor t({3, height, width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                t[(static_cast<int64_t>(c) * height + y) * width + x] = at(y, x, c);
    return t;
}

Image Image::from_tensor(const Tensor& t) {
    require(t.rank() == 3 && t.shape[0] == 3, "Image::from_tensor: expected [3,H,W]");
    Image img(t.shape[1], t.shape[2]);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                img.at(y, x, c) = t[(static_cast<int64_t>(c) * img.height + y) * img.width + x];
    return img;
}

std::vector<uint8_t> Image::quantize() const {
    std::vector<uint8_t> out(rgb.size());
    for (size_t i = 0; i < rgb.size(); ++i) {
        double v = rgb[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

Image Image::from_bytes(const std::vector<uint8_t>& px, int h, int w) {
    require(static_cast<int64_t>(px.size()) == static_cast<int64_t>(h) * w * 3,
            "Image::from_bytes: size mismatch");
    Image img(h, w);
    for (size_t i = 0; i < px.size(); ++i) img.rgb[i] = px[i] / 255.0;
    return img;
}

void save_png(const Image& img, const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("save_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("save_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("save_png: write failed for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> bytes = img.quantize();
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = bytes.data() + static_cast<size_t>(y) * img.width * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("load_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("load_png: corrupt PNG " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    // Normalize anything reasonable to 8-bit RGB.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = bytes.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return Image::from_bytes(bytes, h, w);
}

Image blur3(const Image& img) {
    const int h = img.height, w = img.width;
    Image tmp(h, w), out(h, w);
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                tmp.at(y, x, c) = 0.25 * img.at(y, clampi(x - 1, 0, w - 1), c) +
                                  0.5 * img.at(y, x, c) + 0.25 * img.at(y, clampi(x + 1, 0, w - 1), c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = 0.25 * tmp.at(clampi(y - 1, 0, h - 1), x, c) +
                                  0.5 * tmp.at(y, x, c) + 0.25 * tmp.at(clampi(y + 1, 0, h - 1), x, c);
    return out;
}

double psnr(const Image& a, const Image& b, double cap_db) {
    require(a.height == b.height && a.width == b.width, "psnr: size mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = a.rgb[i] - b.rgb[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.rgb.size());
    if (mse <= 0.0) return cap_db;
    const double v = 10.0 * std::log10(1.0 / mse);
    return std::min(v, cap_db);
}

}  // namespace faceanim
