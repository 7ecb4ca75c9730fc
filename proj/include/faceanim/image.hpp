#pragma once

#include <string>
#include <vector>

#include "faceanim/tensor.hpp"

namespace faceanim {

// Interleaved RGB image, doubles in [0,1], row-major (y, x, channel).
struct Image {
    int height = 0, width = 0;
    std::vector<double> rgb;

    Image() = default;
    Image(int h, int w) : height(h), width(w), rgb(static_cast<size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    void clamp01();
    bool bit_equal(const Image& o) const;
    double max_abs_diff(const Image& o) const;

    // [3,H,W] tensor conversion used by the networks.
    Tensor to_tensor() const;
    static Image from_tensor(const Tensor& t);

    // 8-bit quantization identical to what save_png writes.
    std::vector<uint8_t> quantize() const;
    static Image from_bytes(const std::vector<uint8_t>& px, int h, int w);
};

void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

// 3x3 blur with kernel [1 2 1]/4 applied separably, clamped borders.
Image blur3(const Image& img);

double psnr(const Image& a, const Image& b, double cap_db = 99.0);

}  // namespace faceanim
