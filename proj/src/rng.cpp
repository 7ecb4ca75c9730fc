#include "faceanim/rng.hpp"

#include <cmath>
#include <sstream>

namespace faceanim {

int64_t Rng::uniform_int(int64_t n) {
    require(n > 0, "uniform_int: n must be positive");
    // Rejection sampling keeps the draw exactly uniform.
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % un + 1) % un;
    uint64_t v;
    do {
        v = engine_();
    } while (v > limit);
    return static_cast<int64_t>(v % un);
}

double Rng::normal() {
    // Box-Muller, cosine branch only.
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

void Rng::fill_normal(Tensor& t, double mean, double stddev) {
    for (double& v : t.data) v = mean + stddev * normal();
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
    for (double& v : t.data) v = uniform(lo, hi);
}

Tensor Rng::normal_tensor(std::vector<int> shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    fill_normal(t, mean, stddev);
    return t;
}

std::string Rng::serialize_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::restore_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw std::runtime_error("Rng: failed to restore engine state");
}

}  // namespace faceanim
