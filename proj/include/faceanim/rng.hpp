#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "faceanim/tensor.hpp"

namespace faceanim {

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// uniform/normal mappings below avoid std::*_distribution, whose output is
// implementation-defined. Same seed -> same stream, everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n). n must be positive.
    int64_t uniform_int(int64_t n);

    // Standard normal via Box-Muller; no cached spare, so the full generator
    // state is the engine state (checkpoint-friendly).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    void fill_normal(Tensor& t, double mean = 0.0, double stddev = 1.0);
    void fill_uniform(Tensor& t, double lo, double hi);

    Tensor normal_tensor(std::vector<int> shape, double mean = 0.0, double stddev = 1.0);

    bool bernoulli(double p) { return uniform() < p; }

    std::string serialize_state() const;
    void restore_state(const std::string& s);

private:
    std::mt19937_64 engine_;
};

}  // namespace faceanim
