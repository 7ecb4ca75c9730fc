#include "faceanim/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace faceanim {

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::max_abs_diff(const Tensor& o) const {
    if (!same_shape(o)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < data.size(); ++i) m = std::max(m, std::fabs(data[i] - o.data[i]));
    return m;
}

bool Tensor::bit_equal(const Tensor& o) const {
    if (!same_shape(o)) return false;
    return std::memcmp(data.data(), o.data.data(), data.size() * sizeof(double)) == 0;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

}  // namespace faceanim
