#pragma once

#include <map>
#include <string>
#include <vector>

#include "faceanim/tensor.hpp"

namespace faceanim {

// Single-file container of named double arrays plus string metadata; the
// checkpoint and regressor formats. Round-trips are bit-exact.
struct TensorFile {
    std::string format_version = "faceanim.ckpt.1";
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> arrays;  // ordered

    const Tensor& array(const std::string& name) const;  // throws naming the array
    bool has(const std::string& name) const;
};

void write_tensor_file(const TensorFile& tf, const std::string& path);
// Throws distinct errors for: unreadable file, bad magic / truncation
// ("corrupt"), and format-version mismatch.
TensorFile read_tensor_file(const std::string& path);

}  // namespace faceanim
