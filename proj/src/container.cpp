#include "faceanim/container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace faceanim {

namespace {

constexpr char kMagic[8] = {'F', 'A', 'C', 'K', 'P', 'T', '0', '\n'};

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("checkpoint: corrupt file (truncated)");
    return v;
}

std::string read_str(std::istream& is, uint32_t max_len = 1u << 24) {
    const uint32_t n = read_u32(is);
    if (n > max_len) throw std::runtime_error("checkpoint: corrupt file (bad string length)");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint: corrupt file (truncated)");
    return s;
}

}  // namespace

const Tensor& TensorFile::array(const std::string& name) const {
    for (const auto& [n, t] : arrays)
        if (n == name) return t;
    throw std::runtime_error("checkpoint: missing array '" + name + "'");
}

bool TensorFile::has(const std::string& name) const {
    for (const auto& [n, _] : arrays)
        if (n == name) return true;
    return false;
}

void write_tensor_file(const TensorFile& tf, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kMagic, sizeof(kMagic));
    write_str(os, tf.format_version);
    write_u32(os, static_cast<uint32_t>(tf.meta.size()));
    for (const auto& [k, v] : tf.meta) {
        write_str(os, k);
        write_str(os, v);
    }
    write_u32(os, static_cast<uint32_t>(tf.arrays.size()));
    for (const auto& [name, t] : tf.arrays) {
        write_str(os, name);
        write_u32(os, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape) write_u32(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

TensorFile read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: corrupt file (bad magic) " + path);
    TensorFile tf;
    const std::string version = read_str(is);
    if (version != tf.format_version)
        throw std::runtime_error("checkpoint: format version mismatch: file has '" + version +
                                 "', expected '" + tf.format_version + "'");
    const uint32_t nmeta = read_u32(is);
    for (uint32_t i = 0; i < nmeta; ++i) {
        std::string k = read_str(is);
        tf.meta[k] = read_str(is, 1u << 26);
    }
    const uint32_t narr = read_u32(is);
    for (uint32_t i = 0; i < narr; ++i) {
        std::string name = read_str(is);
        const uint32_t rank = read_u32(is);
        if (rank > 8) throw std::runtime_error("checkpoint: corrupt file (bad rank)");
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: corrupt file (truncated array '" + name + "')");
        tf.arrays.emplace_back(std::move(name), std::move(t));
    }
    return tf;
}

}  // namespace faceanim
