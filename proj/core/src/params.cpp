#include "salibi/params.hpp"

#include "salibi/dataset.hpp" // FormatError

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace salibi {

Tensor ParamStore::insert(const std::string& name, Tensor t) {
    if (has(name)) throw std::logic_error("ParamStore: duplicate param name " + name);
    items_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                          Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(name, {fan_in, fan_out}, -a, a, rng);
}

Tensor ParamStore::zeros(const std::string& name, Shape shape) {
    return insert(name, Tensor::zeros(std::move(shape), true));
}

Tensor ParamStore::ones(const std::string& name, Shape shape) {
    return insert(name, Tensor::full(std::move(shape), 1.0, true));
}

Tensor ParamStore::uniform(const std::string& name, Shape shape, double lo, double hi, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return insert(name, t);
}

Tensor ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw std::logic_error("ParamStore: unknown param " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return true;
    return false;
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.push_back(t);
    return out;
}

std::size_t ParamStore::total_params() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [n, t] : items_) t.zero_grad();
}

const NamedArray& CheckpointData::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw FormatError("checkpoint: missing array " + name);
}

bool CheckpointData::has(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return true;
    return false;
}

namespace {

constexpr char kMagic[5] = {'S', 'A', 'L', 'B', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    is.read(reinterpret_cast<char*>(b), sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<T>(v);
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
    os.write(kMagic, 5);
    write_le<std::uint64_t>(os, ckpt.config_digest);
    write_le<std::uint64_t>(os, ckpt.arrays.size());
    for (const auto& a : ckpt.arrays) {
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
        os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
        for (auto e : a.shape) write_le<std::uint64_t>(os, e);
        if (a.data.size() != shape_numel(a.shape))
            throw std::logic_error("checkpoint: array " + a.name + " shape/data mismatch");
        for (double v : a.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            write_le<std::uint64_t>(os, bits);
        }
    }
    if (!os) throw FormatError("checkpoint: write failed for " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open " + path.string());
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0)
        throw FormatError("checkpoint: bad magic in " + path.string());
    CheckpointData ckpt;
    ckpt.config_digest = read_le<std::uint64_t>(is);
    const auto count = read_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedArray a;
        const auto name_len = read_le<std::uint32_t>(is);
        a.name.resize(name_len);
        is.read(a.name.data(), name_len);
        const auto rank = read_le<std::uint32_t>(is);
        a.shape.resize(rank);
        for (auto& e : a.shape) e = read_le<std::uint64_t>(is);
        a.data.resize(shape_numel(a.shape));
        for (auto& v : a.data) {
            const std::uint64_t bits = read_le<std::uint64_t>(is);
            std::memcpy(&v, &bits, 8);
        }
        if (!is)
            throw FormatError("checkpoint: truncated array " + std::to_string(i) + " in " +
                              path.string());
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace salibi
