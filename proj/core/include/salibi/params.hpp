#pragma once

#include "salibi/rng.hpp"
#include "salibi/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace salibi {

// Ordered, named registry of trainable tensors. Order is creation order and
// defines the serialization and optimizer-state layout, so it must be
// deterministic.
class ParamStore {
public:
    Tensor xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng);
    Tensor zeros(const std::string& name, Shape shape);
    Tensor ones(const std::string& name, Shape shape);
    Tensor uniform(const std::string& name, Shape shape, double lo, double hi, Rng& rng);

    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<Tensor> tensors() const;
    std::size_t total_params() const;
    void zero_grads();

private:
    Tensor insert(const std::string& name, Tensor t);
    std::vector<std::pair<std::string, Tensor>> items_;
};

// Checkpoint container: little-endian, magic "SALB1", config digest, then
// named f64 arrays (u32 name length, name, u32 rank, u64 extents, raw data).
struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

struct CheckpointData {
    std::uint64_t config_digest = 0;
    std::vector<NamedArray> arrays;

    const NamedArray& find(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt);
CheckpointData load_checkpoint(const std::filesystem::path& path);

// FNV-1a over a string; used to fingerprint the config inside checkpoints.
std::uint64_t fnv1a64(const std::string& s);

} // namespace salibi
