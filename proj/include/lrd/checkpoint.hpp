#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lrd/tensor.hpp"

namespace lrd {

/// Named tensors in insertion order. Names are unique and non-empty.
class Checkpoint {
public:
    void add(std::string name, Tensor t);
    /// Replaces an existing tensor or appends a new one.
    void set(const std::string& name, Tensor t);

    const Tensor* find(const std::string& name) const;
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }

    friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
        return a.entries_ == b.entries_;
    }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// LRDC container, all integers little-endian:
//   "LRDC" | u32 version (1) | u32 tensor_count
//   per tensor: u16 name_len | name | u8 dtype (0 = f32) | u8 ndim | u64 dims[ndim] | f32 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Values as they survive an f32 round trip.
Tensor narrowed_to_f32(const Tensor& t);

}  // namespace lrd
