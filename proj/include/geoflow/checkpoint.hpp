#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geoflow/nn.hpp"

namespace geoflow {

inline constexpr std::uint32_t kGfckVersion = 1;

struct NamedArray {
    std::string name;
    std::vector<std::uint32_t> shape; // empty for scalars
    std::vector<double> data;
};

// Ordered named-array container stored as GFCK: magic "GFCK", u32 version, u32 count,
// then per entry [u32 name length][utf-8 name][u32 rank][u32 dims...][f64 payload],
// all little-endian. Entries keep insertion order, so serialization is deterministic.
class Checkpoint {
public:
    void put(std::string name, std::vector<std::uint32_t> shape, std::vector<double> data);
    void put_scalar(std::string name, double value);
    // Stored as two exactly representable 32-bit halves.
    void put_u64(std::string name, std::uint64_t value);

    [[nodiscard]] const NamedArray* find(const std::string& name) const;
    // Throws ConfigError when the entry is absent.
    [[nodiscard]] const NamedArray& get(const std::string& name) const;
    [[nodiscard]] double scalar(const std::string& name) const;
    [[nodiscard]] std::uint64_t u64(const std::string& name) const;
    [[nodiscard]] bool contains(const std::string& name) const { return find(name) != nullptr; }

    [[nodiscard]] const std::vector<NamedArray>& entries() const noexcept { return entries_; }

    [[nodiscard]] std::vector<unsigned char> serialize() const;
    static Checkpoint parse(std::vector<unsigned char> bytes);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::vector<NamedArray> entries_;
};

// Writes every parameter of the set under its own name.
void put_parameters(Checkpoint& ckpt, const ParameterSet& params);

// Copies stored values into the set. Every parameter must be present with a matching
// shape, and no entry under `prefix` may be left unmatched; violations raise ConfigError.
void load_parameters(const Checkpoint& ckpt, ParameterSet& params, const std::string& prefix);

} // namespace geoflow
