#include "geoflow/checkpoint.hpp"

#include <algorithm>
#include <set>

#include "geoflow/binary_io.hpp"
#include "geoflow/errors.hpp"

namespace geoflow {

namespace {

constexpr std::string_view kMagic = "GFCK";

std::size_t count_of(const std::vector<std::uint32_t>& shape)
{
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string describe(const std::vector<std::uint32_t>& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += (i ? "," : "") + std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace

void Checkpoint::put(std::string name, std::vector<std::uint32_t> shape, std::vector<double> data)
{
    if (find(name) != nullptr) {
        throw ConfigError("checkpoint entry '" + name + "' written twice");
    }
    if (count_of(shape) != data.size()) {
        throw DimensionError("checkpoint entry '" + name + "' has shape " + describe(shape) + " but " +
                             std::to_string(data.size()) + " values");
    }
    entries_.push_back(NamedArray{std::move(name), std::move(shape), std::move(data)});
}

void Checkpoint::put_scalar(std::string name, double value) { put(std::move(name), {}, {value}); }

void Checkpoint::put_u64(std::string name, std::uint64_t value)
{
    put(std::move(name), {2}, {static_cast<double>(value >> 32), static_cast<double>(value & 0xFFFFFFFFULL)});
}

const NamedArray* Checkpoint::find(const std::string& name) const
{
    for (const auto& e : entries_) {
        if (e.name == name) {
            return &e;
        }
    }
    return nullptr;
}

const NamedArray& Checkpoint::get(const std::string& name) const
{
    const NamedArray* e = find(name);
    if (e == nullptr) {
        throw ConfigError("checkpoint has no entry '" + name + "'");
    }
    return *e;
}

double Checkpoint::scalar(const std::string& name) const
{
    const NamedArray& e = get(name);
    if (e.data.size() != 1) {
        throw ConfigError("checkpoint entry '" + name + "' is not a scalar");
    }
    return e.data.front();
}

std::uint64_t Checkpoint::u64(const std::string& name) const
{
    const NamedArray& e = get(name);
    if (e.data.size() != 2) {
        throw ConfigError("checkpoint entry '" + name + "' is not a 64-bit integer");
    }
    return (static_cast<std::uint64_t>(e.data[0]) << 32) | static_cast<std::uint64_t>(e.data[1]);
}

std::vector<unsigned char> Checkpoint::serialize() const
{
    ByteWriter w;
    w.bytes(kMagic);
    w.u32(kGfckVersion);
    w.u32(static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.bytes(e.name);
        w.u32(static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) {
            w.u32(d);
        }
        for (double v : e.data) {
            w.f64(v);
        }
    }
    return w.buffer();
}

Checkpoint Checkpoint::parse(std::vector<unsigned char> bytes)
{
    ByteReader r(std::move(bytes));
    if (r.bytes(4, "magic") != kMagic) {
        throw FormatError("not a GFCK checkpoint (bad magic)", 0);
    }
    const std::size_t version_offset = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kGfckVersion) {
        throw FormatError("unsupported GFCK version " + std::to_string(version), version_offset);
    }
    const std::uint32_t count = r.u32("entry count");
    Checkpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t entry_offset = r.offset();
        const std::uint32_t name_len = r.u32("entry name length");
        std::string name = r.bytes(name_len, "entry name");
        const std::uint32_t rank = r.u32("entry rank");
        if (rank > 8) {
            throw FormatError("entry '" + name + "' has implausible rank " + std::to_string(rank), entry_offset);
        }
        std::vector<std::uint32_t> shape(rank);
        for (auto& d : shape) {
            d = r.u32("entry dimension");
        }
        const std::size_t n = count_of(shape);
        if (n * 8 > r.remaining()) {
            throw FormatError("truncated file while reading payload of '" + name + "'", r.offset());
        }
        std::vector<double> data(n);
        for (auto& v : data) {
            v = r.f64("entry payload");
        }
        if (ckpt.find(name) != nullptr) {
            throw FormatError("duplicate entry '" + name + "'", entry_offset);
        }
        ckpt.entries_.push_back(NamedArray{std::move(name), std::move(shape), std::move(data)});
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after the last checkpoint entry", r.offset());
    }
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void put_parameters(Checkpoint& ckpt, const ParameterSet& params)
{
    for (const auto& p : params) {
        std::vector<std::uint32_t> shape;
        for (auto d : p.value.shape()) {
            shape.push_back(static_cast<std::uint32_t>(d));
        }
        const auto data = p.value.data();
        ckpt.put(p.name, std::move(shape), std::vector<double>(data.begin(), data.end()));
    }
}

void load_parameters(const Checkpoint& ckpt, ParameterSet& params, const std::string& prefix)
{
    std::set<std::string> expected;
    for (auto& p : params) {
        expected.insert(p.name);
        const NamedArray* e = ckpt.find(p.name);
        if (e == nullptr) {
            throw ConfigError("checkpoint is missing parameter '" + p.name + "'");
        }
        std::vector<std::uint32_t> shape;
        for (auto d : p.value.shape()) {
            shape.push_back(static_cast<std::uint32_t>(d));
        }
        if (shape != e->shape) {
            throw ConfigError("parameter '" + p.name + "' has shape " + describe(e->shape) +
                              " in the checkpoint but " + describe(shape) + " in the model");
        }
        auto dst = p.value.mutable_data();
        std::copy(e->data.begin(), e->data.end(), dst.begin());
    }
    for (const auto& e : ckpt.entries()) {
        if (e.name.rfind(prefix, 0) == 0 && !expected.contains(e.name)) {
            throw ConfigError("checkpoint parameter '" + e.name + "' does not exist in this model configuration");
        }
    }
}

} // namespace geoflow
