#include "geoflow/dataset_io.hpp"

#include <limits>

#include "geoflow/binary_io.hpp"
#include "geoflow/errors.hpp"

namespace geoflow {

namespace {

std::uint32_t checked_u32(std::size_t v, const char* what)
{
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw CapacityError(std::string(what) + " does not fit the u32 GFFD field");
    }
    return static_cast<std::uint32_t>(v);
}

} // namespace

std::size_t gffd_file_size(std::size_t d, std::size_t p, std::span<const std::size_t> node_counts)
{
    std::size_t total = kGffdHeaderBytes;
    for (const auto m : node_counts) {
        total += 4 + 4 * m * (d + p);
    }
    return total;
}

void dataset_write(const std::filesystem::path& path, const FieldDataset& dataset)
{
    validate_dataset(dataset);
    ByteWriter w;
    w.bytes("GFFD");
    w.u32(kGffdVersion);
    w.u32(checked_u32(dataset.meta.d, "d"));
    w.u32(checked_u32(dataset.meta.p, "p"));
    w.u32(checked_u32(dataset.size(), "sample count"));
    for (const auto& sample : dataset.samples) {
        w.u32(checked_u32(sample.cloud.size(), "node count"));
        for (const double v : sample.cloud.coords.values) {
            w.f32(static_cast<float>(v));
        }
        for (const double v : sample.values.values) {
            w.f32(static_cast<float>(v));
        }
    }
    w.save(path);
}

FieldDataset dataset_read(const std::filesystem::path& path)
{
    auto r = ByteReader::from_file(path);
    if (r.bytes(4, "magic") != "GFFD") {
        throw FormatError("bad GFFD magic", 0);
    }
    const auto version = r.u32("version");
    if (version != kGffdVersion) {
        throw FormatError("unsupported GFFD version " + std::to_string(version), 4);
    }
    FieldDataset dataset;
    dataset.meta.d = r.u32("d");
    dataset.meta.p = r.u32("p");
    const std::size_t count = r.u32("sample count");
    if (dataset.meta.d < 1 || dataset.meta.d > 3 || dataset.meta.p < 1) {
        throw FormatError("invalid GFFD header dimensions", 8);
    }
    dataset.meta.generator = "gffd";
    dataset.samples.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t record = r.offset();
        const std::size_t m = r.u32("node count");
        if (m == 0) {
            throw FormatError("sample with zero nodes", record);
        }
        if (r.remaining() / 4 < m * (dataset.meta.d + dataset.meta.p)) {
            throw FormatError("truncated file while reading sample " + std::to_string(s), r.offset());
        }
        FieldSample sample;
        sample.cloud.domain_id = "gffd";
        sample.cloud.coords = Array2(m, dataset.meta.d);
        sample.values = Array2(m, dataset.meta.p);
        for (auto& v : sample.cloud.coords.values) {
            v = static_cast<double>(r.f32("coordinates"));
        }
        for (auto& v : sample.values.values) {
            v = static_cast<double>(r.f32("values"));
        }
        dataset.samples.push_back(std::move(sample));
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after the last GFFD sample", r.offset());
    }
    validate_dataset(dataset);
    const auto split = split_dataset(dataset.size());
    if (!split.train.empty()) {
        dataset.meta.stats = compute_stats(dataset, split.train);
    }
    return dataset;
}

} // namespace geoflow
