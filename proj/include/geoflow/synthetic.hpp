#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoflow/array2.hpp"
#include "geoflow/geometry.hpp"

namespace geoflow {

// Field values u(V) on one discretized domain.
struct FieldSample {
    PointCloud cloud;
    Array2 values; // m x p

    [[nodiscard]] std::size_t channels() const noexcept { return values.cols; }
};

// Per-channel z-score statistics plus the coordinate bounding box, computed on the
// training split.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;
    BoundingBox box;
};

struct DatasetMeta {
    std::size_t d = 0;
    std::size_t p = 0;
    std::string generator;
    std::uint64_t root_seed = 0;
    NormalizationStats stats;
};

struct FieldDataset {
    std::vector<FieldSample> samples;
    DatasetMeta meta;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
};

// Throws if samples disagree on d or p, or hold non-finite values.
void validate_dataset(const FieldDataset& dataset);

// First n - floor(n / 5) samples train, the rest test (n >= 2 keeps at least one test sample).
struct TrainTestSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
TrainTestSplit split_dataset(std::size_t n);

NormalizationStats compute_stats(const FieldDataset& dataset, std::span<const std::size_t> indices);

// Coordinates mapped by the stats box onto [-1, 1]^d, values z-scored per channel.
FieldDataset normalized(const FieldDataset& dataset, const NormalizationStats& stats);
Array2 normalize_values(const Array2& values, const NormalizationStats& stats);
Array2 denormalize_values(const Array2& values, const NormalizationStats& stats);

// ---- domains ----------------------------------------------------------------------

enum class DomainKind { notch_triangle, annulus, perturbed_disk };

DomainKind parse_domain_kind(const std::string& name);
std::string to_string(DomainKind kind);

// Geometry constants of the built-in shapes.
inline constexpr double kAnnulusInner = 0.5;
inline constexpr double kAnnulusOuter = 1.0;
// Notch removed from the triangle with vertices (-1,-1), (1,-1), (0,1).
inline constexpr double kNotchHalfWidth = 0.15;
inline constexpr double kNotchTop = -0.2;

bool in_domain(DomainKind kind, double x, double y, std::span<const double> shape_params = {});

// Quasi-uniform nodes inside the shape by best-candidate sampling. n_points >= 8.
PointCloud gen_domain(DomainKind kind, std::size_t n_points, std::uint64_t seed);

// ---- fields -----------------------------------------------------------------------

// Squared-exponential GRF values L * xi with K = s^2 exp(-|x - x'|^2 / (2 l^2)) + 1e-8 I.
FieldSample grf_sample(const PointCloud& cloud, double lengthscale, double amplitude, std::uint64_t seed,
                       std::size_t channels = 1);

inline constexpr double kGrfJitter = 1e-8;

// u(x, y) = sum_k a_k Re((x + iy)^k) + b_k Im((x + iy)^k); coeffs[k] = {a_k, b_k}.
// One-dimensional clouds use y = 0.
FieldSample harmonic_field(const PointCloud& cloud, std::span<const std::pair<double, double>> coeffs);

struct GeneratorSpec {
    DomainKind kind = DomainKind::annulus;
    std::size_t n_points = 256;
    std::size_t samples = 64;
    std::string field = "grf"; // "grf" or "harmonic"
    double lengthscale = 0.5;
    double amplitude = 1.0;
    std::size_t harmonic_degree = 4;
    std::uint64_t seed = 0;
};

// Sample i uses streams derived from (seed, i). Coordinates and values are rounded
// to f32 so the dataset survives a GFFD round trip bit-exactly.
FieldDataset generate_dataset(const GeneratorSpec& spec);

// ---- corruption -------------------------------------------------------------------

struct CorruptionSpec {
    double noise_level = 0.01;
    std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
    std::vector<double> channel_std; // empty: unit scale
};

struct CorruptedSample {
    ConditioningInstance instance;
    double fraction = 1.0;
};

// Draws a fraction uniformly from the set, then sensors and noise, all from `seed`.
CorruptedSample corrupt_sample(const FieldSample& sample, const CorruptionSpec& spec, std::uint64_t seed);

// Deterministic stream of corrupted instances over a subset of a dataset. Position k
// belongs to epoch k / n; each epoch visits the subset in a fresh seeded order, and
// every position draws its own sensor and noise stream. Targets stay clean.
class CorruptionStream {
public:
    struct Item {
        ConditioningInstance instance;
        const FieldSample* target = nullptr;
        std::size_t sample_index = 0;
        double fraction = 1.0;
    };

    CorruptionStream(const FieldDataset& dataset, std::vector<std::size_t> indices, CorruptionSpec spec,
                     std::uint64_t seed);

    // Pure function of the position; does not advance the cursor.
    [[nodiscard]] Item at(std::uint64_t position) const;
    Item next() { return at(cursor_++); }

    void seek(std::uint64_t position) noexcept { cursor_ = position; }
    [[nodiscard]] std::uint64_t position() const noexcept { return cursor_; }
    [[nodiscard]] std::size_t sample_index_at(std::uint64_t position) const;

private:
    const FieldDataset* dataset_;
    std::vector<std::size_t> indices_;
    CorruptionSpec spec_;
    std::uint64_t seed_;
    std::uint64_t cursor_ = 0;
};

} // namespace geoflow
