#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geoflow/array2.hpp"

namespace geoflow {

// Discretized domain: m nodes in d dimensions (d in {1, 2, 3}).
struct PointCloud {
    Array2 coords;
    std::string domain_id;

    [[nodiscard]] std::size_t size() const noexcept { return coords.rows; }
    [[nodiscard]] std::size_t dim() const noexcept { return coords.cols; }
};

// Throws DimensionError unless 1 <= d <= 3 and m >= 1.
void validate_cloud(const PointCloud& cloud);

// Sensor subset X of the cloud nodes; mask[i] == 1 exactly when i is in indices.
struct SensorSet {
    std::vector<std::size_t> indices; // ascending
    std::vector<double> mask;         // length m, entries 0 or 1

    static SensorSet from_indices(std::vector<std::size_t> indices, std::size_t m);
    static SensorSet all(std::size_t m);
    static SensorSet none(std::size_t m);
};

// Node coordinates, sensor mask and masked noisy observations (zero off-sensor).
struct ConditioningInstance {
    Array2 coords;            // m x d
    std::vector<double> mask; // m
    Array2 obs;               // m x p

    [[nodiscard]] std::size_t size() const noexcept { return coords.rows; }
    [[nodiscard]] std::size_t dim() const noexcept { return coords.cols; }
    [[nodiscard]] std::size_t channels() const noexcept { return obs.cols; }
};

// Number of sensors chosen for a fraction: ceil(fraction * m), guarded against
// round-off just above an integer.
std::size_t sensor_count(double fraction, std::size_t m);

// Seeded uniform shuffle of 0..m-1, keeping the first sensor_count(fraction, m).
// Throws ParameterError unless 0 < fraction <= 1.
SensorSet sample_sensors(const PointCloud& cloud, double fraction, std::uint64_t seed);

// max_{e in E} min_{x in X} |e - x|_2. The evaluation set E stands in for the domain.
double fill_distance(const Array2& sensors, const Array2& evaluation);

// 0.5 * min_{i != j} |x_i - x_j|_2; needs at least two points.
double separation_radius(const Array2& points);

// obs[i, c] = (field[i, c] + eps) * mask[i] with eps ~ N(0, (noise_level * channel_std[c])^2).
// An empty channel_std means unit scale for every channel.
ConditioningInstance build_conditioning(const PointCloud& cloud, const SensorSet& sensors, const Array2& field,
                                        double noise_level, std::span<const double> channel_std, std::uint64_t seed);

// Multiplies observations by the sensor mask again; idempotent on built instances.
void apply_mask(ConditioningInstance& instance, const SensorSet& sensors);

// Instance observing the whole cloud without noise (the reference condition).
ConditioningInstance full_observation(const PointCloud& cloud, const Array2& field);

struct BoundingBox {
    std::vector<double> lo;
    std::vector<double> hi;
};

BoundingBox bounding_box(std::span<const PointCloud> clouds);

// Affine map of each axis of the box onto [-1, 1]; degenerate axes map to 0.
Array2 normalize_coords(const Array2& coords, const BoundingBox& box);

// Tensor-product grid with `per_axis` points per axis on [lo, hi]^d.
Array2 uniform_grid(std::size_t d, std::size_t per_axis, double lo = -1.0, double hi = 1.0);

} // namespace geoflow
