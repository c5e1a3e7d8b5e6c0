#include "geoflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoflow/errors.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

} // namespace

void validate_cloud(const PointCloud& cloud)
{
    if (cloud.dim() < 1 || cloud.dim() > 3) {
        throw DimensionError("point cloud dimension must be 1, 2 or 3, got " + std::to_string(cloud.dim()));
    }
    if (cloud.size() < 1) {
        throw DimensionError("point cloud must contain at least one node");
    }
}

SensorSet SensorSet::from_indices(std::vector<std::size_t> indices, std::size_t m)
{
    std::sort(indices.begin(), indices.end());
    SensorSet set;
    set.mask.assign(m, 0.0);
    for (const auto i : indices) {
        if (i >= m) {
            throw DimensionError("sensor index " + std::to_string(i) + " outside cloud of size " + std::to_string(m));
        }
        set.mask[i] = 1.0;
    }
    set.indices = std::move(indices);
    return set;
}

SensorSet SensorSet::all(std::size_t m)
{
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) {
        idx[i] = i;
    }
    return from_indices(std::move(idx), m);
}

SensorSet SensorSet::none(std::size_t m) { return from_indices({}, m); }

std::size_t sensor_count(double fraction, std::size_t m)
{
    const double raw = fraction * static_cast<double>(m);
    return std::min(m, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

SensorSet sample_sensors(const PointCloud& cloud, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ParameterError("sensor fraction must lie in (0, 1], got " + std::to_string(fraction));
    }
    const std::size_t m = cloud.size();
    const std::size_t count = sensor_count(fraction, m);
    if (count < 1) {
        throw ParameterError("sensor fraction selects no nodes");
    }
    CounterRng rng(seed);
    auto order = rng.permutation(m);
    order.resize(count);
    return SensorSet::from_indices(std::move(order), m);
}

double fill_distance(const Array2& sensors, const Array2& evaluation)
{
    if (sensors.rows == 0) {
        throw DomainError("fill_distance: empty sensor set");
    }
    if (evaluation.rows == 0) {
        throw DomainError("fill_distance: empty evaluation set");
    }
    if (sensors.cols != evaluation.cols) {
        throw DimensionError("fill_distance: sensor and evaluation dimensions differ");
    }
    double worst = 0.0;
    for (std::size_t e = 0; e < evaluation.rows; ++e) {
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t x = 0; x < sensors.rows; ++x) {
            nearest = std::min(nearest, squared_distance(evaluation.row(e), sensors.row(x)));
        }
        worst = std::max(worst, nearest);
    }
    return std::sqrt(worst);
}

double separation_radius(const Array2& points)
{
    if (points.rows < 2) {
        throw DomainError("separation_radius: needs at least two points");
    }
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.rows; ++i) {
        for (std::size_t j = i + 1; j < points.rows; ++j) {
            closest = std::min(closest, squared_distance(points.row(i), points.row(j)));
        }
    }
    return 0.5 * std::sqrt(closest);
}

ConditioningInstance build_conditioning(const PointCloud& cloud, const SensorSet& sensors, const Array2& field,
                                        double noise_level, std::span<const double> channel_std, std::uint64_t seed)
{
    const std::size_t m = cloud.size();
    if (field.rows != m) {
        throw DimensionError("field has " + std::to_string(field.rows) + " rows but the cloud has " + std::to_string(m) +
                             " nodes");
    }
    if (sensors.mask.size() != m) {
        throw DimensionError("sensor mask length does not match the cloud");
    }
    const std::size_t p = field.cols;
    if (!channel_std.empty() && channel_std.size() != p) {
        throw DimensionError("channel_std length does not match the field channel count");
    }
    if (noise_level < 0.0) {
        throw ParameterError("noise level must be non-negative");
    }

    ConditioningInstance inst;
    inst.coords = cloud.coords;
    inst.mask = sensors.mask;
    inst.obs = Array2(m, p);
    CounterRng rng(seed);
    // Noise is drawn for every node so a node's perturbation does not depend on which
    // other nodes are sensors.
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < p; ++c) {
            const double sigma = noise_level * (channel_std.empty() ? 1.0 : channel_std[c]);
            const double eps = noise_level > 0.0 ? sigma * rng.normal() : 0.0;
            inst.obs(i, c) = (field(i, c) + eps) * sensors.mask[i];
        }
    }
    return inst;
}

void apply_mask(ConditioningInstance& instance, const SensorSet& sensors)
{
    if (sensors.mask.size() != instance.size()) {
        throw DimensionError("sensor mask length does not match the instance");
    }
    instance.mask = sensors.mask;
    for (std::size_t i = 0; i < instance.size(); ++i) {
        for (auto& v : instance.obs.row(i)) {
            v *= sensors.mask[i];
        }
    }
}

ConditioningInstance full_observation(const PointCloud& cloud, const Array2& field)
{
    return build_conditioning(cloud, SensorSet::all(cloud.size()), field, 0.0, {}, 0);
}

BoundingBox bounding_box(std::span<const PointCloud> clouds)
{
    if (clouds.empty()) {
        throw DomainError("bounding_box: no clouds");
    }
    const std::size_t d = clouds.front().dim();
    BoundingBox box{std::vector<double>(d, std::numeric_limits<double>::infinity()),
                    std::vector<double>(d, -std::numeric_limits<double>::infinity())};
    for (const auto& cloud : clouds) {
        if (cloud.dim() != d) {
            throw DimensionError("bounding_box: clouds have different dimensions");
        }
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                box.lo[k] = std::min(box.lo[k], cloud.coords(i, k));
                box.hi[k] = std::max(box.hi[k], cloud.coords(i, k));
            }
        }
    }
    return box;
}

Array2 normalize_coords(const Array2& coords, const BoundingBox& box)
{
    if (coords.cols != box.lo.size()) {
        throw DimensionError("normalize_coords: box dimension does not match coordinates");
    }
    Array2 out(coords.rows, coords.cols);
    for (std::size_t k = 0; k < coords.cols; ++k) {
        const double width = box.hi[k] - box.lo[k];
        const double centre = 0.5 * (box.hi[k] + box.lo[k]);
        for (std::size_t i = 0; i < coords.rows; ++i) {
            out(i, k) = width > 0.0 ? 2.0 * (coords(i, k) - centre) / width : 0.0;
        }
    }
    return out;
}

Array2 uniform_grid(std::size_t d, std::size_t per_axis, double lo, double hi)
{
    if (d < 1 || d > 3 || per_axis < 2) {
        throw ParameterError("uniform_grid: need 1 <= d <= 3 and at least two points per axis");
    }
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) {
        total *= per_axis;
    }
    Array2 grid(total, d);
    const double step = (hi - lo) / static_cast<double>(per_axis - 1);
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t rest = i;
        for (std::size_t k = 0; k < d; ++k) {
            grid(i, k) = lo + step * static_cast<double>(rest % per_axis);
            rest /= per_axis;
        }
    }
    return grid;
}

} // namespace geoflow
