#include "geoflow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "geoflow/errors.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

namespace {

constexpr std::size_t kBestCandidates = 30;
constexpr double kDiskBase = 0.7;
constexpr std::size_t kDiskModes = 3; // angular modes 2..4

float to_f32(double v) { return static_cast<float>(v); }

void round_to_f32(Array2& a)
{
    for (auto& v : a.values) {
        v = static_cast<double>(to_f32(v));
    }
}

std::vector<double> disk_shape_params(std::uint64_t seed)
{
    CounterRng rng(seed);
    std::vector<double> params(2 * kDiskModes);
    for (auto& c : params) {
        c = rng.uniform(-0.1, 0.1);
    }
    return params;
}

} // namespace

void validate_dataset(const FieldDataset& dataset)
{
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const auto& sample = dataset.samples[s];
        validate_cloud(sample.cloud);
        if (sample.cloud.dim() != dataset.meta.d || sample.values.cols != dataset.meta.p) {
            throw DimensionError("sample " + std::to_string(s) + " does not share the dataset's d/p");
        }
        if (sample.values.rows != sample.cloud.size()) {
            throw DimensionError("sample " + std::to_string(s) + " has mismatched node and value counts");
        }
        for (const double v : sample.values.values) {
            if (!std::isfinite(v)) {
                throw DomainError("sample " + std::to_string(s) + " holds a non-finite value");
            }
        }
    }
}

TrainTestSplit split_dataset(std::size_t n)
{
    std::size_t n_test = n / 5;
    if (n >= 2 && n_test == 0) {
        n_test = 1;
    }
    TrainTestSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        (i < n - n_test ? split.train : split.test).push_back(i);
    }
    return split;
}

NormalizationStats compute_stats(const FieldDataset& dataset, std::span<const std::size_t> indices)
{
    if (indices.empty()) {
        throw DomainError("compute_stats: no samples selected");
    }
    const std::size_t p = dataset.meta.p;
    NormalizationStats stats;
    stats.mean.assign(p, 0.0);
    stats.std.assign(p, 0.0);
    std::size_t count = 0;
    std::vector<PointCloud> clouds;
    for (const auto idx : indices) {
        const auto& values = dataset.samples.at(idx).values;
        for (std::size_t i = 0; i < values.rows; ++i) {
            for (std::size_t c = 0; c < p; ++c) {
                stats.mean[c] += values(i, c);
            }
        }
        count += values.rows;
        clouds.push_back(dataset.samples[idx].cloud);
    }
    for (auto& m : stats.mean) {
        m /= static_cast<double>(count);
    }
    for (const auto idx : indices) {
        const auto& values = dataset.samples[idx].values;
        for (std::size_t i = 0; i < values.rows; ++i) {
            for (std::size_t c = 0; c < p; ++c) {
                const double diff = values(i, c) - stats.mean[c];
                stats.std[c] += diff * diff;
            }
        }
    }
    for (auto& s : stats.std) {
        s = std::sqrt(s / static_cast<double>(count));
        if (!(s > 0.0)) {
            s = 1.0;
        }
    }
    stats.box = bounding_box(clouds);
    return stats;
}

Array2 normalize_values(const Array2& values, const NormalizationStats& stats)
{
    Array2 out(values.rows, values.cols);
    for (std::size_t i = 0; i < values.rows; ++i) {
        for (std::size_t c = 0; c < values.cols; ++c) {
            out(i, c) = (values(i, c) - stats.mean[c]) / stats.std[c];
        }
    }
    return out;
}

Array2 denormalize_values(const Array2& values, const NormalizationStats& stats)
{
    Array2 out(values.rows, values.cols);
    for (std::size_t i = 0; i < values.rows; ++i) {
        for (std::size_t c = 0; c < values.cols; ++c) {
            out(i, c) = values(i, c) * stats.std[c] + stats.mean[c];
        }
    }
    return out;
}

FieldDataset normalized(const FieldDataset& dataset, const NormalizationStats& stats)
{
    FieldDataset out;
    out.meta = dataset.meta;
    out.meta.stats = stats;
    out.samples.reserve(dataset.size());
    for (const auto& sample : dataset.samples) {
        FieldSample s;
        s.cloud.domain_id = sample.cloud.domain_id;
        s.cloud.coords = normalize_coords(sample.cloud.coords, stats.box);
        s.values = normalize_values(sample.values, stats);
        out.samples.push_back(std::move(s));
    }
    return out;
}

// ---- domains ----------------------------------------------------------------------

DomainKind parse_domain_kind(const std::string& name)
{
    if (name == "notch_triangle") {
        return DomainKind::notch_triangle;
    }
    if (name == "annulus") {
        return DomainKind::annulus;
    }
    if (name == "perturbed_disk") {
        return DomainKind::perturbed_disk;
    }
    throw ParameterError("unknown domain kind '" + name + "' (expected notch_triangle, annulus or perturbed_disk)");
}

std::string to_string(DomainKind kind)
{
    switch (kind) {
    case DomainKind::notch_triangle:
        return "notch_triangle";
    case DomainKind::annulus:
        return "annulus";
    case DomainKind::perturbed_disk:
        return "perturbed_disk";
    }
    return "unknown";
}

bool in_domain(DomainKind kind, double x, double y, std::span<const double> shape_params)
{
    switch (kind) {
    case DomainKind::annulus: {
        const double r = std::hypot(x, y);
        return r >= kAnnulusInner && r <= kAnnulusOuter;
    }
    case DomainKind::notch_triangle: {
        // Triangle (-1,-1), (1,-1), (0,1): y >= -1 and |x| <= (1 - y) / 2.
        const bool inside = y >= -1.0 && std::abs(x) <= 0.5 * (1.0 - y);
        const bool in_notch = std::abs(x) < kNotchHalfWidth && y < kNotchTop;
        return inside && !in_notch;
    }
    case DomainKind::perturbed_disk: {
        const double r = std::hypot(x, y);
        const double theta = std::atan2(y, x);
        double radius = 1.0;
        for (std::size_t k = 0; k < shape_params.size() / 2; ++k) {
            const double mode = static_cast<double>(k + 2);
            radius += shape_params[2 * k] * std::cos(mode * theta) + shape_params[2 * k + 1] * std::sin(mode * theta);
        }
        return r <= kDiskBase * radius;
    }
    }
    return false;
}

PointCloud gen_domain(DomainKind kind, std::size_t n_points, std::uint64_t seed)
{
    if (n_points < 8) {
        throw ParameterError("gen_domain needs at least 8 points");
    }
    const std::vector<double> shape =
        kind == DomainKind::perturbed_disk ? disk_shape_params(derive_seed(seed, {0})) : std::vector<double>{};
    CounterRng rng(derive_seed(seed, {1}));
    auto draw_inside = [&](double& x, double& y) {
        do {
            x = rng.uniform(-1.0, 1.0);
            y = rng.uniform(-1.0, 1.0);
        } while (!in_domain(kind, x, y, shape));
    };

    PointCloud cloud{Array2(n_points, 2), to_string(kind)};
    draw_inside(cloud.coords(0, 0), cloud.coords(0, 1));
    for (std::size_t i = 1; i < n_points; ++i) {
        double best_x = 0.0;
        double best_y = 0.0;
        double best_gap = -1.0;
        for (std::size_t c = 0; c < kBestCandidates; ++c) {
            double x = 0.0;
            double y = 0.0;
            draw_inside(x, y);
            double gap = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < i; ++j) {
                const double dx = x - cloud.coords(j, 0);
                const double dy = y - cloud.coords(j, 1);
                gap = std::min(gap, dx * dx + dy * dy);
            }
            if (gap > best_gap) {
                best_gap = gap;
                best_x = x;
                best_y = y;
            }
        }
        cloud.coords(i, 0) = best_x;
        cloud.coords(i, 1) = best_y;
    }
    return cloud;
}

// ---- fields -----------------------------------------------------------------------

FieldSample grf_sample(const PointCloud& cloud, double lengthscale, double amplitude, std::uint64_t seed,
                       std::size_t channels)
{
    if (!(lengthscale > 0.0)) {
        throw ParameterError("GRF lengthscale must be positive");
    }
    if (channels < 1) {
        throw ParameterError("GRF needs at least one channel");
    }
    const std::size_t m = cloud.size();
    FieldSample sample{cloud, Array2(m, channels)};
    if (amplitude == 0.0) {
        return sample;
    }
    Eigen::MatrixXd kernel(m, m);
    const double inv_two_l2 = 1.0 / (2.0 * lengthscale * lengthscale);
    const double s2 = amplitude * amplitude;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < cloud.dim(); ++k) {
                const double diff = cloud.coords(i, k) - cloud.coords(j, k);
                r2 += diff * diff;
            }
            const double v = s2 * std::exp(-r2 * inv_two_l2) + (i == j ? kGrfJitter : 0.0);
            kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            kernel(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(kernel);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("GRF covariance Cholesky failed for " + std::to_string(m) +
                             " nodes; the 1e-8 jitter is too small for this lengthscale/amplitude, so use a shorter "
                             "lengthscale, fewer or better separated nodes");
    }
    const Eigen::MatrixXd lower = llt.matrixL();
    CounterRng rng(seed);
    for (std::size_t c = 0; c < channels; ++c) {
        Eigen::VectorXd xi(m);
        for (std::size_t i = 0; i < m; ++i) {
            xi(static_cast<Eigen::Index>(i)) = rng.normal();
        }
        const Eigen::VectorXd u = lower * xi;
        for (std::size_t i = 0; i < m; ++i) {
            sample.values(i, c) = u(static_cast<Eigen::Index>(i));
        }
    }
    return sample;
}

FieldSample harmonic_field(const PointCloud& cloud, std::span<const std::pair<double, double>> coeffs)
{
    const std::size_t m = cloud.size();
    FieldSample sample{cloud, Array2(m, 1)};
    for (std::size_t i = 0; i < m; ++i) {
        const std::complex<double> z(cloud.coords(i, 0), cloud.dim() > 1 ? cloud.coords(i, 1) : 0.0);
        std::complex<double> power(1.0, 0.0);
        double u = 0.0;
        for (const auto& [a, b] : coeffs) {
            u += a * power.real() + b * power.imag();
            power *= z;
        }
        sample.values(i, 0) = u;
    }
    return sample;
}

FieldDataset generate_dataset(const GeneratorSpec& spec)
{
    if (spec.field != "grf" && spec.field != "harmonic") {
        throw ParameterError("unknown field generator '" + spec.field + "' (expected grf or harmonic)");
    }
    FieldDataset dataset;
    dataset.meta.d = 2;
    dataset.meta.p = 1;
    dataset.meta.generator = spec.field + ":" + to_string(spec.kind);
    dataset.meta.root_seed = spec.seed;
    dataset.samples.reserve(spec.samples);
    for (std::size_t s = 0; s < spec.samples; ++s) {
        PointCloud cloud = gen_domain(spec.kind, spec.n_points, derive_seed(spec.seed, {s, 0}));
        round_to_f32(cloud.coords);
        FieldSample sample;
        if (spec.field == "grf") {
            sample = grf_sample(cloud, spec.lengthscale, spec.amplitude, derive_seed(spec.seed, {s, 1}));
        } else {
            CounterRng rng(derive_seed(spec.seed, {s, 1}));
            std::vector<std::pair<double, double>> coeffs(spec.harmonic_degree + 1);
            for (std::size_t k = 0; k < coeffs.size(); ++k) {
                const double weight = spec.amplitude / static_cast<double>(k + 1);
                coeffs[k] = {weight * rng.normal(), k == 0 ? 0.0 : weight * rng.normal()};
            }
            sample = harmonic_field(cloud, coeffs);
        }
        round_to_f32(sample.values);
        dataset.samples.push_back(std::move(sample));
    }
    const auto split = split_dataset(dataset.size());
    if (!split.train.empty()) {
        dataset.meta.stats = compute_stats(dataset, split.train);
    }
    return dataset;
}

// ---- corruption -------------------------------------------------------------------

CorruptedSample corrupt_sample(const FieldSample& sample, const CorruptionSpec& spec, std::uint64_t seed)
{
    if (spec.fractions.empty()) {
        throw ParameterError("corruption needs a non-empty fraction set");
    }
    CounterRng rng(seed);
    const double fraction = spec.fractions[static_cast<std::size_t>(rng.below(spec.fractions.size()))];
    const auto sensors = sample_sensors(sample.cloud, fraction, derive_seed(seed, {1}));
    CorruptedSample out;
    out.fraction = fraction;
    out.instance = build_conditioning(sample.cloud, sensors, sample.values, spec.noise_level, spec.channel_std,
                                      derive_seed(seed, {2}));
    return out;
}

CorruptionStream::CorruptionStream(const FieldDataset& dataset, std::vector<std::size_t> indices, CorruptionSpec spec,
                                   std::uint64_t seed)
    : dataset_(&dataset), indices_(std::move(indices)), spec_(std::move(spec)), seed_(seed)
{
    if (spec_.fractions.empty()) {
        throw ParameterError("corruption needs a non-empty fraction set");
    }
    for (const double f : spec_.fractions) {
        if (!(f > 0.0) || f > 1.0) {
            throw ParameterError("corruption fractions must lie in (0, 1]");
        }
    }
    if (indices_.empty()) {
        throw DomainError("corruption stream over an empty split");
    }
}

std::size_t CorruptionStream::sample_index_at(std::uint64_t position) const
{
    const std::uint64_t n = indices_.size();
    const std::uint64_t epoch = position / n;
    CounterRng order_rng(derive_seed(seed_, {0, epoch}));
    const auto order = order_rng.permutation(indices_.size());
    return indices_[order[position % n]];
}

CorruptionStream::Item CorruptionStream::at(std::uint64_t position) const
{
    const std::size_t idx = sample_index_at(position);
    const auto& sample = dataset_->samples[idx];
    auto corrupted = corrupt_sample(sample, spec_, derive_seed(seed_, {1, position}));
    return Item{std::move(corrupted.instance), &sample, idx, corrupted.fraction};
}

} // namespace geoflow
