#include "geoflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoflow/errors.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_indices(const FieldDataset& raw, std::span<const std::size_t> indices)
{
    if (indices.empty()) {
        throw ParameterError("evaluation needs at least one sample");
    }
    for (auto i : indices) {
        if (i >= raw.size()) {
            throw ParameterError("evaluation index " + std::to_string(i) + " is out of range");
        }
    }
}

std::vector<std::uint64_t> member_seeds(const EvalSettings& settings, std::size_t index)
{
    std::vector<std::uint64_t> seeds(settings.ensemble_size);
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        seeds[k] = derive_seed(settings.seed, {index, 2, k});
    }
    return seeds;
}

// Ensemble mean and std in data units.
void denormalized_moments(const PosteriorEnsemble& ens, const NormalizationStats& stats, Array2& mean, Array2& std)
{
    std::vector<Array2> members;
    members.reserve(ens.members.size());
    for (const auto& m : ens.members) {
        members.push_back(denormalize_values(m, stats));
    }
    ensemble_moments(members, mean, std);
}

} // namespace

ConditioningInstance evaluation_instance(const FieldSample& normalized_sample, std::size_t index, double fraction,
                                         double noise_level, std::uint64_t seed)
{
    const SensorSet sensors = sample_sensors(normalized_sample.cloud, fraction, derive_seed(seed, {index, 0}));
    return build_conditioning(normalized_sample.cloud, sensors, normalized_sample.values, noise_level, {},
                              derive_seed(seed, {index, 1}));
}

std::vector<EvalRow> evaluate(const GeoFae& fae, const FlowModel* flow, const FieldDataset& raw,
                              const NormalizationStats& stats, std::span<const std::size_t> indices,
                              const EvalSettings& settings)
{
    require_indices(raw, indices);
    if (flow != nullptr && settings.ensemble_size < 1) {
        throw ParameterError("ensemble size must be at least 1");
    }
    std::vector<EvalRow> rows;
    rows.reserve(indices.size());
    for (const auto i : indices) {
        const FieldSample& target = raw.samples[i];
        const FieldSample norm{PointCloud{normalize_coords(target.cloud.coords, stats.box), target.cloud.domain_id},
                               normalize_values(target.values, stats)};
        const auto inst = evaluation_instance(norm, i, settings.fraction, settings.noise_level, settings.seed);
        EvalRow row;
        row.sample = i;
        row.fae_rel_l2 =
            relative_l2_mean(denormalize_values(reconstruct(fae, inst, norm.cloud.coords), stats), target.values);
        row.flow_rel_l2 = kNaN;
        if (flow != nullptr) {
            const auto seeds = member_seeds(settings, i);
            const auto ens = posterior_ensemble(*flow, fae, inst, norm.cloud.coords, settings.steps, seeds);
            Array2 mean;
            Array2 std;
            denormalized_moments(ens, stats, mean, std);
            row.flow_rel_l2 = relative_l2_mean(mean, target.values);
            double total = 0.0;
            for (double v : std.values) {
                total += v;
                row.max_std = std::max(row.max_std, v);
            }
            row.mean_std = total / static_cast<double>(std.values.size());
        }
        rows.push_back(row);
    }
    return rows;
}

double mean_fae_error(std::span<const EvalRow> rows)
{
    double s = 0.0;
    for (const auto& r : rows) {
        s += r.fae_rel_l2;
    }
    return rows.empty() ? kNaN : s / static_cast<double>(rows.size());
}

double mean_flow_error(std::span<const EvalRow> rows)
{
    double s = 0.0;
    for (const auto& r : rows) {
        s += r.flow_rel_l2;
    }
    return rows.empty() ? kNaN : s / static_cast<double>(rows.size());
}

std::vector<double> step_study(const GeoFae& fae, const FlowModel& flow, const FieldDataset& raw,
                               const NormalizationStats& stats, std::span<const std::size_t> indices,
                               std::span<const std::size_t> steps, const EvalSettings& settings)
{
    std::vector<double> out;
    out.reserve(steps.size());
    for (const auto n : steps) {
        EvalSettings s = settings;
        s.steps = n;
        out.push_back(mean_flow_error(evaluate(fae, &flow, raw, stats, indices, s)));
    }
    return out;
}

std::vector<FractionPoint> fraction_study(const GeoFae& fae, const FlowModel* flow, const FieldDataset& raw,
                                          const NormalizationStats& stats, std::span<const std::size_t> indices,
                                          std::span<const double> fractions, const EvalSettings& settings)
{
    std::vector<FractionPoint> out;
    out.reserve(fractions.size());
    for (const double f : fractions) {
        EvalSettings s = settings;
        s.fraction = f;
        const auto rows = evaluate(fae, flow, raw, stats, indices, s);
        out.push_back(FractionPoint{f, mean_fae_error(rows), flow != nullptr ? mean_flow_error(rows) : kNaN});
    }
    return out;
}

MonotonicityReport nonincreasing_check(std::span<const double> values)
{
    MonotonicityReport r;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[i - 1]) {
            ++r.inversions;
            r.worst_increase = std::max(r.worst_increase, (values[i] - values[i - 1]) / values[i - 1]);
        }
    }
    return r;
}

double rbf_baseline(const FieldDataset& raw, const NormalizationStats& stats, std::span<const std::size_t> indices,
                    const EvalSettings& settings, double lengthscale, double ridge)
{
    require_indices(raw, indices);
    double total = 0.0;
    for (const auto i : indices) {
        const FieldSample& target = raw.samples[i];
        const FieldSample norm{PointCloud{normalize_coords(target.cloud.coords, stats.box), target.cloud.domain_id},
                               normalize_values(target.values, stats)};
        const auto inst = evaluation_instance(norm, i, settings.fraction, settings.noise_level, settings.seed);
        const Array2 pred = rbf_interpolate(inst, norm.cloud.coords, lengthscale, ridge);
        total += relative_l2_mean(denormalize_values(pred, stats), target.values);
    }
    return total / static_cast<double>(indices.size());
}

} // namespace geoflow
