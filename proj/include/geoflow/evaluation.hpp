#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "geoflow/geofae.hpp"
#include "geoflow/latent_flow.hpp"
#include "geoflow/synthetic.hpp"

namespace geoflow {

// Test-time corruption of one sample. Noise is relative to the per-channel training
// std, which is 1 in normalized units.
struct EvalSettings {
    double fraction = 1.0;
    double noise_level = 0.01;
    std::size_t steps = 10;
    std::size_t ensemble_size = 8;
    std::uint64_t seed = 0;
};

// Sensors from derive_seed(seed, {index, 0}), noise from derive_seed(seed, {index, 1}).
ConditioningInstance evaluation_instance(const FieldSample& normalized_sample, std::size_t index, double fraction,
                                         double noise_level, std::uint64_t seed);

struct EvalRow {
    std::size_t sample = 0;
    double fae_rel_l2 = 0.0;
    double flow_rel_l2 = 0.0; // NaN without a flow model
    double mean_std = 0.0;    // ensemble std in data units, averaged over nodes and channels
    double max_std = 0.0;
};

// Per-sample errors in data units on the cloud nodes of `raw` samples. The models work in
// the normalized space defined by `stats`. `flow` may be null.
std::vector<EvalRow> evaluate(const GeoFae& fae, const FlowModel* flow, const FieldDataset& raw,
                              const NormalizationStats& stats, std::span<const std::size_t> indices,
                              const EvalSettings& settings);

double mean_fae_error(std::span<const EvalRow> rows);
double mean_flow_error(std::span<const EvalRow> rows);

// Mean relative L2 of the ensemble mean for each step count, with identical sensors,
// noise and member seeds across step counts.
std::vector<double> step_study(const GeoFae& fae, const FlowModel& flow, const FieldDataset& raw,
                               const NormalizationStats& stats, std::span<const std::size_t> indices,
                               std::span<const std::size_t> steps, const EvalSettings& settings);

struct FractionPoint {
    double fraction = 0.0;
    double fae_error = 0.0;
    double flow_error = 0.0; // NaN without a flow model
};

std::vector<FractionPoint> fraction_study(const GeoFae& fae, const FlowModel* flow, const FieldDataset& raw,
                                          const NormalizationStats& stats, std::span<const std::size_t> indices,
                                          std::span<const double> fractions, const EvalSettings& settings);

// Number of adjacent pairs where the error increases, and the largest relative increase.
struct MonotonicityReport {
    std::size_t inversions = 0;
    double worst_increase = 0.0;
};
MonotonicityReport nonincreasing_check(std::span<const double> values);

// Mean relative L2 of Gaussian-kernel ridge interpolation from the same corrupted
// instances, computed in data units.
double rbf_baseline(const FieldDataset& raw, const NormalizationStats& stats, std::span<const std::size_t> indices,
                    const EvalSettings& settings, double lengthscale, double ridge);

} // namespace geoflow
