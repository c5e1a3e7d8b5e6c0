#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geoflow/array2.hpp"
#include "geoflow/geometry.hpp"
#include "geoflow/latent_flow.hpp"
#include "geoflow/synthetic.hpp"

namespace geoflow {

// ---- field errors -----------------------------------------------------------------

// ||pred - target||_2 / ||target||_2 over all entries.
double relative_l2(const Array2& pred, const Array2& target);
// Per-channel relative L2.
std::vector<double> relative_l2_channels(const Array2& pred, const Array2& target);
// Per-channel relative L2 averaged across channels.
double relative_l2_mean(const Array2& pred, const Array2& target);

// ---- Wasserstein-2 ----------------------------------------------------------------

inline constexpr std::size_t kMaxAssignmentSize = 512;

struct Assignment {
    std::vector<std::size_t> column_of_row;
    double cost = 0.0;
};

// Minimum-cost perfect matching on a square cost matrix (shortest augmenting paths, O(n^3)).
Assignment solve_assignment(const Eigen::MatrixXd& cost);

// Empirical W2 between equally sized samples (rows are points). One dimension uses
// sorting; otherwise an exact assignment for n <= 512.
double empirical_w2(const Array2& a, const Array2& b);
// Exact assignment regardless of dimension (for cross-checks).
double assignment_w2(const Array2& a, const Array2& b);
double sorted_w2_1d(std::span<const double> a, std::span<const double> b);

struct GaussianSpec {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    // Throws DomainError unless cov is symmetric (1e-12) with eigenvalues >= -1e-10.
    void validate() const;
};

// Symmetric PSD square root by eigendecomposition, negative eigenvalues clamped to 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

// Closed-form W2 between Gaussians (Bures formula).
double gaussian_w2(const GaussianSpec& a, const GaussianSpec& b);

// Law of A z for z ~ g.
GaussianSpec pushforward(const Eigen::MatrixXd& a, const GaussianSpec& g);

// ---- theorem harness --------------------------------------------------------------

struct TheoremReport {
    double lhs = 0.0;      // W2(decoded model posterior, decoded true posterior)
    double lipschitz = 0.0; // L_D = largest singular value of the linear decoder
    double eps_flow = 0.0;
    double eps_rec = 0.0;
    double rhs = 0.0;
    double slack = 0.0; // rhs - lhs
};

// Linear decoder z -> A z + offset applied to the model posterior, A z to the true one.
TheoremReport theorem_harness(const Eigen::MatrixXd& a, const GaussianSpec& true_posterior,
                              const GaussianSpec& model_posterior, const Eigen::VectorXd& recon_offset);

// Random decoder, Gaussian pair and offset per trial, all derived from `seed`.
std::vector<TheoremReport> theorem_trials(std::size_t trials, std::size_t out_dim, std::size_t latent_dim,
                                          std::uint64_t seed);

// ---- sensor scaling ---------------------------------------------------------------

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

// Greedy farthest-point selection of m nodes starting from a seeded node: quasi-uniform.
SensorSet quasi_uniform_sensors(const PointCloud& cloud, std::size_t m, std::uint64_t seed);

// Field estimate at every node of the instance's cloud.
using Reconstructor = std::function<Array2(const ConditioningInstance& inst)>;

struct ScalingReport {
    std::vector<std::size_t> counts;
    std::vector<double> errors;
    std::vector<double> fill_distances;
    double slope = 0.0;
    double sobolev_order = 0.0;
};

// For each count: quasi-uniform sensors, noisy conditioning, reconstruction, mean relative
// L2 over samples and seeds. Fits the log-log slope of error against count.
ScalingReport sensor_scaling_study(const Reconstructor& reconstruct, std::span<const FieldSample> samples,
                                   std::span<const std::size_t> counts, std::span<const std::uint64_t> seeds,
                                   double noise_level, double sobolev_order);

// Value of the nearest observed node (mask > 0) at every node.
Array2 nearest_sensor_interpolation(const ConditioningInstance& inst);

// Gaussian-kernel ridge interpolation of the observed nodes, evaluated at `queries`.
Array2 rbf_interpolate(const ConditioningInstance& inst, const Array2& queries, double lengthscale, double ridge);

// ---- uncertainty ------------------------------------------------------------------

struct UncertaintySummary {
    Array2 std; // per query and channel, unbiased
    double mean_std = 0.0;
    double max_std = 0.0;
};

UncertaintySummary ensemble_uncertainty(const PosteriorEnsemble& ensemble);

// ---- CSV --------------------------------------------------------------------------

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

} // namespace geoflow
