#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "geoflow/geofae.hpp"
#include "geoflow/nn.hpp"
#include "geoflow/tensor.hpp"

namespace geoflow {

struct FlowConfig {
    std::size_t embed_dim = 32; // must equal the autoencoder's D
    std::size_t blocks = 2;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 2;
    std::size_t time_embed_dim = 64; // sinusoidal frequency features
    std::size_t default_steps = 10;
    // Per-entry spread of the reference latents, relative to the unit source noise, after
    // the fitted normalization. Values above 1 keep the additive conditioning visible at small t.
    double latent_spread = 4.0;

    static FlowConfig desk(std::size_t embed_dim = 32);
    static FlowConfig paper(std::size_t embed_dim = 256);
    static FlowConfig preset(const std::string& name, std::size_t embed_dim);

    void validate() const;
};

// Velocity g(z_t, t, z_c). Models and analytic stubs share this signature.
using VelocityField = std::function<Tensor(const Tensor& z_t, double t, const Tensor& z_c)>;

// z_t = (1 - t) z0 + t z1: noise at t = 0, data at t = 1.
Tensor interpolate_zt(const Tensor& z0, const Tensor& z1, double t);

// Sinusoidal features of t * 1000 with max period 10^4, laid out as [cos | sin].
std::vector<double> timestep_features(double t, std::size_t dim);

struct DitBlock {
    LayerNorm norm_attention; // no affine
    LayerNorm norm_mlp;       // no affine
    MultiHeadAttention attention;
    Mlp mlp;
    Linear modulation; // conditioning -> 6D (shift, scale, gate) x 2, zero-initialized

    static DitBlock create(Initializer& init, std::size_t width, std::size_t heads, std::size_t mlp_ratio);
    [[nodiscard]] Tensor forward(const Tensor& x, const Tensor& conditioning) const;
    void collect(ParameterSet& params, const std::string& prefix) const;
};

// Diffusion-transformer velocity network over P x D latent tokens.
class FlowModel {
public:
    FlowModel(const FlowConfig& config, std::uint64_t seed);

    [[nodiscard]] const FlowConfig& config() const noexcept { return config_; }
    [[nodiscard]] Tensor velocity(const Tensor& z_t, double t, const Tensor& z_c) const;
    [[nodiscard]] VelocityField field() const;

    [[nodiscard]] ParameterSet& parameters() noexcept { return params_; }
    [[nodiscard]] const ParameterSet& parameters() const noexcept { return params_; }

    // Time-conditioning vector (1 x D) after the embedding MLP.
    [[nodiscard]] Tensor time_conditioning(double t) const;
    [[nodiscard]] const Linear& head() const noexcept { return head_; }
    [[nodiscard]] std::vector<DitBlock>& blocks() noexcept { return blocks_; }

    // Latents enter the velocity network as (z - shift) / scale. Until set, the map is the
    // identity; stage-2 training fits it on the reference latents of the training split.
    void set_latent_normalization(Tensor shift, double scale);
    [[nodiscard]] bool has_latent_normalization() const noexcept { return latent_shift_.defined(); }
    [[nodiscard]] const Tensor& latent_shift() const noexcept { return latent_shift_; }
    [[nodiscard]] double latent_scale() const noexcept { return latent_scale_; }
    [[nodiscard]] Tensor to_flow_space(const Tensor& z) const;
    [[nodiscard]] Tensor from_flow_space(const Tensor& w) const;

private:
    FlowConfig config_;
    Linear time_fc1_;
    Linear time_fc2_;
    std::vector<DitBlock> blocks_;
    LayerNorm final_norm_; // no affine
    Linear final_modulation_; // conditioning -> 2D (shift, scale), zero-initialized
    Linear head_;
    ParameterSet params_;
    Tensor latent_shift_;
    double latent_scale_ = 1.0;
};

// Shift by the mean reference latent and scale so the root-mean-square per-entry
// deviation becomes config().latent_spread.
void fit_latent_normalization(FlowModel& flow, std::span<const Tensor> references);

// Noise latent and time for one CRF draw.
struct CrfDraw {
    Tensor z0;
    double t = 0.0;
};

CrfDraw draw_crf(std::size_t rows, std::size_t cols, std::uint64_t seed);

// Mean over P x D entries of ((z1 - z0) - g(z_t, t, z_c))^2 for the draw at `seed`.
Tensor crf_objective(const VelocityField& field, const Tensor& z1, const Tensor& z_c, std::uint64_t seed);

// Conditional rectified-flow loss. z1 encodes the full-observation reference, z_c the
// partial instance; both are mapped into the flow's latent space. The encoder must be frozen.
Tensor crf_loss(const FlowModel& flow, const GeoFae& encoder, const ConditioningInstance& inst,
                const ConditioningInstance& reference, std::uint64_t seed);

// Forward Euler from z0 over [0, 1] in `steps` uniform steps.
Tensor euler_integrate(const VelocityField& field, const Tensor& z0, const Tensor& z_c, std::size_t steps);
// Same, starting from standard normal noise drawn from `seed`.
Tensor euler_sample(const VelocityField& field, const Tensor& z_c, std::size_t steps, std::uint64_t seed);

struct PosteriorEnsemble {
    std::vector<Array2> members; // decoded fields, q x p each
    Array2 mean;
    Array2 std; // unbiased; zero when there is a single member
};

// Decoded posterior draws at the given member seeds.
PosteriorEnsemble posterior_ensemble(const FlowModel& flow, const GeoFae& autoencoder, const ConditioningInstance& inst,
                                     const Array2& queries, std::size_t steps, std::span<const std::uint64_t> seeds);
// n_samples draws with member seeds derived from `seed`.
PosteriorEnsemble posterior_ensemble(const FlowModel& flow, const GeoFae& autoencoder, const ConditioningInstance& inst,
                                     std::size_t n_samples, const Array2& queries, std::size_t steps,
                                     std::uint64_t seed);

// Per-entry mean and unbiased standard deviation of equally shaped arrays.
void ensemble_moments(std::span<const Array2> members, Array2& mean, Array2& std);

} // namespace geoflow
