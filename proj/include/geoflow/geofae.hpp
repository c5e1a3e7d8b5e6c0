#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geoflow/geometry.hpp"
#include "geoflow/nn.hpp"
#include "geoflow/synthetic.hpp"
#include "geoflow/tensor.hpp"

namespace geoflow {

struct GeoFaeConfig {
    std::size_t embed_dim = 32;       // D
    std::size_t latent_queries = 16;  // P
    std::size_t encoder_blocks = 2;   // L
    std::size_t decoder_blocks = 1;   // K
    std::size_t heads = 4;
    std::size_t mlp_ratio = 2;
    std::size_t fourier_bands = 16;
    double fourier_std = 0.25;
    std::size_t channels = 1; // p
    std::size_t coord_dim = 2; // d

    // Desk-scale defaults.
    static GeoFaeConfig desk();
    // Published architecture: D = P = 256, L = 8, K = 4, 8 heads, MLP ratio 2.
    static GeoFaeConfig paper();
    static GeoFaeConfig preset(const std::string& name);

    // Throws ConfigError on inconsistent sizes.
    void validate() const;
};

// Fixed-size latent tokens (P x D), independent of the input node count.
struct LatentCode {
    Tensor tokens;
};

// gamma(x) = [sin(2 pi x B^T), cos(2 pi x B^T)] for coords n x d and B bands x d.
Array2 fourier_embed(const Array2& coords, const Tensor& frequencies);

// Geometric function autoencoder: Fourier + MLP node embeddings, a Perceiver
// cross-attention block onto trainable latent queries, L pre-norm self-attention
// blocks, and a cross-attention decoder evaluated at arbitrary query coordinates.
class GeoFae {
public:
    GeoFae(const GeoFaeConfig& config, std::uint64_t seed);

    [[nodiscard]] const GeoFaeConfig& config() const noexcept { return config_; }

    // Node embedding z (m x D): [coord projection | mask features | observation features].
    [[nodiscard]] Tensor embed_nodes(const ConditioningInstance& inst) const;
    // z_agg = perceiver block applied to the latent queries and node embeddings.
    [[nodiscard]] Tensor perceiver(const Tensor& nodes) const;
    [[nodiscard]] LatentCode encode(const ConditioningInstance& inst) const;
    // q x p field values at query coordinates (q x d).
    [[nodiscard]] Tensor decode(const LatentCode& code, const Array2& queries) const;

    [[nodiscard]] ParameterSet& parameters() noexcept { return params_; }
    [[nodiscard]] const ParameterSet& parameters() const noexcept { return params_; }

    // A frozen model records no gradients; required before it conditions a flow.
    void freeze();
    void unfreeze();
    [[nodiscard]] bool frozen() const noexcept { return frozen_; }

    // Zero every residual branch's output projection (attention and MLP) in the encoder.
    void zero_encoder_residual_branches();
    void zero_output_head();

    [[nodiscard]] const Tensor& latent_queries() const noexcept { return latent_queries_; }
    [[nodiscard]] const Tensor& fourier_frequencies() const noexcept { return fourier_; }
    [[nodiscard]] CrossAttentionBlock& perceiver_block() noexcept { return perceiver_; }

private:
    void register_parameters();

    GeoFaeConfig config_;
    Tensor fourier_; // bands x d, frozen
    Linear coord_proj_;
    Mlp mask_mlp_;
    Mlp obs_mlp_;
    Tensor latent_queries_;
    CrossAttentionBlock perceiver_;
    LayerNorm latent_norm_;
    std::vector<SelfAttentionBlock> encoder_;
    Linear query_proj_;
    std::vector<CrossAttentionBlock> decoder_;
    LayerNorm head_norm_;
    Linear head_;
    ParameterSet params_;
    bool frozen_ = false;
};

// Mean squared reconstruction error over the selected target nodes and channels.
Tensor fae_loss(const GeoFae& model, const ConditioningInstance& inst, const FieldSample& target,
                std::span<const std::size_t> query_idx);

// Decoded field at the target's own nodes, without recording gradients.
Array2 reconstruct(const GeoFae& model, const ConditioningInstance& inst, const Array2& queries);

} // namespace geoflow
