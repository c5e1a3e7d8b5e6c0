#include "geoflow/geofae.hpp"

#include <cmath>
#include <numbers>

#include "geoflow/errors.hpp"

namespace geoflow {

GeoFaeConfig GeoFaeConfig::desk() { return GeoFaeConfig{}; }

GeoFaeConfig GeoFaeConfig::paper()
{
    GeoFaeConfig c;
    c.embed_dim = 256;
    c.latent_queries = 256;
    c.encoder_blocks = 8;
    c.decoder_blocks = 4;
    c.heads = 8;
    c.mlp_ratio = 2;
    c.fourier_bands = 128;
    c.fourier_std = 10.0;
    return c;
}

GeoFaeConfig GeoFaeConfig::preset(const std::string& name)
{
    if (name == "desk") {
        return desk();
    }
    if (name == "paper") {
        return paper();
    }
    throw ConfigError("unknown model preset '" + name + "' (expected desk or paper)");
}

void GeoFaeConfig::validate() const
{
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
        throw ConfigError("embed_dim must be a positive multiple of heads");
    }
    if (embed_dim % 4 != 0) {
        throw ConfigError("embed_dim must be divisible by 4 (coordinate/mask/observation split)");
    }
    if (latent_queries < 1 || encoder_blocks < 1 || decoder_blocks < 1) {
        throw ConfigError("latent_queries, encoder_blocks and decoder_blocks must be at least 1");
    }
    if (mlp_ratio < 1 || fourier_bands < 1 || channels < 1 || coord_dim < 1 || coord_dim > 3) {
        throw ConfigError("invalid mlp_ratio, fourier_bands, channels or coord_dim");
    }
}

Array2 fourier_embed(const Array2& coords, const Tensor& frequencies)
{
    const std::size_t bands = frequencies.rows();
    const std::size_t d = frequencies.cols();
    if (coords.cols != d) {
        throw DimensionError("fourier_embed: coordinates have " + std::to_string(coords.cols) +
                             " columns but the frequency matrix expects " + std::to_string(d));
    }
    const auto b = frequencies.data();
    Array2 out(coords.rows, 2 * bands);
    for (std::size_t i = 0; i < coords.rows; ++i) {
        for (std::size_t k = 0; k < bands; ++k) {
            double phase = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                phase += coords(i, j) * b[k * d + j];
            }
            phase *= 2.0 * std::numbers::pi;
            out(i, k) = std::sin(phase);
            out(i, bands + k) = std::cos(phase);
        }
    }
    return out;
}

GeoFae::GeoFae(const GeoFaeConfig& config, std::uint64_t seed) : config_(config)
{
    config_.validate();
    const std::size_t D = config_.embed_dim;
    Initializer init(seed);

    fourier_ = init.normal({config_.fourier_bands, config_.coord_dim}, config_.fourier_std);
    coord_proj_ = Linear::create(init, 2 * config_.fourier_bands, D / 2);
    mask_mlp_ = Mlp::create(init, 1, D, D / 4, false);
    obs_mlp_ = Mlp::create(init, config_.channels, D, D / 4, false);
    latent_queries_ = init.trunc_normal({config_.latent_queries, D});
    perceiver_ = CrossAttentionBlock::create(init, D, config_.heads, config_.mlp_ratio);
    latent_norm_ = LayerNorm::create(D);
    for (std::size_t l = 0; l < config_.encoder_blocks; ++l) {
        encoder_.push_back(SelfAttentionBlock::create(init, D, config_.heads, config_.mlp_ratio));
    }
    query_proj_ = Linear::create(init, 2 * config_.fourier_bands, D);
    for (std::size_t k = 0; k < config_.decoder_blocks; ++k) {
        decoder_.push_back(CrossAttentionBlock::create(init, D, config_.heads, config_.mlp_ratio));
    }
    head_norm_ = LayerNorm::create(D);
    head_ = Linear::create(init, D, config_.channels);
    register_parameters();
}

void GeoFae::register_parameters()
{
    params_.add("fae.fourier", fourier_, false, false);
    coord_proj_.collect(params_, "fae.coord_proj");
    mask_mlp_.collect(params_, "fae.mask_mlp");
    obs_mlp_.collect(params_, "fae.obs_mlp");
    params_.add("fae.latent_queries", latent_queries_, false);
    perceiver_.collect(params_, "fae.perceiver");
    latent_norm_.collect(params_, "fae.latent_norm");
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
        encoder_[l].collect(params_, "fae.encoder." + std::to_string(l));
    }
    query_proj_.collect(params_, "fae.query_proj");
    for (std::size_t k = 0; k < decoder_.size(); ++k) {
        decoder_[k].collect(params_, "fae.decoder." + std::to_string(k));
    }
    head_norm_.collect(params_, "fae.head_norm");
    head_.collect(params_, "fae.head");
}

Tensor GeoFae::embed_nodes(const ConditioningInstance& inst) const
{
    const std::size_t m = inst.size();
    if (m == 0) {
        throw DomainError("encoder input has no nodes");
    }
    if (inst.dim() != config_.coord_dim) {
        throw DimensionError("instance coordinates have dimension " + std::to_string(inst.dim()) +
                             ", model expects " + std::to_string(config_.coord_dim));
    }
    if (inst.channels() != config_.channels || inst.obs.rows != m || inst.mask.size() != m) {
        throw DimensionError("instance observations have " + std::to_string(inst.channels()) +
                             " channels, model expects " + std::to_string(config_.channels));
    }
    const Tensor coords = Tensor::from(fourier_embed(inst.coords, fourier_));
    const Tensor mask({m, 1}, inst.mask);
    const Tensor obs = Tensor::from(inst.obs);
    const std::vector<Tensor> parts{coord_proj_.forward(coords), mask_mlp_.forward(mask), obs_mlp_.forward(obs)};
    return concat_cols(parts);
}

Tensor GeoFae::perceiver(const Tensor& nodes) const { return perceiver_.forward(latent_queries_, nodes); }

LatentCode GeoFae::encode(const ConditioningInstance& inst) const
{
    Tensor z = latent_norm_.forward(perceiver(embed_nodes(inst)));
    for (const auto& block : encoder_) {
        z = block.forward(z);
    }
    return LatentCode{z};
}

Tensor GeoFae::decode(const LatentCode& code, const Array2& queries) const
{
    const std::size_t D = config_.embed_dim;
    if (code.tokens.rank() != 2 || code.tokens.cols() != D) {
        throw DimensionError("latent code has shape " + shape_string(code.tokens.shape()) + ", expected P x " +
                             std::to_string(D));
    }
    Tensor x = query_proj_.forward(Tensor::from(fourier_embed(queries, fourier_)));
    for (const auto& block : decoder_) {
        x = block.forward(x, code.tokens);
    }
    return head_.forward(head_norm_.forward(x));
}

void GeoFae::freeze()
{
    params_.set_requires_grad(false);
    frozen_ = true;
}

void GeoFae::unfreeze()
{
    params_.set_requires_grad(true);
    frozen_ = false;
}

void GeoFae::zero_encoder_residual_branches()
{
    perceiver_.attention.output.zero();
    perceiver_.mlp.fc2.zero();
    for (auto& block : encoder_) {
        block.attention.output.zero();
        block.mlp.fc2.zero();
    }
}

void GeoFae::zero_output_head() { head_.zero(); }

Tensor fae_loss(const GeoFae& model, const ConditioningInstance& inst, const FieldSample& target,
                std::span<const std::size_t> query_idx)
{
    if (query_idx.empty()) {
        throw ParameterError("fae_loss: empty query set");
    }
    if (target.values.rows != target.cloud.size()) {
        throw DimensionError("fae_loss: target values do not match the target cloud");
    }
    const Array2 queries = gather_rows(target.cloud.coords, query_idx);
    const Tensor truth = Tensor::from(gather_rows(target.values, query_idx));
    const Tensor prediction = model.decode(model.encode(inst), queries);
    return mse(prediction, truth);
}

Array2 reconstruct(const GeoFae& model, const ConditioningInstance& inst, const Array2& queries)
{
    NoGradGuard no_grad;
    return model.decode(model.encode(inst), queries).to_array2();
}

} // namespace geoflow
