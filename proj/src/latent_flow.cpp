#include "geoflow/latent_flow.hpp"

#include <cmath>

#include "geoflow/errors.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

namespace {

// LN(x) * (1 + scale) + shift with row-broadcast modulation.
Tensor modulate(const Tensor& normed, const Tensor& shift, const Tensor& scale_row)
{
    return add_row(mul_row(normed, add_scalar(scale_row, 1.0)), shift);
}

LayerNorm plain_norm() { return LayerNorm{}; }

} // namespace

FlowConfig FlowConfig::desk(std::size_t embed_dim)
{
    FlowConfig c;
    c.embed_dim = embed_dim;
    return c;
}

FlowConfig FlowConfig::paper(std::size_t embed_dim)
{
    FlowConfig c;
    c.embed_dim = embed_dim;
    c.blocks = 8;
    c.heads = 8;
    c.time_embed_dim = 256;
    c.latent_spread = 1.0;
    return c;
}

FlowConfig FlowConfig::preset(const std::string& name, std::size_t embed_dim)
{
    if (name == "desk") {
        return desk(embed_dim);
    }
    if (name == "paper") {
        return paper(embed_dim);
    }
    throw ConfigError("unknown flow preset '" + name + "' (expected desk or paper)");
}

void FlowConfig::validate() const
{
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
        throw ConfigError("flow embed_dim must be a positive multiple of heads");
    }
    if (blocks < 1 || mlp_ratio < 1 || default_steps < 1) {
        throw ConfigError("flow blocks, mlp_ratio and default_steps must be at least 1");
    }
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
        throw ConfigError("time_embed_dim must be even and at least 2");
    }
    if (!(latent_spread > 0.0) || !std::isfinite(latent_spread)) {
        throw ConfigError("latent_spread must be positive and finite");
    }
}

Tensor interpolate_zt(const Tensor& z0, const Tensor& z1, double t)
{
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ParameterError("interpolation time must lie in [0, 1], got " + std::to_string(t));
    }
    if (z0.shape() != z1.shape()) {
        throw DimensionError("interpolate_zt: shapes " + shape_string(z0.shape()) + " and " +
                             shape_string(z1.shape()) + " differ");
    }
    if (t == 0.0) {
        return z0;
    }
    if (t == 1.0) {
        return z1;
    }
    return add(scale(z0, 1.0 - t), scale(z1, t));
}

std::vector<double> timestep_features(double t, std::size_t dim)
{
    const std::size_t half = dim / 2;
    std::vector<double> out(dim, 0.0);
    const double step = 1000.0 * t;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        out[k] = std::cos(step * freq);
        out[half + k] = std::sin(step * freq);
    }
    return out;
}

// ---- DiT block --------------------------------------------------------------------

DitBlock DitBlock::create(Initializer& init, std::size_t width, std::size_t heads, std::size_t mlp_ratio)
{
    DitBlock block;
    block.norm_attention = plain_norm();
    block.norm_mlp = plain_norm();
    block.attention = MultiHeadAttention::create(init, width, heads);
    block.mlp = Mlp::create(init, width, width * mlp_ratio, width, false);
    block.modulation = Linear::create(init, width, 6 * width, true);
    return block;
}

Tensor DitBlock::forward(const Tensor& x, const Tensor& conditioning) const
{
    const std::size_t w = x.cols();
    const Tensor mod = modulation.forward(silu(conditioning));
    const Tensor shift_attn = slice_cols(mod, 0, w);
    const Tensor scale_attn = slice_cols(mod, w, w);
    const Tensor gate_attn = slice_cols(mod, 2 * w, w);
    const Tensor shift_mlp = slice_cols(mod, 3 * w, w);
    const Tensor scale_mlp = slice_cols(mod, 4 * w, w);
    const Tensor gate_mlp = slice_cols(mod, 5 * w, w);

    const Tensor h = modulate(norm_attention.forward(x), shift_attn, scale_attn);
    const Tensor attended = add(x, mul_row(attention.forward(h, h), gate_attn));
    const Tensor g = modulate(norm_mlp.forward(attended), shift_mlp, scale_mlp);
    return add(attended, mul_row(mlp.forward(g), gate_mlp));
}

void DitBlock::collect(ParameterSet& params, const std::string& prefix) const
{
    attention.collect(params, prefix + ".attention");
    mlp.collect(params, prefix + ".mlp");
    modulation.collect(params, prefix + ".modulation");
}

// ---- flow model -------------------------------------------------------------------

FlowModel::FlowModel(const FlowConfig& config, std::uint64_t seed) : config_(config)
{
    config_.validate();
    const std::size_t D = config_.embed_dim;
    Initializer init(seed);
    time_fc1_ = Linear::create(init, config_.time_embed_dim, D);
    time_fc2_ = Linear::create(init, D, D);
    for (std::size_t b = 0; b < config_.blocks; ++b) {
        blocks_.push_back(DitBlock::create(init, D, config_.heads, config_.mlp_ratio));
    }
    final_norm_ = plain_norm();
    final_modulation_ = Linear::create(init, D, 2 * D, true);
    head_ = Linear::create(init, D, D);

    time_fc1_.collect(params_, "flow.time.fc1");
    time_fc2_.collect(params_, "flow.time.fc2");
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        blocks_[b].collect(params_, "flow.block." + std::to_string(b));
    }
    final_modulation_.collect(params_, "flow.final_modulation");
    head_.collect(params_, "flow.head");
}

Tensor FlowModel::time_conditioning(double t) const
{
    const Tensor features({1, config_.time_embed_dim}, timestep_features(t, config_.time_embed_dim));
    return time_fc2_.forward(silu(time_fc1_.forward(features)));
}

Tensor FlowModel::velocity(const Tensor& z_t, double t, const Tensor& z_c) const
{
    const std::size_t D = config_.embed_dim;
    if (z_t.rank() != 2 || z_t.cols() != D) {
        throw DimensionError("flow input has shape " + shape_string(z_t.shape()) + ", expected P x " +
                             std::to_string(D));
    }
    if (z_c.shape() != z_t.shape()) {
        throw DimensionError("conditioning latent has shape " + shape_string(z_c.shape()) + ", expected " +
                             shape_string(z_t.shape()));
    }
    const Tensor c = time_conditioning(t);
    Tensor x = add(z_t, z_c);
    for (const auto& block : blocks_) {
        x = block.forward(x, c);
    }
    const Tensor mod = final_modulation_.forward(silu(c));
    const Tensor out = modulate(final_norm_.forward(x), slice_cols(mod, 0, D), slice_cols(mod, D, D));
    return head_.forward(out);
}

void FlowModel::set_latent_normalization(Tensor shift, double scale)
{
    if (shift.rank() != 2 || shift.cols() != config_.embed_dim) {
        throw DimensionError("latent shift has shape " + shape_string(shift.shape()) + ", expected P x " +
                             std::to_string(config_.embed_dim));
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw ParameterError("latent scale must be positive and finite");
    }
    latent_shift_ = Tensor(shift.shape(), std::vector<double>(shift.data().begin(), shift.data().end()));
    latent_scale_ = scale;
}

Tensor FlowModel::to_flow_space(const Tensor& z) const
{
    if (!has_latent_normalization()) {
        return z;
    }
    if (z.shape() != latent_shift_.shape()) {
        throw DimensionError("latent has shape " + shape_string(z.shape()) + ", flow expects " +
                             shape_string(latent_shift_.shape()));
    }
    return scale(sub(z, latent_shift_), 1.0 / latent_scale_);
}

Tensor FlowModel::from_flow_space(const Tensor& w) const
{
    if (!has_latent_normalization()) {
        return w;
    }
    if (w.shape() != latent_shift_.shape()) {
        throw DimensionError("latent has shape " + shape_string(w.shape()) + ", flow expects " +
                             shape_string(latent_shift_.shape()));
    }
    return add(scale(w, latent_scale_), latent_shift_);
}

void fit_latent_normalization(FlowModel& flow, std::span<const Tensor> references)
{
    if (references.empty()) {
        throw ParameterError("latent normalization needs at least one reference latent");
    }
    const Shape shape = references.front().shape();
    const double n = static_cast<double>(references.size());
    std::vector<double> mean(references.front().numel(), 0.0);
    for (const auto& z : references) {
        if (z.shape() != shape) {
            throw DimensionError("reference latents have different shapes");
        }
        const auto d = z.data();
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] += d[i] / n;
        }
    }
    double ss = 0.0;
    for (const auto& z : references) {
        const auto d = z.data();
        for (std::size_t i = 0; i < mean.size(); ++i) {
            ss += (d[i] - mean[i]) * (d[i] - mean[i]);
        }
    }
    const double rms = std::sqrt(ss / (n * static_cast<double>(mean.size())));
    // A single reference (or identical ones) carries no spread to normalize by.
    flow.set_latent_normalization(Tensor(shape, std::move(mean)),
                                  (rms > 0.0 ? rms : 1.0) / flow.config().latent_spread);
}

VelocityField FlowModel::field() const
{
    return [this](const Tensor& z_t, double t, const Tensor& z_c) { return velocity(z_t, t, z_c); };
}

// ---- objective and sampling -------------------------------------------------------

CrfDraw draw_crf(std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    CounterRng noise(derive_seed(seed, {0}));
    std::vector<double> z0(rows * cols);
    for (auto& v : z0) {
        v = noise.normal();
    }
    CounterRng time(derive_seed(seed, {1}));
    return CrfDraw{Tensor({rows, cols}, std::move(z0)), time.uniform()};
}

Tensor crf_objective(const VelocityField& field, const Tensor& z1, const Tensor& z_c, std::uint64_t seed)
{
    const CrfDraw draw = draw_crf(z1.rows(), z1.cols(), seed);
    const Tensor z_t = interpolate_zt(draw.z0, z1, draw.t);
    const Tensor target = sub(z1, draw.z0);
    return mse(field(z_t, draw.t, z_c), target);
}

Tensor crf_loss(const FlowModel& flow, const GeoFae& encoder, const ConditioningInstance& inst,
                const ConditioningInstance& reference, std::uint64_t seed)
{
    if (!encoder.frozen()) {
        throw ContractError("crf_loss requires a frozen autoencoder; call freeze() after stage-1 training");
    }
    Tensor z1;
    Tensor z_c;
    {
        NoGradGuard no_grad;
        z1 = flow.to_flow_space(encoder.encode(reference).tokens);
        z_c = flow.to_flow_space(encoder.encode(inst).tokens);
    }
    return crf_objective(flow.field(), z1, z_c, seed);
}

Tensor euler_integrate(const VelocityField& field, const Tensor& z0, const Tensor& z_c, std::size_t steps)
{
    if (steps < 1) {
        throw ParameterError("Euler sampling needs at least one step");
    }
    NoGradGuard no_grad;
    const double dt = 1.0 / static_cast<double>(steps);
    std::vector<double> z(z0.data().begin(), z0.data().end());
    for (std::size_t k = 0; k < steps; ++k) {
        const Tensor state(z0.shape(), z);
        const Tensor v = field(state, static_cast<double>(k) * dt, z_c);
        if (v.shape() != z0.shape()) {
            throw DimensionError("velocity field returned shape " + shape_string(v.shape()));
        }
        const auto vd = v.data();
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] += dt * vd[i];
        }
    }
    return Tensor(z0.shape(), std::move(z));
}

Tensor euler_sample(const VelocityField& field, const Tensor& z_c, std::size_t steps, std::uint64_t seed)
{
    if (steps < 1) {
        throw ParameterError("Euler sampling needs at least one step");
    }
    CounterRng rng(seed);
    std::vector<double> z0(z_c.numel());
    for (auto& v : z0) {
        v = rng.normal();
    }
    return euler_integrate(field, Tensor(z_c.shape(), std::move(z0)), z_c, steps);
}

void ensemble_moments(std::span<const Array2> members, Array2& mean, Array2& std)
{
    if (members.empty()) {
        throw ParameterError("ensemble has no members");
    }
    const std::size_t rows = members.front().rows;
    const std::size_t cols = members.front().cols;
    mean = Array2(rows, cols);
    std = Array2(rows, cols);
    const double n = static_cast<double>(members.size());
    for (const auto& m : members) {
        if (m.rows != rows || m.cols != cols) {
            throw DimensionError("ensemble members have different shapes");
        }
        for (std::size_t i = 0; i < m.values.size(); ++i) {
            mean.values[i] += m.values[i] / n;
        }
    }
    if (members.size() < 2) {
        return;
    }
    for (std::size_t i = 0; i < mean.values.size(); ++i) {
        double ss = 0.0;
        for (const auto& m : members) {
            const double d = m.values[i] - mean.values[i];
            ss += d * d;
        }
        std.values[i] = std::sqrt(ss / (n - 1.0));
    }
}

PosteriorEnsemble posterior_ensemble(const FlowModel& flow, const GeoFae& autoencoder, const ConditioningInstance& inst,
                                     const Array2& queries, std::size_t steps, std::span<const std::uint64_t> seeds)
{
    if (seeds.empty()) {
        throw ParameterError("posterior ensemble needs at least one sample");
    }
    NoGradGuard no_grad;
    const Tensor z_c = flow.to_flow_space(autoencoder.encode(inst).tokens);
    const VelocityField field = flow.field();
    PosteriorEnsemble out;
    out.members.reserve(seeds.size());
    for (const auto s : seeds) {
        const Tensor z1 = flow.from_flow_space(euler_sample(field, z_c, steps, s));
        out.members.push_back(autoencoder.decode(LatentCode{z1}, queries).to_array2());
    }
    ensemble_moments(out.members, out.mean, out.std);
    return out;
}

PosteriorEnsemble posterior_ensemble(const FlowModel& flow, const GeoFae& autoencoder, const ConditioningInstance& inst,
                                     std::size_t n_samples, const Array2& queries, std::size_t steps,
                                     std::uint64_t seed)
{
    if (n_samples < 1) {
        throw ParameterError("posterior ensemble needs at least one sample");
    }
    std::vector<std::uint64_t> seeds(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k) {
        seeds[k] = derive_seed(seed, {k});
    }
    return posterior_ensemble(flow, autoencoder, inst, queries, steps, seeds);
}

} // namespace geoflow
