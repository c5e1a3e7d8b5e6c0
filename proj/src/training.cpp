#include "geoflow/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "geoflow/errors.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

// ---- configuration ----------------------------------------------------------------

TrainConfig TrainConfig::paper()
{
    TrainConfig c;
    c.iterations = 100000;
    c.base_lr = 1e-3;
    c.warmup_steps = 5000;
    c.decay_every = 5000;
    c.batch_size = 32;
    return c;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::preset(const std::string& name)
{
    if (name == "desk") {
        return desk();
    }
    if (name == "paper") {
        return paper();
    }
    throw ConfigError("unknown training preset '" + name + "' (expected desk or paper)");
}

void TrainConfig::validate() const
{
    if (warmup_steps < 1) {
        throw ConfigError("warmup_steps must be at least 1");
    }
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
        throw ConfigError("decay_factor must lie in (0, 1]");
    }
    if (decay_every < 1 || batch_size < 1 || log_every < 1 || queries_per_instance < 1) {
        throw ConfigError("decay_every, batch_size, log_every and queries_per_instance must be at least 1");
    }
    if (!(base_lr >= 0.0) || !(weight_decay >= 0.0) || !(noise_level >= 0.0)) {
        throw ConfigError("learning rate, weight decay and noise level must be non-negative");
    }
    if (fractions.empty()) {
        throw ConfigError("fraction set is empty");
    }
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) {
            throw ConfigError("sensor fractions must lie in (0, 1]");
        }
    }
}

CorruptionSpec TrainConfig::corruption() const
{
    CorruptionSpec spec;
    spec.noise_level = noise_level;
    spec.fractions = fractions;
    return spec;
}

double lr_at(std::size_t step, const TrainConfig& cfg)
{
    if (step < cfg.warmup_steps) {
        return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    const auto periods = static_cast<double>((step - cfg.warmup_steps) / cfg.decay_every);
    return cfg.base_lr * std::pow(cfg.decay_factor, periods);
}

// ---- optimizer --------------------------------------------------------------------

OptimizerState OptimizerState::for_params(const ParameterSet& params)
{
    OptimizerState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.value.numel(), 0.0);
        s.v.emplace_back(p.value.numel(), 0.0);
    }
    return s;
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::uint64_t step, double lr, double weight_decay, const AdamHyper& hyper)
{
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
        throw DimensionError("adamw_update: parameter, gradient and moment sizes differ");
    }
    if (step < 1) {
        throw ParameterError("adamw_update: step counter starts at 1");
    }
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
    const double decay = 1.0 - lr * weight_decay;
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        param[i] = param[i] * decay - lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

void adamw_step(ParameterSet& params, OptimizerState& state, double lr, double weight_decay, const AdamHyper& hyper)
{
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError("optimizer state does not match the parameter set");
    }
    ++state.step;
    std::size_t k = 0;
    for (auto& p : params) {
        if (p.trainable) {
            const std::vector<double> zeros = p.value.has_grad() ? std::vector<double>{}
                                                                 : std::vector<double>(p.value.numel(), 0.0);
            const std::span<const double> grad = p.value.has_grad() ? p.value.grad() : std::span<const double>(zeros);
            adamw_update(p.value.mutable_data(), grad, state.m[k], state.v[k], state.step, lr,
                         p.decay ? weight_decay : 0.0, hyper);
        }
        ++k;
    }
}

double clip_grad_norm(ParameterSet& params, double max_norm)
{
    double sq = 0.0;
    for (auto& p : params) {
        if (p.value.has_grad()) {
            for (double g : p.value.grad()) {
                sq += g * g;
            }
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (auto& p : params) {
            if (p.value.has_grad()) {
                for (auto& g : p.value.impl()->grad) {
                    g *= factor;
                }
            }
        }
    }
    return norm;
}

void write_history_csv(const std::filesystem::path& path, std::span<const LossRecord> history)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out << "step,lr,loss\n" << std::setprecision(17);
    for (const auto& r : history) {
        out << r.step << ',' << r.lr << ',' << r.loss << '\n';
    }
}

// ---- shared loop ------------------------------------------------------------------

namespace {

std::vector<std::size_t> default_train_indices(const FieldDataset& data)
{
    const TrainTestSplit split = split_dataset(data.size());
    return split.train;
}

[[noreturn]] void abort_non_finite(const char* stage, std::size_t step, double lr, std::size_t sample_index,
                                   const ParameterSet& params)
{
    current_tape().clear();
    double norm = 0.0;
    bool finite_params = true;
    for (const auto& p : params) {
        for (double v : p.value.data()) {
            norm += v * v;
            finite_params = finite_params && std::isfinite(v);
        }
    }
    std::ostringstream msg;
    msg << stage << " loss became non-finite at iteration " << step << " (lr " << lr << ", sample "
        << sample_index << ", parameter norm " << std::sqrt(norm) << ", parameters "
        << (finite_params ? "finite" : "non-finite") << ", hash " << std::hex << parameter_hash(params)
        << "); lower the learning rate or enable gradient clipping";
    throw NumericalError(msg.str());
}

// Clips, steps the optimizer and records the loss for a completed iteration.
void finish_iteration(ParameterSet& params, const TrainConfig& cfg, TrainState& state, std::size_t step, double loss,
                      const ProgressFn& progress)
{
    clip_grad_norm(params, cfg.grad_clip);
    const double lr = lr_at(step, cfg);
    adamw_step(params, state.optimizer, lr, cfg.weight_decay);
    state.completed = step + 1;
    if (state.completed % cfg.log_every == 0) {
        state.history.push_back(LossRecord{state.completed, lr, loss});
        if (progress) {
            progress(state.history.back());
        }
    }
}

void prepare_state(const ParameterSet& params, TrainState& state)
{
    if (state.optimizer.m.empty() && state.completed == 0) {
        state.optimizer = OptimizerState::for_params(params);
    }
    if (state.optimizer.m.size() != params.size()) {
        throw ConfigError("optimizer state does not match the model parameters");
    }
}

} // namespace

CorruptionStream make_stream(const FieldDataset& data, std::span<const std::size_t> train_idx, const TrainConfig& cfg)
{
    if (train_idx.empty()) {
        throw ParameterError("training split is empty");
    }
    return CorruptionStream(data, std::vector<std::size_t>(train_idx.begin(), train_idx.end()), cfg.corruption(),
                            derive_seed(cfg.seed, {1}));
}

// ---- stage 1 ----------------------------------------------------------------------

std::vector<Stage1Example> stage1_batch(const CorruptionStream& stream, const TrainConfig& cfg, std::size_t step)
{
    std::vector<Stage1Example> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::uint64_t pos = static_cast<std::uint64_t>(step) * cfg.batch_size + b;
        Stage1Example ex{stream.at(pos), {}};
        const std::size_t m = ex.item.target->cloud.size();
        auto perm = CounterRng(derive_seed(cfg.seed, {2, pos})).permutation(m);
        perm.resize(std::min(cfg.queries_per_instance, m));
        ex.queries = std::move(perm);
        batch.push_back(std::move(ex));
    }
    return batch;
}

void train_stage1(GeoFae& fae, const FieldDataset& data, std::span<const std::size_t> train_idx,
                  const TrainConfig& cfg, TrainState& state, std::size_t until, const ProgressFn& progress)
{
    cfg.validate();
    if (fae.frozen()) {
        throw ContractError("train_stage1: the autoencoder is frozen");
    }
    ParameterSet& params = fae.parameters();
    prepare_state(params, state);
    const CorruptionStream stream = make_stream(data, train_idx, cfg);
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t step = state.completed; step < until; ++step) {
        params.zero_grad();
        double total = 0.0;
        for (const auto& ex : stage1_batch(stream, cfg, step)) {
            const Tensor loss = fae_loss(fae, ex.item.instance, *ex.item.target, ex.queries);
            if (!std::isfinite(loss.item())) {
                abort_non_finite("stage-1", step, lr_at(step, cfg), ex.item.sample_index, params);
            }
            total += loss.item();
            backward(scale(loss, inv_batch));
        }
        finish_iteration(params, cfg, state, step, total * inv_batch, progress);
    }
}

TrainState train_stage1(GeoFae& fae, const FieldDataset& data, const TrainConfig& cfg, const ProgressFn& progress)
{
    TrainState state;
    const auto idx = default_train_indices(data);
    train_stage1(fae, data, idx, cfg, state, cfg.iterations, progress);
    return state;
}

// ---- stage 2 ----------------------------------------------------------------------

std::vector<Tensor> encode_references(const GeoFae& fae, const FieldDataset& data)
{
    NoGradGuard no_grad;
    std::vector<Tensor> out;
    out.reserve(data.size());
    for (const auto& s : data.samples) {
        out.push_back(fae.encode(full_observation(s.cloud, s.values)).tokens);
    }
    return out;
}

std::vector<FlowExample> stage2_batch(const GeoFae& fae, const CorruptionStream& stream,
                                      std::span<const Tensor> references, const TrainConfig& cfg, std::size_t step)
{
    NoGradGuard no_grad;
    std::vector<FlowExample> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::uint64_t pos = static_cast<std::uint64_t>(step) * cfg.batch_size + b;
        const auto item = stream.at(pos);
        batch.push_back(FlowExample{references[item.sample_index], fae.encode(item.instance).tokens,
                                    derive_seed(cfg.seed, {3, pos}), item.sample_index});
    }
    return batch;
}

Tensor flow_batch_loss(const VelocityField& field, std::span<const FlowExample> batch)
{
    if (batch.empty()) {
        throw ParameterError("flow batch is empty");
    }
    Tensor total;
    for (const auto& ex : batch) {
        const Tensor l = crf_objective(field, ex.z1, ex.z_c, ex.seed);
        total = total.defined() ? add(total, l) : l;
    }
    return scale(total, 1.0 / static_cast<double>(batch.size()));
}

void train_stage2(FlowModel& flow, const GeoFae& fae, const FieldDataset& data, std::span<const std::size_t> train_idx,
                  const TrainConfig& cfg, TrainState& state, std::size_t until, const ProgressFn& progress)
{
    cfg.validate();
    if (!fae.frozen()) {
        throw ContractError("train_stage2 requires a frozen autoencoder; call freeze() after stage-1 training");
    }
    if (flow.config().embed_dim != fae.config().embed_dim) {
        throw ConfigError("flow embed_dim does not match the autoencoder latent dimension");
    }
    const std::uint64_t fae_hash = parameter_hash(fae.parameters());
    ParameterSet& params = flow.parameters();
    prepare_state(params, state);
    const CorruptionStream stream = make_stream(data, train_idx, cfg);
    const auto references = encode_references(fae, data);
    if (!flow.has_latent_normalization()) {
        std::vector<Tensor> train_refs;
        train_refs.reserve(train_idx.size());
        for (const auto i : train_idx) {
            train_refs.push_back(references.at(i));
        }
        fit_latent_normalization(flow, train_refs);
    }
    const VelocityField field = flow.field();
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t step = state.completed; step < until; ++step) {
        params.zero_grad();
        double total = 0.0;
        for (const auto& ex : stage2_batch(fae, stream, references, cfg, step)) {
            const Tensor loss =
                crf_objective(field, flow.to_flow_space(ex.z1), flow.to_flow_space(ex.z_c), ex.seed);
            if (!std::isfinite(loss.item())) {
                abort_non_finite("stage-2", step, lr_at(step, cfg), ex.sample_index, params);
            }
            total += loss.item();
            backward(scale(loss, inv_batch));
        }
        finish_iteration(params, cfg, state, step, total * inv_batch, progress);
    }
    if (parameter_hash(fae.parameters()) != fae_hash) {
        throw ContractError("stage-2 training modified the frozen autoencoder");
    }
}

TrainState train_stage2(FlowModel& flow, const GeoFae& fae, const FieldDataset& data, const TrainConfig& cfg,
                        const ProgressFn& progress)
{
    TrainState state;
    const auto idx = default_train_indices(data);
    train_stage2(flow, fae, data, idx, cfg, state, cfg.iterations, progress);
    return state;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {

std::size_t get_size(const Checkpoint& ckpt, const std::string& name)
{
    const double v = ckpt.scalar(name);
    if (!(v >= 0.0) || v != std::floor(v)) {
        throw ConfigError("checkpoint entry '" + name + "' is not a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

void put_vector(Checkpoint& ckpt, std::string name, const std::vector<double>& values)
{
    ckpt.put(std::move(name), {static_cast<std::uint32_t>(values.size())}, values);
}

} // namespace

void put_fae_config(Checkpoint& ckpt, const GeoFaeConfig& cfg)
{
    ckpt.put_scalar("config.fae.embed_dim", static_cast<double>(cfg.embed_dim));
    ckpt.put_scalar("config.fae.latent_queries", static_cast<double>(cfg.latent_queries));
    ckpt.put_scalar("config.fae.encoder_blocks", static_cast<double>(cfg.encoder_blocks));
    ckpt.put_scalar("config.fae.decoder_blocks", static_cast<double>(cfg.decoder_blocks));
    ckpt.put_scalar("config.fae.heads", static_cast<double>(cfg.heads));
    ckpt.put_scalar("config.fae.mlp_ratio", static_cast<double>(cfg.mlp_ratio));
    ckpt.put_scalar("config.fae.fourier_bands", static_cast<double>(cfg.fourier_bands));
    ckpt.put_scalar("config.fae.fourier_std", cfg.fourier_std);
    ckpt.put_scalar("config.fae.channels", static_cast<double>(cfg.channels));
    ckpt.put_scalar("config.fae.coord_dim", static_cast<double>(cfg.coord_dim));
}

GeoFaeConfig get_fae_config(const Checkpoint& ckpt)
{
    GeoFaeConfig cfg;
    cfg.embed_dim = get_size(ckpt, "config.fae.embed_dim");
    cfg.latent_queries = get_size(ckpt, "config.fae.latent_queries");
    cfg.encoder_blocks = get_size(ckpt, "config.fae.encoder_blocks");
    cfg.decoder_blocks = get_size(ckpt, "config.fae.decoder_blocks");
    cfg.heads = get_size(ckpt, "config.fae.heads");
    cfg.mlp_ratio = get_size(ckpt, "config.fae.mlp_ratio");
    cfg.fourier_bands = get_size(ckpt, "config.fae.fourier_bands");
    cfg.fourier_std = ckpt.scalar("config.fae.fourier_std");
    cfg.channels = get_size(ckpt, "config.fae.channels");
    cfg.coord_dim = get_size(ckpt, "config.fae.coord_dim");
    cfg.validate();
    return cfg;
}

void put_flow_config(Checkpoint& ckpt, const FlowConfig& cfg)
{
    ckpt.put_scalar("config.flow.embed_dim", static_cast<double>(cfg.embed_dim));
    ckpt.put_scalar("config.flow.blocks", static_cast<double>(cfg.blocks));
    ckpt.put_scalar("config.flow.heads", static_cast<double>(cfg.heads));
    ckpt.put_scalar("config.flow.mlp_ratio", static_cast<double>(cfg.mlp_ratio));
    ckpt.put_scalar("config.flow.time_embed_dim", static_cast<double>(cfg.time_embed_dim));
    ckpt.put_scalar("config.flow.default_steps", static_cast<double>(cfg.default_steps));
    ckpt.put_scalar("config.flow.latent_spread", cfg.latent_spread);
}

FlowConfig get_flow_config(const Checkpoint& ckpt)
{
    FlowConfig cfg;
    cfg.embed_dim = get_size(ckpt, "config.flow.embed_dim");
    cfg.blocks = get_size(ckpt, "config.flow.blocks");
    cfg.heads = get_size(ckpt, "config.flow.heads");
    cfg.mlp_ratio = get_size(ckpt, "config.flow.mlp_ratio");
    cfg.time_embed_dim = get_size(ckpt, "config.flow.time_embed_dim");
    cfg.default_steps = get_size(ckpt, "config.flow.default_steps");
    cfg.latent_spread = ckpt.scalar("config.flow.latent_spread");
    cfg.validate();
    return cfg;
}

void put_stats(Checkpoint& ckpt, const NormalizationStats& stats)
{
    put_vector(ckpt, "norm.mean", stats.mean);
    put_vector(ckpt, "norm.std", stats.std);
    put_vector(ckpt, "norm.box_lo", stats.box.lo);
    put_vector(ckpt, "norm.box_hi", stats.box.hi);
}

NormalizationStats get_stats(const Checkpoint& ckpt)
{
    NormalizationStats s;
    s.mean = ckpt.get("norm.mean").data;
    s.std = ckpt.get("norm.std").data;
    s.box.lo = ckpt.get("norm.box_lo").data;
    s.box.hi = ckpt.get("norm.box_hi").data;
    if (s.mean.size() != s.std.size() || s.box.lo.size() != s.box.hi.size()) {
        throw ConfigError("inconsistent normalization entries in checkpoint");
    }
    return s;
}

void put_train_config(Checkpoint& ckpt, const TrainConfig& cfg)
{
    ckpt.put_scalar("train.iterations", static_cast<double>(cfg.iterations));
    ckpt.put_scalar("train.batch_size", static_cast<double>(cfg.batch_size));
    ckpt.put_scalar("train.base_lr", cfg.base_lr);
    ckpt.put_scalar("train.warmup_steps", static_cast<double>(cfg.warmup_steps));
    ckpt.put_scalar("train.decay_factor", cfg.decay_factor);
    ckpt.put_scalar("train.decay_every", static_cast<double>(cfg.decay_every));
    ckpt.put_scalar("train.weight_decay", cfg.weight_decay);
    ckpt.put_scalar("train.noise_level", cfg.noise_level);
    put_vector(ckpt, "train.fractions", cfg.fractions);
    ckpt.put_u64("train.seed", cfg.seed);
    ckpt.put_scalar("train.grad_clip", cfg.grad_clip);
    ckpt.put_scalar("train.log_every", static_cast<double>(cfg.log_every));
    ckpt.put_scalar("train.queries_per_instance", static_cast<double>(cfg.queries_per_instance));
}

TrainConfig get_train_config(const Checkpoint& ckpt)
{
    TrainConfig cfg;
    cfg.iterations = get_size(ckpt, "train.iterations");
    cfg.batch_size = get_size(ckpt, "train.batch_size");
    cfg.base_lr = ckpt.scalar("train.base_lr");
    cfg.warmup_steps = get_size(ckpt, "train.warmup_steps");
    cfg.decay_factor = ckpt.scalar("train.decay_factor");
    cfg.decay_every = get_size(ckpt, "train.decay_every");
    cfg.weight_decay = ckpt.scalar("train.weight_decay");
    cfg.noise_level = ckpt.scalar("train.noise_level");
    cfg.fractions = ckpt.get("train.fractions").data;
    cfg.seed = ckpt.u64("train.seed");
    cfg.grad_clip = ckpt.scalar("train.grad_clip");
    cfg.log_every = get_size(ckpt, "train.log_every");
    cfg.queries_per_instance = get_size(ckpt, "train.queries_per_instance");
    cfg.validate();
    return cfg;
}

void put_train_state(Checkpoint& ckpt, const ParameterSet& params, const TrainState& state)
{
    ckpt.put_u64("opt.step", state.optimizer.step);
    ckpt.put_scalar("train.completed", static_cast<double>(state.completed));
    // A fresh state has no moments yet; store zeros so every checkpoint has the same layout.
    const OptimizerState& opt = state.optimizer.m.empty() ? OptimizerState::for_params(params) : state.optimizer;
    if (opt.m.size() != params.size()) {
        throw ConfigError("optimizer state does not match the model parameters");
    }
    std::size_t k = 0;
    for (const auto& p : params) {
        const auto rows = static_cast<std::uint32_t>(p.value.numel());
        ckpt.put("opt.m." + p.name, {rows}, opt.m[k]);
        ckpt.put("opt.v." + p.name, {rows}, opt.v[k]);
        ++k;
    }
    std::vector<double> steps;
    std::vector<double> lrs;
    std::vector<double> losses;
    for (const auto& r : state.history) {
        steps.push_back(static_cast<double>(r.step));
        lrs.push_back(r.lr);
        losses.push_back(r.loss);
    }
    put_vector(ckpt, "history.step", steps);
    put_vector(ckpt, "history.lr", lrs);
    put_vector(ckpt, "history.loss", losses);
}

TrainState get_train_state(const Checkpoint& ckpt, const ParameterSet& params)
{
    TrainState state;
    state.optimizer.step = ckpt.u64("opt.step");
    state.completed = get_size(ckpt, "train.completed");
    for (const auto& p : params) {
        const auto& m = ckpt.get("opt.m." + p.name);
        const auto& v = ckpt.get("opt.v." + p.name);
        if (m.data.size() != p.value.numel() || v.data.size() != p.value.numel()) {
            throw ConfigError("optimizer moments for '" + p.name + "' do not match the parameter shape");
        }
        state.optimizer.m.push_back(m.data);
        state.optimizer.v.push_back(v.data);
    }
    const auto& steps = ckpt.get("history.step").data;
    const auto& lrs = ckpt.get("history.lr").data;
    const auto& losses = ckpt.get("history.loss").data;
    if (steps.size() != lrs.size() || steps.size() != losses.size()) {
        throw ConfigError("inconsistent loss history in checkpoint");
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
        state.history.push_back(LossRecord{static_cast<std::size_t>(steps[i]), lrs[i], losses[i]});
    }
    return state;
}

Checkpoint make_fae_checkpoint(const GeoFae& fae, const NormalizationStats& stats, const TrainState& state,
                               const TrainConfig& cfg)
{
    Checkpoint ckpt;
    put_fae_config(ckpt, fae.config());
    put_stats(ckpt, stats);
    put_train_config(ckpt, cfg);
    put_parameters(ckpt, fae.parameters());
    put_train_state(ckpt, fae.parameters(), state);
    return ckpt;
}

Checkpoint make_flow_checkpoint(const FlowModel& flow, const GeoFae& fae, const TrainState& state,
                                const TrainConfig& cfg)
{
    Checkpoint ckpt;
    put_flow_config(ckpt, flow.config());
    ckpt.put_u64("link.fae_hash", parameter_hash(fae.parameters()));
    put_train_config(ckpt, cfg);
    put_parameters(ckpt, flow.parameters());
    if (flow.has_latent_normalization()) {
        const Shape& shape = flow.latent_shift().shape();
        ckpt.put("latent.shift", {static_cast<std::uint32_t>(shape[0]), static_cast<std::uint32_t>(shape[1])},
                 std::vector<double>(flow.latent_shift().data().begin(), flow.latent_shift().data().end()));
        ckpt.put_scalar("latent.scale", flow.latent_scale());
    }
    put_train_state(ckpt, flow.parameters(), state);
    return ckpt;
}

FaeBundle load_fae(const Checkpoint& ckpt)
{
    FaeBundle bundle{GeoFae(get_fae_config(ckpt), 0), get_stats(ckpt), {}, get_train_config(ckpt)};
    load_parameters(ckpt, bundle.model.parameters(), "fae.");
    bundle.state = get_train_state(ckpt, bundle.model.parameters());
    return bundle;
}

FaeBundle load_fae(const std::filesystem::path& path) { return load_fae(Checkpoint::load(path)); }

FlowBundle load_flow(const Checkpoint& ckpt, const GeoFae& fae)
{
    if (ckpt.u64("link.fae_hash") != parameter_hash(fae.parameters())) {
        throw ConfigError("flow checkpoint was trained against a different autoencoder checkpoint");
    }
    FlowBundle bundle{FlowModel(get_flow_config(ckpt), 0), {}, get_train_config(ckpt)};
    if (bundle.model.config().embed_dim != fae.config().embed_dim) {
        throw ConfigError("flow latent dimension does not match the autoencoder");
    }
    load_parameters(ckpt, bundle.model.parameters(), "flow.");
    if (const NamedArray* shift = ckpt.find("latent.shift")) {
        if (shift->shape.size() != 2) {
            throw ConfigError("latent.shift must be a matrix");
        }
        bundle.model.set_latent_normalization(Tensor({shift->shape[0], shift->shape[1]}, shift->data),
                                              ckpt.scalar("latent.scale"));
    }
    bundle.state = get_train_state(ckpt, bundle.model.parameters());
    return bundle;
}

FlowBundle load_flow(const std::filesystem::path& path, const GeoFae& fae)
{
    return load_flow(Checkpoint::load(path), fae);
}

} // namespace geoflow
