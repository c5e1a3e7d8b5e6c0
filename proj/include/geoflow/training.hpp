#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "geoflow/checkpoint.hpp"
#include "geoflow/geofae.hpp"
#include "geoflow/latent_flow.hpp"
#include "geoflow/synthetic.hpp"

namespace geoflow {

struct TrainConfig {
    std::size_t iterations = 2000;
    std::size_t batch_size = 16;
    double base_lr = 3e-3;
    std::size_t warmup_steps = 100;
    double decay_factor = 0.9;
    std::size_t decay_every = 400;
    double weight_decay = 1e-5;
    double noise_level = 0.01;
    std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
    std::uint64_t seed = 0;
    double grad_clip = 1.0; // global norm; <= 0 disables
    std::size_t log_every = 10;
    std::size_t queries_per_instance = 128;

    // 1e5 iterations, warmup 5000 to 1e-3, decay 0.9 every 5000, weight decay 1e-5.
    static TrainConfig paper();
    // 2000 iterations, warmup 100 to 3e-3, decay 0.9 every 400.
    static TrainConfig desk();
    static TrainConfig preset(const std::string& name);

    void validate() const;
    [[nodiscard]] CorruptionSpec corruption() const;
};

// Linear warmup from 0 to base_lr, then base_lr * decay^floor((step - warmup) / decay_every).
double lr_at(std::size_t step, const TrainConfig& cfg);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First and second moments per parameter, in ParameterSet order.
struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static OptimizerState for_params(const ParameterSet& params);
};

// One decoupled-decay Adam update of a flat array at 1-based step `step`:
// p <- p (1 - lr wd), then p <- p - lr m_hat / (sqrt(v_hat) + eps).
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::uint64_t step, double lr, double weight_decay, const AdamHyper& hyper = {});

// Applies adamw_update to every trainable parameter, using the parameter's decay flag.
// Parameters without a gradient are updated with a zero gradient.
void adamw_step(ParameterSet& params, OptimizerState& state, double lr, double weight_decay,
                const AdamHyper& hyper = {});

// Scales all gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

struct LossRecord {
    std::size_t step = 0; // iterations completed
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainState {
    OptimizerState optimizer;
    std::size_t completed = 0;
    std::vector<LossRecord> history;
};

void write_history_csv(const std::filesystem::path& path, std::span<const LossRecord> history);

// ---- stage 1 ----------------------------------------------------------------------

struct Stage1Example {
    CorruptionStream::Item item;
    std::vector<std::size_t> queries; // indices into the target cloud
};

// Batch for iteration `step`: stream positions step * B .. step * B + B - 1, each with
// its own uniformly resampled query subset. A pure function of its arguments.
std::vector<Stage1Example> stage1_batch(const CorruptionStream& stream, const TrainConfig& cfg, std::size_t step);

CorruptionStream make_stream(const FieldDataset& data, std::span<const std::size_t> train_idx, const TrainConfig& cfg);

using ProgressFn = std::function<void(const LossRecord&)>;

// Continues training from state.completed up to `until` iterations.
void train_stage1(GeoFae& fae, const FieldDataset& data, std::span<const std::size_t> train_idx,
                  const TrainConfig& cfg, TrainState& state, std::size_t until, const ProgressFn& progress = {});
TrainState train_stage1(GeoFae& fae, const FieldDataset& data, const TrainConfig& cfg,
                        const ProgressFn& progress = {});

// ---- stage 2 ----------------------------------------------------------------------

// Reference latents z1 = E(full observation) for every sample of the dataset.
std::vector<Tensor> encode_references(const GeoFae& fae, const FieldDataset& data);

struct FlowExample {
    Tensor z1;
    Tensor z_c;
    std::uint64_t seed = 0;
    std::size_t sample_index = 0;
};

std::vector<FlowExample> stage2_batch(const GeoFae& fae, const CorruptionStream& stream,
                                      std::span<const Tensor> references, const TrainConfig& cfg, std::size_t step);

// Mean CRF objective over a batch.
Tensor flow_batch_loss(const VelocityField& field, std::span<const FlowExample> batch);

void train_stage2(FlowModel& flow, const GeoFae& fae, const FieldDataset& data, std::span<const std::size_t> train_idx,
                  const TrainConfig& cfg, TrainState& state, std::size_t until, const ProgressFn& progress = {});
TrainState train_stage2(FlowModel& flow, const GeoFae& fae, const FieldDataset& data, const TrainConfig& cfg,
                        const ProgressFn& progress = {});

// ---- checkpoints ------------------------------------------------------------------

void put_fae_config(Checkpoint& ckpt, const GeoFaeConfig& cfg);
GeoFaeConfig get_fae_config(const Checkpoint& ckpt);
void put_flow_config(Checkpoint& ckpt, const FlowConfig& cfg);
FlowConfig get_flow_config(const Checkpoint& ckpt);
void put_stats(Checkpoint& ckpt, const NormalizationStats& stats);
NormalizationStats get_stats(const Checkpoint& ckpt);
void put_train_config(Checkpoint& ckpt, const TrainConfig& cfg);
TrainConfig get_train_config(const Checkpoint& ckpt);
void put_train_state(Checkpoint& ckpt, const ParameterSet& params, const TrainState& state);
TrainState get_train_state(const Checkpoint& ckpt, const ParameterSet& params);

Checkpoint make_fae_checkpoint(const GeoFae& fae, const NormalizationStats& stats, const TrainState& state,
                               const TrainConfig& cfg);
Checkpoint make_flow_checkpoint(const FlowModel& flow, const GeoFae& fae, const TrainState& state,
                                const TrainConfig& cfg);

struct FaeBundle {
    GeoFae model;
    NormalizationStats stats;
    TrainState state;
    TrainConfig train;
};
FaeBundle load_fae(const Checkpoint& ckpt);
FaeBundle load_fae(const std::filesystem::path& path);

struct FlowBundle {
    FlowModel model;
    TrainState state;
    TrainConfig train;
};
// Throws ConfigError when the checkpoint was trained against a different autoencoder.
FlowBundle load_flow(const Checkpoint& ckpt, const GeoFae& fae);
FlowBundle load_flow(const std::filesystem::path& path, const GeoFae& fae);

} // namespace geoflow
