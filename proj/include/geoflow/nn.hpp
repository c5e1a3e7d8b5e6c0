#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "geoflow/rng.hpp"
#include "geoflow/tensor.hpp"

namespace geoflow {

struct Parameter {
    std::string name;
    Tensor value;
    bool decay = true;     // decoupled weight decay applies
    bool trainable = true; // frozen buffers (e.g. Fourier frequencies) are stored but never updated
};

// Named parameter registry in registration order. Holds the same tensor storage as
// the modules, so optimizer updates are visible to the forward pass.
class ParameterSet {
public:
    void add(std::string name, Tensor value, bool decay = true, bool trainable = true);

    [[nodiscard]] const Parameter* find(const std::string& name) const;
    [[nodiscard]] Parameter* find(const std::string& name);
    [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
    [[nodiscard]] std::size_t scalar_count() const;
    void zero_grad();
    void set_requires_grad(bool flag);

    [[nodiscard]] auto begin() noexcept { return items_.begin(); }
    [[nodiscard]] auto end() noexcept { return items_.end(); }
    [[nodiscard]] auto begin() const noexcept { return items_.begin(); }
    [[nodiscard]] auto end() const noexcept { return items_.end(); }

private:
    std::vector<Parameter> items_;
};

// FNV-1a over every parameter's name and raw bytes; used to assert bitwise equality.
std::uint64_t parameter_hash(const ParameterSet& params);

// Seeded parameter factory. Weights use a normal truncated at two standard deviations.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Tensor trunc_normal(Shape shape, double stddev = 0.02);
    Tensor normal(Shape shape, double stddev);
    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);

private:
    CounterRng rng_;
};

struct Linear {
    Tensor weight; // in x out
    Tensor bias;   // out

    static Linear create(Initializer& init, std::size_t in, std::size_t out, bool zero = false);
    [[nodiscard]] Tensor forward(const Tensor& x) const;
    void collect(ParameterSet& params, const std::string& prefix) const;
    void zero();
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    static LayerNorm create(std::size_t width);
    [[nodiscard]] Tensor forward(const Tensor& x) const;
    void collect(ParameterSet& params, const std::string& prefix) const;
};

inline constexpr double kLayerNormEps = 1e-6;

// Linear -> GELU -> Linear.
struct Mlp {
    Linear fc1;
    Linear fc2;

    static Mlp create(Initializer& init, std::size_t in, std::size_t hidden, std::size_t out, bool zero_output);
    [[nodiscard]] Tensor forward(const Tensor& x) const;
    void collect(ParameterSet& params, const std::string& prefix) const;
};

// Multi-head scaled dot-product attention with separate Q/K/V/output projections.
struct MultiHeadAttention {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;

    static MultiHeadAttention create(Initializer& init, std::size_t width, std::size_t heads);
    // queries: n x D, context: m x D -> n x D.
    [[nodiscard]] Tensor forward(const Tensor& queries, const Tensor& context) const;
    void collect(ParameterSet& params, const std::string& prefix) const;
};

// x' = x + MHA(LN(x), LN(c), LN(c));  out = x' + MLP(LN(x')).
struct CrossAttentionBlock {
    LayerNorm norm_query;
    LayerNorm norm_context;
    LayerNorm norm_mlp;
    MultiHeadAttention attention;
    Mlp mlp;

    static CrossAttentionBlock create(Initializer& init, std::size_t width, std::size_t heads, std::size_t mlp_ratio);
    [[nodiscard]] Tensor forward(const Tensor& x, const Tensor& context) const;
    void collect(ParameterSet& params, const std::string& prefix) const;
};

// Pre-norm transformer block: z' = MSA(LN(z)) + z;  out = MLP(LN(z')) + z'.
struct SelfAttentionBlock {
    LayerNorm norm_attention;
    LayerNorm norm_mlp;
    MultiHeadAttention attention;
    Mlp mlp;

    static SelfAttentionBlock create(Initializer& init, std::size_t width, std::size_t heads, std::size_t mlp_ratio);
    [[nodiscard]] Tensor forward(const Tensor& z) const;
    void collect(ParameterSet& params, const std::string& prefix) const;
};

} // namespace geoflow
