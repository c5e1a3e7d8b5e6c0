#include "geoflow/nn.hpp"

#include <utility>

#include <cmath>
#include <cstring>

#include "geoflow/errors.hpp"

namespace geoflow {

void ParameterSet::add(std::string name, Tensor value, bool decay, bool trainable)
{
    if (find(name) != nullptr) {
        throw ConfigError("duplicate parameter name '" + name + "'");
    }
    value.set_requires_grad(trainable);
    items_.push_back(Parameter{std::move(name), std::move(value), decay, trainable});
}

const Parameter* ParameterSet::find(const std::string& name) const
{
    for (const auto& p : items_) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

Parameter* ParameterSet::find(const std::string& name)
{
    return const_cast<Parameter*>(std::as_const(*this).find(name));
}

std::size_t ParameterSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& p : items_) {
        n += p.value.numel();
    }
    return n;
}

void ParameterSet::zero_grad()
{
    for (auto& p : items_) {
        p.value.zero_grad();
    }
}

void ParameterSet::set_requires_grad(bool flag)
{
    for (auto& p : items_) {
        p.value.set_requires_grad(flag && p.trainable);
    }
}

std::uint64_t parameter_hash(const ParameterSet& params)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params) {
        feed(p.name.data(), p.name.size());
        const auto data = p.value.data();
        feed(data.data(), data.size_bytes());
    }
    return h;
}

Tensor Initializer::trunc_normal(Shape shape, double stddev)
{
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        double draw = rng_.normal();
        while (std::abs(draw) > 2.0) {
            draw = rng_.normal();
        }
        x = stddev * draw;
    }
    return Tensor(std::move(shape), std::move(v));
}

Tensor Initializer::normal(Shape shape, double stddev)
{
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = stddev * rng_.normal();
    }
    return Tensor(std::move(shape), std::move(v));
}

Tensor Initializer::zeros(Shape shape) { return Tensor::zeros(std::move(shape)); }
Tensor Initializer::ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

// ---- Linear -----------------------------------------------------------------------

Linear Linear::create(Initializer& init, std::size_t in, std::size_t out, bool zero)
{
    return Linear{zero ? Initializer::zeros({in, out}) : init.trunc_normal({in, out}), Initializer::zeros({out})};
}

Tensor Linear::forward(const Tensor& x) const { return add_row(matmul(x, weight), bias); }

void Linear::collect(ParameterSet& params, const std::string& prefix) const
{
    params.add(prefix + ".weight", weight);
    params.add(prefix + ".bias", bias);
}

void Linear::zero()
{
    for (auto* t : {&weight, &bias}) {
        for (auto& v : t->mutable_data()) {
            v = 0.0;
        }
    }
}

// ---- LayerNorm --------------------------------------------------------------------

LayerNorm LayerNorm::create(std::size_t width) { return LayerNorm{Initializer::ones({width}), Initializer::zeros({width})}; }

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta, kLayerNormEps); }

void LayerNorm::collect(ParameterSet& params, const std::string& prefix) const
{
    params.add(prefix + ".gamma", gamma, false);
    params.add(prefix + ".beta", beta, false);
}

// ---- Mlp --------------------------------------------------------------------------

Mlp Mlp::create(Initializer& init, std::size_t in, std::size_t hidden, std::size_t out, bool zero_output)
{
    Mlp mlp;
    mlp.fc1 = Linear::create(init, in, hidden);
    mlp.fc2 = Linear::create(init, hidden, out, zero_output);
    return mlp;
}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

void Mlp::collect(ParameterSet& params, const std::string& prefix) const
{
    fc1.collect(params, prefix + ".fc1");
    fc2.collect(params, prefix + ".fc2");
}

// ---- attention --------------------------------------------------------------------

MultiHeadAttention MultiHeadAttention::create(Initializer& init, std::size_t width, std::size_t heads)
{
    if (heads == 0 || width % heads != 0) {
        throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    }
    MultiHeadAttention mha;
    mha.query = Linear::create(init, width, width);
    mha.key = Linear::create(init, width, width);
    mha.value = Linear::create(init, width, width);
    mha.output = Linear::create(init, width, width, true);
    mha.heads = heads;
    return mha;
}

Tensor MultiHeadAttention::forward(const Tensor& queries, const Tensor& context) const
{
    if (context.rows() == 0) {
        throw DomainError("attention over an empty context");
    }
    const Tensor q = query.forward(queries);
    const Tensor k = key.forward(context);
    const Tensor v = value.forward(context);
    const std::size_t width = q.cols();
    const std::size_t head_dim = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * head_dim, head_dim);
        const Tensor kh = slice_cols(k, h * head_dim, head_dim);
        const Tensor vh = slice_cols(v, h * head_dim, head_dim);
        const Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), -1);
        outputs.push_back(matmul(weights, vh));
    }
    const Tensor merged = heads == 1 ? outputs.front() : concat_cols(outputs);
    return output.forward(merged);
}

void MultiHeadAttention::collect(ParameterSet& params, const std::string& prefix) const
{
    query.collect(params, prefix + ".query");
    key.collect(params, prefix + ".key");
    value.collect(params, prefix + ".value");
    output.collect(params, prefix + ".output");
}

// ---- blocks -----------------------------------------------------------------------

CrossAttentionBlock CrossAttentionBlock::create(Initializer& init, std::size_t width, std::size_t heads,
                                                std::size_t mlp_ratio)
{
    CrossAttentionBlock block;
    block.norm_query = LayerNorm::create(width);
    block.norm_context = LayerNorm::create(width);
    block.norm_mlp = LayerNorm::create(width);
    block.attention = MultiHeadAttention::create(init, width, heads);
    block.mlp = Mlp::create(init, width, width * mlp_ratio, width, true);
    return block;
}

Tensor CrossAttentionBlock::forward(const Tensor& x, const Tensor& context) const
{
    const Tensor attended = add(x, attention.forward(norm_query.forward(x), norm_context.forward(context)));
    return add(attended, mlp.forward(norm_mlp.forward(attended)));
}

void CrossAttentionBlock::collect(ParameterSet& params, const std::string& prefix) const
{
    norm_query.collect(params, prefix + ".norm_query");
    norm_context.collect(params, prefix + ".norm_context");
    norm_mlp.collect(params, prefix + ".norm_mlp");
    attention.collect(params, prefix + ".attention");
    mlp.collect(params, prefix + ".mlp");
}

SelfAttentionBlock SelfAttentionBlock::create(Initializer& init, std::size_t width, std::size_t heads,
                                              std::size_t mlp_ratio)
{
    SelfAttentionBlock block;
    block.norm_attention = LayerNorm::create(width);
    block.norm_mlp = LayerNorm::create(width);
    block.attention = MultiHeadAttention::create(init, width, heads);
    block.mlp = Mlp::create(init, width, width * mlp_ratio, width, true);
    return block;
}

Tensor SelfAttentionBlock::forward(const Tensor& z) const
{
    const Tensor normed = norm_attention.forward(z);
    const Tensor attended = add(attention.forward(normed, normed), z);
    return add(mlp.forward(norm_mlp.forward(attended)), attended);
}

void SelfAttentionBlock::collect(ParameterSet& params, const std::string& prefix) const
{
    norm_attention.collect(params, prefix + ".norm_attention");
    norm_mlp.collect(params, prefix + ".norm_mlp");
    attention.collect(params, prefix + ".attention");
    mlp.collect(params, prefix + ".mlp");
}

} // namespace geoflow
