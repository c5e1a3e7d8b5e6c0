#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "geoflow/errors.hpp"
#include "geoflow/geofae.hpp"
#include "geoflow/rng.hpp"

using namespace geoflow;

namespace {

ConditioningInstance random_instance(std::size_t m, std::size_t p, std::uint64_t seed)
{
    CounterRng rng(seed);
    ConditioningInstance inst{Array2(m, 2), std::vector<double>(m), Array2(m, p)};
    for (std::size_t i = 0; i < m; ++i) {
        inst.coords(i, 0) = rng.uniform(-1.0, 1.0);
        inst.coords(i, 1) = rng.uniform(-1.0, 1.0);
        inst.mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        for (std::size_t c = 0; c < p; ++c) {
            inst.obs(i, c) = inst.mask[i] * rng.normal();
        }
    }
    return inst;
}

ConditioningInstance permuted(const ConditioningInstance& inst, const std::vector<std::size_t>& perm)
{
    ConditioningInstance out{gather_rows(inst.coords, perm), {}, gather_rows(inst.obs, perm)};
    for (auto i : perm) {
        out.mask.push_back(inst.mask[i]);
    }
    return out;
}

// Moves every trainable parameter off its (partly zero) initialization so that all
// gradient paths are exercised.
void randomize(GeoFae& model, std::uint64_t seed, double stddev)
{
    CounterRng rng(seed);
    for (auto& p : model.parameters()) {
        if (!p.trainable) {
            continue;
        }
        for (auto& v : p.value.mutable_data()) {
            v += stddev * rng.normal();
        }
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

GeoFaeConfig tiny_config()
{
    GeoFaeConfig c;
    c.embed_dim = 8;
    c.latent_queries = 4;
    c.encoder_blocks = 1;
    c.decoder_blocks = 1;
    c.heads = 2;
    c.fourier_bands = 4;
    c.fourier_std = 1.0;
    return c;
}

} // namespace

TEST_CASE("fourier features at the origin and with zero frequencies")
{
    const Tensor b({3, 2}, {1.0, 2.0, -0.5, 0.3, 4.0, 0.0});
    const Array2 origin(1, 2);
    const Array2 emb = fourier_embed(origin, b);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(emb(0, k) == 0.0);
        CHECK(emb(0, 3 + k) == 1.0);
    }
    const Tensor zero = Tensor::zeros({3, 2});
    Array2 pts(2, 2);
    pts(0, 0) = 0.3;
    pts(1, 1) = -0.7;
    const Array2 z = fourier_embed(pts, zero);
    CHECK(std::equal(z.row(0).begin(), z.row(0).end(), z.row(1).begin()));
    CHECK_THROWS_AS((void)fourier_embed(Array2(1, 3), b), DimensionError);
}

TEST_CASE("fourier features are periodic in each band")
{
    // Band 0 has frequency (2, 0): shifting x by 1/2 is one full period.
    const Tensor b({2, 2}, {2.0, 0.0, 0.7, 1.3});
    Array2 pts(2, 2);
    pts(0, 0) = 0.1;
    pts(0, 1) = 0.2;
    pts(1, 0) = 0.6;
    pts(1, 1) = 0.2;
    const Array2 emb = fourier_embed(pts, b);
    CHECK(emb(0, 0) == doctest::Approx(emb(1, 0)).epsilon(1e-12));
    CHECK(emb(0, 2) == doctest::Approx(emb(1, 2)).epsilon(1e-12));
    CHECK(std::abs(emb(0, 1) - emb(1, 1)) > 1e-3);
}

TEST_CASE("config presets and validation")
{
    const auto paper = GeoFaeConfig::paper();
    CHECK(paper.embed_dim == 256);
    CHECK(paper.latent_queries == 256);
    CHECK(paper.encoder_blocks == 8);
    CHECK(paper.decoder_blocks == 4);
    CHECK(paper.heads == 8);
    CHECK(paper.mlp_ratio == 2);
    CHECK(GeoFaeConfig::preset("desk").embed_dim == 32);
    CHECK_THROWS_AS(GeoFaeConfig::preset("huge"), ConfigError);
    GeoFaeConfig bad;
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = GeoFaeConfig{};
    bad.latent_queries = 0;
    CHECK_THROWS_AS(GeoFae(bad, 1), ConfigError);
}

TEST_CASE("parameter layout is a pure function of the config")
{
    const GeoFae a(GeoFaeConfig::desk(), 1);
    const GeoFae b(GeoFaeConfig::desk(), 2);
    CHECK(a.parameters().size() == b.parameters().size());
    CHECK(a.parameters().scalar_count() == b.parameters().scalar_count());
    CHECK(parameter_hash(a.parameters()) != parameter_hash(b.parameters()));
    const GeoFae c(GeoFaeConfig::desk(), 1);
    CHECK(parameter_hash(a.parameters()) == parameter_hash(c.parameters()));
    const auto* fourier = a.parameters().find("fae.fourier");
    REQUIRE(fourier != nullptr);
    CHECK_FALSE(fourier->trainable);
    CHECK_FALSE(fourier->value.requires_grad());
}

TEST_CASE("latent shape is fixed regardless of node count")
{
    const GeoFae model(GeoFaeConfig::desk(), 3);
    for (std::size_t m : {8U, 64U, 333U}) {
        const LatentCode code = model.encode(random_instance(m, 1, m));
        CHECK(code.tokens.rows() == 16);
        CHECK(code.tokens.cols() == 32);
        for (double v : code.tokens.data()) {
            CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("encoder is invariant to node permutations")
{
    GeoFae model(GeoFaeConfig::desk(), 4);
    randomize(model, 99, 0.05);
    for (std::size_t m : {8U, 64U, 333U}) {
        const auto inst = random_instance(m, 1, 10 + m);
        const auto perm = CounterRng(m).permutation(m);
        const Tensor a = model.encode(inst).tokens;
        const Tensor b = model.encode(permuted(inst, perm)).tokens;
        CHECK(max_abs_diff(a, b) < 1e-8);
        const Tensor za = model.perceiver(model.embed_nodes(inst));
        const Tensor zb = model.perceiver(model.embed_nodes(permuted(inst, perm)));
        CHECK(max_abs_diff(za, zb) < 1e-8);
    }
}

TEST_CASE("mask information reaches the latent code")
{
    // Zero-initialized residual branches make a freshly built encoder input-independent.
    GeoFae model(GeoFaeConfig::desk(), 5);
    randomize(model, 6, 0.05);
    auto full = random_instance(32, 1, 7);
    std::fill(full.mask.begin(), full.mask.end(), 1.0);
    auto empty = full;
    std::fill(empty.mask.begin(), empty.mask.end(), 0.0);
    for (std::size_t i = 0; i < empty.size(); ++i) {
        empty.obs(i, 0) = 0.0;
    }
    CHECK(max_abs_diff(model.encode(full).tokens, model.encode(empty).tokens) > 0.0);
}

TEST_CASE("single node gives unit attention weights")
{
    GeoFae model(GeoFaeConfig::desk(), 6);
    randomize(model, 5, 0.05);
    // With one key every head returns the projected value row for every query.
    const auto inst = random_instance(1, 1, 3);
    const Tensor nodes = model.embed_nodes(inst);
    const auto& block = model.perceiver_block();
    const Tensor ctx = block.norm_context.forward(nodes);
    const Tensor v = block.attention.value.forward(ctx);
    const Tensor expected_attn = block.attention.output.forward(v);
    const Tensor q = block.norm_query.forward(model.latent_queries());
    const Tensor attn = block.attention.forward(q, ctx);
    for (std::size_t i = 0; i < attn.rows(); ++i) {
        for (std::size_t j = 0; j < attn.cols(); ++j) {
            CHECK(attn.at(i, j) == doctest::Approx(expected_attn.at(0, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("zeroed residual branches reduce the perceiver to the latent queries")
{
    GeoFae model(GeoFaeConfig::desk(), 7);
    randomize(model, 8, 0.05);
    model.zero_encoder_residual_branches();
    const auto inst = random_instance(20, 1, 4);
    const Tensor z = model.perceiver(model.embed_nodes(inst));
    CHECK(max_abs_diff(z, model.latent_queries()) == 0.0);

    // Encoder output is now LN(z_q) passed through identity blocks, and gradients
    // still reach the latent queries.
    FieldSample target{PointCloud{inst.coords, "t"}, inst.obs};
    std::vector<std::size_t> idx(inst.size());
    std::iota(idx.begin(), idx.end(), 0);
    model.parameters().zero_grad();
    backward(fae_loss(model, inst, target, idx));
    const auto& grad = model.latent_queries().grad();
    CHECK(std::any_of(grad.begin(), grad.end(), [](double g) { return g != 0.0; }));
}

TEST_CASE("decoder queries are independent")
{
    GeoFae model(GeoFaeConfig::desk(), 8);
    randomize(model, 9, 0.05);
    const LatentCode code = model.encode(random_instance(40, 1, 5));
    CounterRng rng(12);
    Array2 queries(10, 2);
    for (auto& v : queries.values) {
        v = rng.uniform(-1.0, 1.0);
    }
    const Tensor all = model.decode(code, queries);
    CHECK(all.rows() == 10);
    CHECK(all.cols() == 1);

    const std::vector<std::size_t> first{0, 1, 2, 3, 4};
    const std::vector<std::size_t> second{5, 6, 7, 8, 9};
    const Tensor a = model.decode(code, gather_rows(queries, first));
    const Tensor b = model.decode(code, gather_rows(queries, second));
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(all.at(i, 0) - a.at(i, 0)) < 1e-12);
        CHECK(std::abs(all.at(5 + i, 0) - b.at(i, 0)) < 1e-12);
    }

    const std::vector<std::size_t> dup{3, 3, 7};
    const Tensor d = model.decode(code, gather_rows(queries, dup));
    CHECK(d.at(0, 0) == d.at(1, 0));
}

TEST_CASE("zeroed output head yields a zero field")
{
    GeoFae model(GeoFaeConfig::desk(), 9);
    randomize(model, 10, 0.05);
    model.zero_output_head();
    const Tensor out = model.decode(model.encode(random_instance(16, 1, 6)), uniform_grid(2, 4));
    for (double v : out.data()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("reconstruction loss algebra and errors")
{
    GeoFae model(GeoFaeConfig::desk(), 10);
    model.zero_output_head();
    const auto inst = random_instance(12, 1, 8);
    FieldSample target{PointCloud{inst.coords, "t"}, Array2(12, 1)};
    const std::vector<std::size_t> idx{0, 3, 5};
    CHECK(fae_loss(model, inst, target, idx).item() == 0.0);
    std::fill(target.values.values.begin(), target.values.values.end(), 0.5);
    CHECK(fae_loss(model, inst, target, idx).item() == doctest::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS((void)fae_loss(model, inst, target, std::span<const std::size_t>{}), ParameterError);
}

TEST_CASE("encoder input errors")
{
    const GeoFae model(GeoFaeConfig::desk(), 11);
    ConditioningInstance empty{Array2(0, 2), {}, Array2(0, 1)};
    CHECK_THROWS_AS((void)model.encode(empty), DomainError);
    CHECK_THROWS_AS((void)model.encode(random_instance(5, 2, 1)), DimensionError);
}

TEST_CASE("reconstruction loss gradient matches finite differences")
{
    GeoFae model(tiny_config(), 12);
    randomize(model, 13, 0.3);
    const auto inst = random_instance(8, 1, 9);
    CounterRng rng(44);
    FieldSample target{PointCloud{inst.coords, "t"}, Array2(8, 1)};
    for (auto& v : target.values.values) {
        v = rng.normal();
    }
    const std::vector<std::size_t> idx{1, 2, 5, 7};
    std::vector<Tensor> params;
    for (auto& p : model.parameters()) {
        if (p.trainable) {
            params.push_back(p.value);
        }
    }
    const double err = finite_diff_check_params([&] { return fae_loss(model, inst, target, idx); }, params, 1e-6);
    CHECK(err < 1e-4);
}

TEST_CASE("frozen model records no gradients")
{
    GeoFae model(tiny_config(), 14);
    model.freeze();
    CHECK(model.frozen());
    const auto inst = random_instance(6, 1, 2);
    const Tensor z = model.encode(inst).tokens;
    CHECK_FALSE(z.requires_grad());
    model.unfreeze();
    CHECK(model.encode(inst).tokens.requires_grad());
    CHECK_FALSE(model.parameters().find("fae.fourier")->value.requires_grad());
}
