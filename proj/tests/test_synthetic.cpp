#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "geoflow/dataset_io.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/synthetic.hpp"

using namespace geoflow;

namespace {

std::filesystem::path temp_path(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / "geoflow_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

Array2 dense_inside(DomainKind kind, std::size_t n, std::uint64_t seed)
{
    CounterRng rng(seed);
    Array2 out(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        double x = 0.0;
        double y = 0.0;
        do {
            x = rng.uniform(-1.0, 1.0);
            y = rng.uniform(-1.0, 1.0);
        } while (!in_domain(kind, x, y));
        out(i, 0) = x;
        out(i, 1) = y;
    }
    return out;
}

} // namespace

TEST_CASE("annulus nodes lie in the ring")
{
    const auto cloud = gen_domain(DomainKind::annulus, 300, 4);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double r = std::hypot(cloud.coords(i, 0), cloud.coords(i, 1));
        CHECK(r >= 0.5);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("notch triangle excludes the notch")
{
    const auto cloud = gen_domain(DomainKind::notch_triangle, 300, 5);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double x = cloud.coords(i, 0);
        const double y = cloud.coords(i, 1);
        CHECK_FALSE((std::abs(x) < kNotchHalfWidth && y < kNotchTop));
        CHECK(std::abs(x) <= 0.5 * (1.0 - y));
    }
}

TEST_CASE("generated domains are quasi-uniform")
{
    for (const auto kind : {DomainKind::annulus, DomainKind::notch_triangle}) {
        const auto cloud = gen_domain(kind, 256, 11);
        CHECK(cloud.size() == 256);
        const double h = fill_distance(cloud.coords, dense_inside(kind, 20000, 12));
        const double q = separation_radius(cloud.coords);
        CHECK(h / q <= 6.0);
    }
    const auto disk = gen_domain(DomainKind::perturbed_disk, 256, 13);
    CHECK(disk.size() == 256);
    CHECK_THROWS_AS(gen_domain(DomainKind::annulus, 7, 1), ParameterError);
    CHECK_THROWS_AS(parse_domain_kind("hexagon"), ParameterError);
    CHECK(parse_domain_kind("perturbed_disk") == DomainKind::perturbed_disk);
}

TEST_CASE("GRF with zero amplitude is identically zero")
{
    const auto cloud = gen_domain(DomainKind::annulus, 32, 1);
    const auto field = grf_sample(cloud, 0.3, 0.0, 2);
    for (const double v : field.values.values) {
        CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(grf_sample(cloud, 0.0, 1.0, 2), ParameterError);
}

TEST_CASE("GRF marginal variance and correlation match the kernel")
{
    const double ell = 0.4;
    const double sigma = 1.5;
    PointCloud cloud{Array2(12, 2), "probe"};
    CounterRng rng(3);
    for (std::size_t i = 2; i < 12; ++i) {
        cloud.coords(i, 0) = rng.uniform(-1.0, 1.0);
        cloud.coords(i, 1) = rng.uniform(-1.0, 1.0);
    }
    cloud.coords(1, 0) = ell; // nodes 0 and 1 sit exactly one lengthscale apart

    const std::size_t draws = 500;
    double s0 = 0.0;
    double s1 = 0.0;
    double s00 = 0.0;
    double s11 = 0.0;
    double s01 = 0.0;
    for (std::size_t k = 0; k < draws; ++k) {
        const auto f = grf_sample(cloud, ell, sigma, derive_seed(77, {k}));
        const double a = f.values(0, 0);
        const double b = f.values(1, 0);
        s0 += a;
        s1 += b;
        s00 += a * a;
        s11 += b * b;
        s01 += a * b;
    }
    const double n = static_cast<double>(draws);
    const double var0 = s00 / n - (s0 / n) * (s0 / n);
    const double var1 = s11 / n - (s1 / n) * (s1 / n);
    const double cov = s01 / n - (s0 / n) * (s1 / n);
    CHECK(std::abs(var0 - sigma * sigma) <= 0.15 * sigma * sigma);
    CHECK(std::abs(cov / std::sqrt(var0 * var1) - std::exp(-0.5)) <= 0.1);
}

TEST_CASE("GRF Cholesky succeeds on generated clouds for lengthscales >= 0.1")
{
    for (const double ell : {0.1, 0.5, 1.0, 2.0}) {
        for (const auto kind : {DomainKind::annulus, DomainKind::notch_triangle, DomainKind::perturbed_disk}) {
            const auto cloud = gen_domain(kind, 256, 21);
            CHECK_NOTHROW(grf_sample(cloud, ell, 1.0, 22));
        }
    }
}

TEST_CASE("harmonic field closed forms")
{
    const auto cloud = gen_domain(DomainKind::perturbed_disk, 64, 2);
    const std::vector<std::pair<double, double>> linear{{0.0, 0.0}, {1.0, 0.0}};
    const auto ux = harmonic_field(cloud, linear);
    const std::vector<std::pair<double, double>> quad{{0.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}};
    const auto uq = harmonic_field(cloud, quad);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double x = cloud.coords(i, 0);
        const double y = cloud.coords(i, 1);
        CHECK(ux.values(i, 0) == x);
        CHECK(std::abs(uq.values(i, 0) - (x * x - y * y)) < 1e-15);
    }
}

TEST_CASE("harmonic fields have a vanishing five-point Laplacian")
{
    const std::size_t n = 101;
    const double h = 2.0 / static_cast<double>(n - 1);
    PointCloud grid{uniform_grid(2, n), "grid"};
    const std::vector<std::pair<double, double>> coeffs{{0.3, 0.0}, {-1.2, 0.7}, {0.5, -0.4}, {0.25, 0.9}, {-0.6, 0.2}};
    const auto u = harmonic_field(grid, coeffs);
    double umax = 0.0;
    for (const double v : u.values.values) {
        umax = std::max(umax, std::abs(v));
    }
    // uniform_grid enumerates x fastest.
    auto at = [&](std::size_t ix, std::size_t iy) { return u.values(iy * n + ix, 0); };
    double worst = 0.0;
    for (std::size_t iy = 1; iy + 1 < n; ++iy) {
        for (std::size_t ix = 1; ix + 1 < n; ++ix) {
            const double lap =
                (at(ix + 1, iy) + at(ix - 1, iy) + at(ix, iy + 1) + at(ix, iy - 1) - 4.0 * at(ix, iy)) / (h * h);
            worst = std::max(worst, std::abs(lap));
        }
    }
    CHECK(worst < 1e-3 * umax);
}

TEST_CASE("corruption with full fraction and no noise is the identity")
{
    GeneratorSpec spec;
    spec.n_points = 40;
    spec.samples = 5;
    spec.seed = 3;
    const auto ds = generate_dataset(spec);
    CorruptionStream stream(ds, {0, 1, 2, 3, 4}, CorruptionSpec{0.0, {1.0}, {}}, 9);
    for (int k = 0; k < 10; ++k) {
        const auto item = stream.next();
        CHECK(item.instance.obs == item.target->values);
        CHECK(item.fraction == 1.0);
    }
    CHECK_THROWS_AS(CorruptionStream(ds, {0}, CorruptionSpec{0.0, {}, {}}, 1), ParameterError);
    CHECK_THROWS_AS(corrupt_sample(ds.samples[0], CorruptionSpec{0.0, {}, {}}, 1), ParameterError);
}

TEST_CASE("corruption fractions are drawn uniformly from the set")
{
    GeneratorSpec spec;
    spec.n_points = 16;
    spec.samples = 8;
    spec.seed = 4;
    const auto ds = generate_dataset(spec);
    CorruptionStream stream(ds, {0, 1, 2, 3, 4, 5, 6, 7}, CorruptionSpec{}, 10);
    std::map<double, int> counts;
    for (int k = 0; k < 4000; ++k) {
        const auto item = stream.next();
        counts[item.fraction] += 1;
        const auto observed = static_cast<std::size_t>(
            std::count(item.instance.mask.begin(), item.instance.mask.end(), 1.0));
        CHECK(observed == sensor_count(item.fraction, 16));
    }
    REQUIRE(counts.size() == 4);
    for (const auto& [fraction, count] : counts) {
        CHECK(std::abs(static_cast<double>(count) / 4000.0 - 0.25) <= 0.05);
    }
}

TEST_CASE("corruption stream is deterministic and position-addressable")
{
    GeneratorSpec spec;
    spec.n_points = 24;
    spec.samples = 6;
    spec.seed = 5;
    const auto ds = generate_dataset(spec);
    CorruptionStream a(ds, {0, 1, 2, 3}, CorruptionSpec{}, 42);
    CorruptionStream b(ds, {0, 1, 2, 3}, CorruptionSpec{}, 42);
    std::vector<std::size_t> first_epoch;
    for (int k = 0; k < 12; ++k) {
        const auto x = a.next();
        const auto y = b.next();
        CHECK(x.instance.obs == y.instance.obs);
        CHECK(x.instance.mask == y.instance.mask);
        CHECK(x.sample_index == y.sample_index);
        if (k < 4) {
            first_epoch.push_back(x.sample_index);
        }
    }
    std::sort(first_epoch.begin(), first_epoch.end());
    CHECK(first_epoch == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(a.at(7).instance.obs == b.at(7).instance.obs);
}

TEST_CASE("generation is a pure function of the spec")
{
    GeneratorSpec spec;
    spec.n_points = 32;
    spec.samples = 3;
    spec.seed = 8;
    const auto a = generate_dataset(spec);
    const auto b = generate_dataset(spec);
    for (std::size_t s = 0; s < 3; ++s) {
        CHECK(a.samples[s].cloud.coords == b.samples[s].cloud.coords);
        CHECK(a.samples[s].values == b.samples[s].values);
    }
    spec.field = "harmonic";
    CHECK(generate_dataset(spec).samples[0].values == generate_dataset(spec).samples[0].values);
    spec.field = "poisson";
    CHECK_THROWS_AS(generate_dataset(spec), ParameterError);
}

TEST_CASE("normalization round trip")
{
    GeneratorSpec spec;
    spec.n_points = 50;
    spec.samples = 10;
    spec.amplitude = 3.0;
    spec.seed = 6;
    const auto ds = generate_dataset(spec);
    const auto split = split_dataset(ds.size());
    CHECK(split.train.size() == 8);
    CHECK(split.test.size() == 2);
    const auto stats = compute_stats(ds, split.train);
    for (const auto& sample : ds.samples) {
        const auto back = denormalize_values(normalize_values(sample.values, stats), stats);
        for (std::size_t i = 0; i < back.values.size(); ++i) {
            CHECK(std::abs(back.values[i] - sample.values.values[i]) <= 1e-12);
        }
    }
    const auto norm = normalized(ds, stats);
    for (const auto idx : split.train) {
        for (const double v : norm.samples[idx].cloud.coords.values) {
            CHECK(std::abs(v) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("GFFD round trip is bit-exact and matches the layout formula")
{
    GeneratorSpec spec;
    spec.n_points = 20;
    spec.samples = 3;
    spec.seed = 7;
    const auto ds = generate_dataset(spec);
    const auto path = temp_path("roundtrip.gffd");
    dataset_write(path, ds);
    const auto back = dataset_read(path);
    REQUIRE(back.size() == 3);
    CHECK(back.meta.d == 2);
    CHECK(back.meta.p == 1);
    for (std::size_t s = 0; s < 3; ++s) {
        CHECK(back.samples[s].cloud.coords == ds.samples[s].cloud.coords);
        CHECK(back.samples[s].values == ds.samples[s].values);
    }
    const std::vector<std::size_t> counts{20, 20, 20};
    CHECK(std::filesystem::file_size(path) == gffd_file_size(2, 1, counts));
    CHECK(gffd_file_size(2, 1, counts) == 20 + 3 * (4 + 4 * 20 * 3));

    const auto again = temp_path("roundtrip2.gffd");
    dataset_write(again, back);
    std::ifstream f1(path, std::ios::binary);
    std::ifstream f2(again, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("GFFD format errors report offsets")
{
    GeneratorSpec spec;
    spec.n_points = 10;
    spec.samples = 2;
    const auto ds = generate_dataset(spec);
    const auto path = temp_path("bad.gffd");
    dataset_write(path, ds);
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    auto write = [&](const std::string& content) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
    };

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    write(bad_magic);
    CHECK_THROWS_AS(dataset_read(path), FormatError);

    write(bytes.substr(0, bytes.size() - 3));
    try {
        dataset_read(path);
        FAIL("truncated file was accepted");
    } catch (const FormatError& e) {
        CHECK(e.offset() == kGffdHeaderBytes + (4 + 4 * 10 * 3) + 4);
    }

    std::string bad_version = bytes;
    bad_version[4] = 2;
    write(bad_version);
    CHECK_THROWS_AS(dataset_read(path), FormatError);
}
