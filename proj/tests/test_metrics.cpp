#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "geoflow/errors.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/rng.hpp"

using namespace geoflow;

namespace {

Array2 column(std::vector<double> v)
{
    const std::size_t n = v.size();
    return Array2(n, 1, std::move(v));
}

Array2 normal_sample(std::size_t n, std::size_t d, double shift, std::uint64_t seed)
{
    CounterRng rng(seed);
    Array2 out(n, d);
    for (auto& v : out.values) {
        v = shift + rng.normal();
    }
    return out;
}

GaussianSpec gaussian(std::vector<double> mean, std::vector<double> cov)
{
    const auto d = static_cast<Eigen::Index>(mean.size());
    GaussianSpec g{Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
    for (Eigen::Index i = 0; i < d; ++i) {
        g.mean(i) = mean[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < d; ++j) {
            g.cov(i, j) = cov[static_cast<std::size_t>(i * d + j)];
        }
    }
    return g;
}

// Exhaustive minimum over all permutations for tiny n.
double brute_force_assignment(const Eigen::MatrixXd& cost)
{
    std::vector<std::size_t> perm(static_cast<std::size_t>(cost.rows()));
    for (std::size_t i = 0; i < perm.size(); ++i) {
        perm[i] = i;
    }
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            c += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i]));
        }
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

PointCloud grid_cloud(std::size_t per_axis)
{
    return PointCloud{uniform_grid(2, per_axis), "grid"};
}

} // namespace

TEST_CASE("relative L2 algebra")
{
    const Array2 target(3, 2, {1.0, -2.0, 0.5, 3.0, 2.0, -1.0});
    CHECK(relative_l2(target, target) == 0.0);
    CHECK(relative_l2(Array2(3, 2), target) == 1.0);
    Array2 scaled = target;
    for (auto& v : scaled.values) {
        v *= 1.1;
    }
    CHECK(std::abs(relative_l2(scaled, target) - 0.1) < 1e-12);
    CHECK(std::abs(relative_l2_mean(scaled, target) - 0.1) < 1e-12);
    const auto per = relative_l2_channels(Array2(3, 2), target);
    CHECK(per.size() == 2);
    CHECK(per[0] == 1.0);
    CHECK_THROWS_AS((void)relative_l2(target, Array2(3, 2)), DomainError);
    CHECK_THROWS_AS((void)relative_l2(Array2(2, 2), target), DimensionError);
}

TEST_CASE("assignment solver matches exhaustive search")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CounterRng rng(seed);
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(seed % 6);
        Eigen::MatrixXd cost(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                cost(i, j) = rng.uniform(0.0, 10.0);
            }
        }
        const Assignment a = solve_assignment(cost);
        CHECK(a.cost == doctest::Approx(brute_force_assignment(cost)).epsilon(1e-12));
        auto cols = a.column_of_row;
        std::sort(cols.begin(), cols.end());
        for (std::size_t i = 0; i < cols.size(); ++i) {
            CHECK(cols[i] == i);
        }
    }
}

TEST_CASE("empirical W2 basic cases")
{
    const Array2 a = normal_sample(50, 2, 0.0, 1);
    CHECK(empirical_w2(a, a) == 0.0);
    CHECK(empirical_w2(column({0.0, 0.0}), column({1.0, 1.0})) == 1.0);
    CHECK_THROWS_AS((void)empirical_w2(column({0.0, 1.0}), column({1.0})), ParameterError);
    CHECK_THROWS_AS((void)empirical_w2(normal_sample(513, 2, 0.0, 1), normal_sample(513, 2, 0.0, 2)), CapacityError);
    // One dimension has no size cap.
    CHECK_NOTHROW((void)empirical_w2(normal_sample(1000, 1, 0.0, 1), normal_sample(1000, 1, 0.0, 2)));
}

TEST_CASE("1D sorting and assignment agree")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Array2 a = normal_sample(200, 1, 0.0, seed);
        const Array2 b = normal_sample(200, 1, 0.7, seed + 100);
        CHECK(std::abs(empirical_w2(a, b) - assignment_w2(a, b)) < 1e-10);
    }
}

TEST_CASE("1D Gaussian shift recovers the closed form")
{
    const Array2 a = normal_sample(4096, 1, 0.0, 10);
    const Array2 b = normal_sample(4096, 1, 1.0, 11);
    CHECK(std::abs(empirical_w2(a, b) - 1.0) < 0.05);
}

TEST_CASE("empirical W2 triangle inequality")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Array2 a = normal_sample(40, 2, 0.0, 3 * seed);
        const Array2 b = normal_sample(40, 2, 0.5, 3 * seed + 1);
        const Array2 c = normal_sample(40, 2, -0.3, 3 * seed + 2);
        CHECK(empirical_w2(a, c) <= empirical_w2(a, b) + empirical_w2(b, c) + 1e-10);
    }
}

TEST_CASE("Bures formula closed forms")
{
    const auto g = gaussian({0.0, 1.0}, {2.0, 0.3, 0.3, 1.0});
    CHECK(gaussian_w2(g, g) == 0.0);

    const auto a = gaussian({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
    const auto b = gaussian({3.0, 4.0}, {1.0, 0.0, 0.0, 1.0});
    CHECK(std::abs(gaussian_w2(a, b) - 5.0) < 1e-9);

    CHECK(std::abs(gaussian_w2(gaussian({0.0}, {1.0}), gaussian({0.0}, {4.0})) - 1.0) < 1e-9);
    CHECK(std::abs(gaussian_w2(gaussian({1.0}, {0.25}), gaussian({-1.0}, {9.0})) - std::sqrt(4.0 + 6.25)) < 1e-9);

    // Commuting covariances: W2^2 = |dmu|^2 + sum (sqrt(a_i) - sqrt(b_i))^2.
    const auto c = gaussian({0.0, 0.0}, {4.0, 0.0, 0.0, 1.0});
    const auto d = gaussian({0.0, 0.0}, {1.0, 0.0, 0.0, 9.0});
    CHECK(std::abs(gaussian_w2(c, d) - std::sqrt(1.0 + 4.0)) < 1e-9);

    CHECK_THROWS_AS((void)gaussian_w2(gaussian({0.0}, {-1.0}), a), DomainError);
    CHECK_THROWS_AS((void)gaussian_w2(gaussian({0.0, 0.0}, {1.0, 0.5, 0.0, 1.0}), a), DomainError);
}

TEST_CASE("Bures value agrees with empirical W2 on large 1D samples")
{
    const Array2 a = normal_sample(4096, 1, 0.0, 21);
    Array2 b = normal_sample(4096, 1, 0.0, 22);
    for (auto& v : b.values) {
        v *= 2.0;
    }
    CHECK(std::abs(empirical_w2(a, b) - gaussian_w2(gaussian({0.0}, {1.0}), gaussian({0.0}, {4.0}))) < 0.05);
}

TEST_CASE("theorem harness special cases")
{
    const auto p = gaussian({0.2, -0.1}, {1.0, 0.2, 0.2, 0.5});
    const auto q = gaussian({0.5, 0.3}, {0.7, -0.1, -0.1, 1.2});
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);

    const auto same = theorem_harness(eye, p, p, zero);
    CHECK(same.lhs == 0.0);
    CHECK(same.rhs == 0.0);
    CHECK(same.eps_rec == 0.0);

    const auto iso = theorem_harness(eye, p, q, zero);
    CHECK(std::abs(iso.lhs - iso.eps_flow) < 1e-12);
    CHECK(iso.lipschitz == doctest::Approx(1.0).epsilon(1e-14));

    // Scaled rotation: equality in the Lipschitz pushforward lemma.
    const double th = 0.7;
    Eigen::MatrixXd rot(2, 2);
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const Eigen::MatrixXd a = 2.5 * rot;
    const auto scaled = theorem_harness(a, p, q, zero);
    CHECK(std::abs(scaled.lhs - 2.5 * scaled.eps_flow) < 1e-9);
    CHECK(std::abs(gaussian_w2(pushforward(a, p), pushforward(a, q)) - 2.5 * gaussian_w2(p, q)) < 1e-9);

    // A pure offset is measured exactly by eps_rec.
    Eigen::VectorXd offset(2);
    offset << 0.3, -0.4;
    const auto shifted = theorem_harness(eye, p, p, offset);
    CHECK(std::abs(shifted.lhs - 0.5) < 1e-7);
    CHECK(shifted.slack >= -1e-9);
}

TEST_CASE("theorem bound holds over randomized trials")
{
    const auto reports = theorem_trials(1000, 2, 2, 2024);
    REQUIRE(reports.size() == 1000);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& r : reports) {
        worst = std::min(worst, r.slack);
        CHECK(std::isfinite(r.lhs));
        CHECK(r.lhs >= 0.0);
        CHECK(r.eps_flow >= 0.0);
    }
    CHECK(worst >= -1e-9);
    // Non-square decoders too.
    for (const auto& r : theorem_trials(50, 5, 3, 7)) {
        CHECK(r.slack >= -1e-9);
    }
}

TEST_CASE("log-log slope")
{
    const std::vector<double> x{1.0, 2.0, 4.0, 8.0};
    std::vector<double> y;
    for (double v : x) {
        y.push_back(3.0 * std::pow(v, -0.5));
    }
    CHECK(loglog_slope(x, y) == doctest::Approx(-0.5).epsilon(1e-12));
    const std::vector<double> same{2.0, 2.0, 2.0};
    CHECK_THROWS_AS((void)loglog_slope(same, std::vector<double>{1.0, 2.0, 3.0}), ParameterError);
    CHECK_THROWS_AS((void)loglog_slope(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, -1.0}), DomainError);
}

TEST_CASE("quasi-uniform sensors")
{
    const PointCloud cloud = grid_cloud(12);
    const SensorSet s = quasi_uniform_sensors(cloud, 20, 3);
    CHECK(s.indices.size() == 20);
    CHECK(std::is_sorted(s.indices.begin(), s.indices.end()));
    const Array2 pts = gather_rows(cloud.coords, s.indices);
    CHECK(fill_distance(pts, cloud.coords) / separation_radius(pts) < 4.0);
    CHECK_THROWS_AS((void)quasi_uniform_sensors(cloud, 0, 1), ParameterError);
    CHECK_THROWS_AS((void)quasi_uniform_sensors(cloud, 145, 1), ParameterError);
}

TEST_CASE("sensor scaling study with the nearest-sensor oracle")
{
    std::vector<FieldSample> samples;
    const std::vector<std::pair<double, double>> coeffs{{0.0, 0.0}, {1.0, 0.5}, {0.3, -0.2}, {0.1, 0.05}};
    const PointCloud cloud = grid_cloud(16);
    samples.push_back(harmonic_field(cloud, coeffs));
    const std::vector<std::size_t> counts{8, 32, 128};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const auto report = sensor_scaling_study(nearest_sensor_interpolation, samples, counts, seeds, 0.0, 1.0);
    REQUIRE(report.errors.size() == 3);
    CHECK(report.errors[1] < report.errors[0]);
    CHECK(report.errors[2] < report.errors[1]);
    CHECK(report.fill_distances[2] < report.fill_distances[0]);
    CHECK(report.slope < 0.0);

    const std::vector<std::size_t> repeated{16, 16, 16};
    CHECK_THROWS_AS((void)sensor_scaling_study(nearest_sensor_interpolation, samples, repeated, seeds, 0.0, 1.0),
                    ParameterError);
    const std::vector<std::size_t> two{8, 16};
    CHECK_THROWS_AS((void)sensor_scaling_study(nearest_sensor_interpolation, samples, two, seeds, 0.0, 1.0),
                    ParameterError);
}

TEST_CASE("RBF interpolation reproduces data and smooth fields")
{
    const PointCloud cloud = grid_cloud(10);
    const std::vector<std::pair<double, double>> coeffs{{0.0, 0.0}, {1.0, 0.0}, {0.2, 0.1}};
    const FieldSample field = harmonic_field(cloud, coeffs);
    const ConditioningInstance full = full_observation(cloud, field.values);
    const Array2 fit = rbf_interpolate(full, cloud.coords, 0.5, 1e-10);
    CHECK(relative_l2(fit, field.values) < 1e-4);
    const SensorSet half = quasi_uniform_sensors(cloud, 50, 4);
    const ConditioningInstance partial = build_conditioning(cloud, half, field.values, 0.0, {}, 1);
    CHECK(relative_l2(rbf_interpolate(partial, cloud.coords, 0.5, 1e-8), field.values) < 0.01);
    CHECK_THROWS_AS((void)rbf_interpolate(full, cloud.coords, 0.0, 1e-8), ParameterError);
}

TEST_CASE("ensemble uncertainty")
{
    PosteriorEnsemble same;
    same.members.assign(3, Array2(2, 1, {1.0, 2.0}));
    const auto zero = ensemble_uncertainty(same);
    for (double s : zero.std.values) {
        CHECK(s == 0.0);
    }

    PosteriorEnsemble pair;
    const double c = 0.75;
    pair.members = {Array2(2, 1, {1.0, 5.0}), Array2(2, 1, {1.0 + 2.0 * c, 5.0})};
    const auto u = ensemble_uncertainty(pair);
    CHECK(u.std(0, 0) == doctest::Approx(c * std::numbers::sqrt2).epsilon(1e-14));
    CHECK(u.std(1, 0) == 0.0);
    CHECK(u.max_std == doctest::Approx(c * std::numbers::sqrt2).epsilon(1e-14));
    for (double s : u.std.values) {
        CHECK(s >= 0.0);
    }

    PosteriorEnsemble single;
    single.members.assign(1, Array2(2, 1));
    CHECK_THROWS_AS((void)ensemble_uncertainty(single), ParameterError);
}
