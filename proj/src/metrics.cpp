#include "geoflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "geoflow/errors.hpp"
#include "geoflow/rng.hpp"

namespace geoflow {

// ---- field errors -----------------------------------------------------------------

namespace {

void require_same_shape(const Array2& a, const Array2& b, const char* what)
{
    if (a.rows != b.rows || a.cols != b.cols) {
        throw DimensionError(std::string(what) + ": shapes " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                             " and " + std::to_string(b.rows) + "x" + std::to_string(b.cols) + " differ");
    }
}

double squared_distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

} // namespace

double relative_l2(const Array2& pred, const Array2& target)
{
    require_same_shape(pred, target, "relative_l2");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - target.values[i];
        num += d * d;
        den += target.values[i] * target.values[i];
    }
    if (den == 0.0) {
        throw DomainError("relative_l2: target has zero norm");
    }
    return std::sqrt(num / den);
}

std::vector<double> relative_l2_channels(const Array2& pred, const Array2& target)
{
    require_same_shape(pred, target, "relative_l2_channels");
    std::vector<double> out(pred.cols);
    for (std::size_t c = 0; c < pred.cols; ++c) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < pred.rows; ++i) {
            const double d = pred(i, c) - target(i, c);
            num += d * d;
            den += target(i, c) * target(i, c);
        }
        if (den == 0.0) {
            throw DomainError("relative_l2: channel " + std::to_string(c) + " of the target has zero norm");
        }
        out[c] = std::sqrt(num / den);
    }
    return out;
}

double relative_l2_mean(const Array2& pred, const Array2& target)
{
    const auto per = relative_l2_channels(pred, target);
    double s = 0.0;
    for (double v : per) {
        s += v;
    }
    return s / static_cast<double>(per.size());
}

// ---- Wasserstein-2 ----------------------------------------------------------------

Assignment solve_assignment(const Eigen::MatrixXd& cost)
{
    const auto n = static_cast<std::size_t>(cost.rows());
    if (cost.cols() != cost.rows()) {
        throw DimensionError("assignment cost matrix must be square");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    // Potentials and matching are 1-based; column 0 is a virtual source.
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> row_of_col(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = row_of_col[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                                   u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Assignment out;
    out.column_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) {
        out.column_of_row[row_of_col[j] - 1] = j - 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.column_of_row[i]));
    }
    return out;
}

double sorted_w2_1d(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty()) {
        throw ParameterError("W2 needs two non-empty samples of equal size");
    }
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        s += (sa[i] - sb[i]) * (sa[i] - sb[i]);
    }
    return std::sqrt(s / static_cast<double>(sa.size()));
}

double assignment_w2(const Array2& a, const Array2& b)
{
    if (a.rows != b.rows || a.rows == 0) {
        throw ParameterError("W2 needs two non-empty samples of equal size, got " + std::to_string(a.rows) + " and " +
                             std::to_string(b.rows));
    }
    if (a.cols != b.cols) {
        throw DimensionError("W2 samples have different dimensions");
    }
    if (a.rows > kMaxAssignmentSize) {
        throw CapacityError("exact assignment is limited to " + std::to_string(kMaxAssignmentSize) +
                            " points per sample, got " + std::to_string(a.rows));
    }
    const auto n = static_cast<Eigen::Index>(a.rows);
    Eigen::MatrixXd cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            cost(i, j) = squared_distance(a.row(static_cast<std::size_t>(i)), b.row(static_cast<std::size_t>(j)));
        }
    }
    return std::sqrt(std::max(0.0, solve_assignment(cost).cost) / static_cast<double>(n));
}

double empirical_w2(const Array2& a, const Array2& b)
{
    if (a.rows != b.rows || a.rows == 0) {
        throw ParameterError("W2 needs two non-empty samples of equal size, got " + std::to_string(a.rows) + " and " +
                             std::to_string(b.rows));
    }
    if (a.cols == 1 && b.cols == 1) {
        return sorted_w2_1d(a.values, b.values);
    }
    return assignment_w2(a, b);
}

void GaussianSpec::validate() const
{
    const auto d = mean.size();
    if (cov.rows() != d || cov.cols() != d) {
        throw DimensionError("Gaussian covariance does not match the mean dimension");
    }
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw DomainError("Gaussian covariance is not symmetric");
    }
    if (d > 0) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-10) {
            throw DomainError("Gaussian covariance is not positive semidefinite (min eigenvalue " +
                              std::to_string(eig.eigenvalues().minCoeff()) + ")");
        }
    }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m)
{
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double gaussian_w2(const GaussianSpec& a, const GaussianSpec& b)
{
    a.validate();
    b.validate();
    if (a.mean.size() != b.mean.size()) {
        throw DimensionError("gaussian_w2: dimensions differ");
    }
    const Eigen::MatrixXd rb = psd_sqrt(b.cov);
    const Eigen::MatrixXd cross = psd_sqrt(rb * a.cov * rb);
    const double traces = a.cov.trace() + b.cov.trace();
    const double w2sq = (a.mean - b.mean).squaredNorm() + traces - 2.0 * cross.trace();
    // Cancellation in the trace terms leaves rounding noise of order eps * traces.
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * traces;
    return w2sq <= floor ? 0.0 : std::sqrt(w2sq);
}

GaussianSpec pushforward(const Eigen::MatrixXd& a, const GaussianSpec& g)
{
    if (a.cols() != g.mean.size()) {
        throw DimensionError("pushforward: matrix columns do not match the Gaussian dimension");
    }
    Eigen::MatrixXd cov = a * g.cov * a.transpose();
    cov = 0.5 * (cov + cov.transpose());
    return GaussianSpec{a * g.mean, cov};
}

// ---- theorem harness --------------------------------------------------------------

TheoremReport theorem_harness(const Eigen::MatrixXd& a, const GaussianSpec& true_posterior,
                              const GaussianSpec& model_posterior, const Eigen::VectorXd& recon_offset)
{
    if (recon_offset.size() != a.rows()) {
        throw DimensionError("reconstruction offset does not match the decoder output dimension");
    }
    GaussianSpec decoded_model = pushforward(a, model_posterior);
    decoded_model.mean += recon_offset;
    const GaussianSpec decoded_true = pushforward(a, true_posterior);

    TheoremReport r;
    r.lhs = gaussian_w2(decoded_model, decoded_true);
    r.lipschitz = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
    r.eps_flow = gaussian_w2(model_posterior, true_posterior);
    r.eps_rec = recon_offset.norm();
    r.rhs = r.lipschitz * r.eps_flow + r.eps_rec;
    r.slack = r.rhs - r.lhs;
    if (r.slack < -1e-9) {
        std::ostringstream msg;
        msg << std::setprecision(17) << "posterior bound violated: W2 " << r.lhs << " > L_D " << r.lipschitz
            << " * eps_flow " << r.eps_flow << " + eps_rec " << r.eps_rec;
        throw ContractError(msg.str());
    }
    return r;
}

namespace {

Eigen::MatrixXd random_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols)
{
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

GaussianSpec random_gaussian(CounterRng& rng, Eigen::Index d)
{
    const Eigen::MatrixXd b = random_matrix(rng, d, d);
    Eigen::MatrixXd cov = b * b.transpose() + 0.01 * Eigen::MatrixXd::Identity(d, d);
    cov = 0.5 * (cov + cov.transpose());
    return GaussianSpec{random_matrix(rng, d, 1).col(0), cov};
}

} // namespace

std::vector<TheoremReport> theorem_trials(std::size_t trials, std::size_t out_dim, std::size_t latent_dim,
                                          std::uint64_t seed)
{
    std::vector<TheoremReport> out;
    out.reserve(trials);
    const auto n = static_cast<Eigen::Index>(out_dim);
    const auto d = static_cast<Eigen::Index>(latent_dim);
    for (std::size_t t = 0; t < trials; ++t) {
        CounterRng rng(derive_seed(seed, {t}));
        const Eigen::MatrixXd a = random_matrix(rng, n, d);
        const GaussianSpec truth = random_gaussian(rng, d);
        const GaussianSpec model = random_gaussian(rng, d);
        const Eigen::VectorXd offset = 0.1 * random_matrix(rng, n, 1).col(0);
        out.push_back(theorem_harness(a, truth, model, offset));
    }
    return out;
}

// ---- sensor scaling ---------------------------------------------------------------

double loglog_slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) {
        throw DimensionError("loglog_slope: x and y differ in length");
    }
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw DomainError("loglog_slope needs positive values");
        }
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    const auto [lo, hi] = std::minmax_element(lx.begin(), lx.end());
    if (lx.size() < 2 || *lo == *hi) {
        throw ParameterError("loglog_slope needs at least two distinct x values");
    }
    const double n = static_cast<double>(lx.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxy / sxx;
}

SensorSet quasi_uniform_sensors(const PointCloud& cloud, std::size_t m, std::uint64_t seed)
{
    const std::size_t n = cloud.size();
    if (m < 1 || m > n) {
        throw ParameterError("sensor count must lie in [1, " + std::to_string(n) + "], got " + std::to_string(m));
    }
    std::vector<std::size_t> chosen{CounterRng(seed).below(n)};
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    while (chosen.size() < m) {
        const auto last = cloud.coords.row(chosen.back());
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], squared_distance(cloud.coords.row(i), last));
            if (dist[i] > best_d) {
                best_d = dist[i];
                best = i;
            }
        }
        chosen.push_back(best);
    }
    std::sort(chosen.begin(), chosen.end());
    return SensorSet::from_indices(std::move(chosen), n);
}

ScalingReport sensor_scaling_study(const Reconstructor& reconstruct, std::span<const FieldSample> samples,
                                   std::span<const std::size_t> counts, std::span<const std::uint64_t> seeds,
                                   double noise_level, double sobolev_order)
{
    if (counts.size() < 3) {
        throw ParameterError("sensor scaling study needs at least three sensor counts");
    }
    for (std::size_t i = 1; i < counts.size(); ++i) {
        if (counts[i] <= counts[i - 1]) {
            throw ParameterError("sensor counts must be strictly increasing");
        }
    }
    if (samples.empty() || seeds.empty()) {
        throw ParameterError("sensor scaling study needs samples and seeds");
    }
    ScalingReport report;
    report.sobolev_order = sobolev_order;
    for (const std::size_t m : counts) {
        double err = 0.0;
        double fill = 0.0;
        std::size_t cells = 0;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            const FieldSample& sample = samples[s];
            for (const auto seed : seeds) {
                const std::size_t count = std::min(m, sample.cloud.size());
                const SensorSet sensors = quasi_uniform_sensors(sample.cloud, count, derive_seed(seed, {m, s, 0}));
                const ConditioningInstance inst =
                    build_conditioning(sample.cloud, sensors, sample.values, noise_level, {}, derive_seed(seed, {m, s, 1}));
                err += relative_l2_mean(reconstruct(inst), sample.values);
                fill += fill_distance(gather_rows(sample.cloud.coords, sensors.indices), sample.cloud.coords);
                ++cells;
            }
        }
        report.counts.push_back(m);
        report.errors.push_back(err / static_cast<double>(cells));
        report.fill_distances.push_back(fill / static_cast<double>(cells));
    }
    std::vector<double> xs(report.counts.begin(), report.counts.end());
    report.slope = loglog_slope(xs, report.errors);
    return report;
}

Array2 nearest_sensor_interpolation(const ConditioningInstance& inst)
{
    std::vector<std::size_t> observed;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        if (inst.mask[i] > 0.0) {
            observed.push_back(i);
        }
    }
    if (observed.empty()) {
        throw DomainError("nearest-sensor interpolation needs at least one sensor");
    }
    Array2 out(inst.size(), inst.channels());
    for (std::size_t i = 0; i < inst.size(); ++i) {
        std::size_t best = observed.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (auto j : observed) {
            const double d = squared_distance(inst.coords.row(i), inst.coords.row(j));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        for (std::size_t c = 0; c < inst.channels(); ++c) {
            out(i, c) = inst.obs(best, c);
        }
    }
    return out;
}

Array2 rbf_interpolate(const ConditioningInstance& inst, const Array2& queries, double lengthscale, double ridge)
{
    if (!(lengthscale > 0.0) || !(ridge >= 0.0)) {
        throw ParameterError("RBF interpolation needs a positive lengthscale and non-negative ridge");
    }
    if (queries.cols != inst.dim()) {
        throw DimensionError("RBF queries have the wrong coordinate dimension");
    }
    std::vector<std::size_t> observed;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        if (inst.mask[i] > 0.0) {
            observed.push_back(i);
        }
    }
    if (observed.empty()) {
        throw DomainError("RBF interpolation needs at least one sensor");
    }
    const auto k = static_cast<Eigen::Index>(observed.size());
    const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
    Eigen::MatrixXd gram(k, k);
    Eigen::MatrixXd rhs(k, static_cast<Eigen::Index>(inst.channels()));
    for (Eigen::Index a = 0; a < k; ++a) {
        const auto ia = observed[static_cast<std::size_t>(a)];
        for (Eigen::Index b = 0; b < k; ++b) {
            const auto ib = observed[static_cast<std::size_t>(b)];
            gram(a, b) = std::exp(-squared_distance(inst.coords.row(ia), inst.coords.row(ib)) * inv);
        }
        gram(a, a) += ridge;
        for (std::size_t c = 0; c < inst.channels(); ++c) {
            rhs(a, static_cast<Eigen::Index>(c)) = inst.obs(ia, c);
        }
    }
    const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("RBF system factorization failed; increase the ridge");
    }
    const Eigen::MatrixXd weights = solver.solve(rhs);
    Array2 out(queries.rows, inst.channels());
    for (std::size_t q = 0; q < queries.rows; ++q) {
        for (Eigen::Index a = 0; a < k; ++a) {
            const double w =
                std::exp(-squared_distance(queries.row(q), inst.coords.row(observed[static_cast<std::size_t>(a)])) * inv);
            for (std::size_t c = 0; c < inst.channels(); ++c) {
                out(q, c) += w * weights(a, static_cast<Eigen::Index>(c));
            }
        }
    }
    return out;
}

// ---- uncertainty ------------------------------------------------------------------

UncertaintySummary ensemble_uncertainty(const PosteriorEnsemble& ensemble)
{
    if (ensemble.members.size() < 2) {
        throw ParameterError("uncertainty needs at least two ensemble members");
    }
    UncertaintySummary out;
    Array2 mean;
    ensemble_moments(ensemble.members, mean, out.std);
    for (double s : out.std.values) {
        out.mean_std += s / static_cast<double>(out.std.values.size());
        out.max_std = std::max(out.max_std, s);
    }
    return out;
}

// ---- CSV --------------------------------------------------------------------------

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        out << (i ? "," : "") << header[i];
    }
    out << '\n' << std::setprecision(17);
    for (const auto& row : rows) {
        if (row.size() != header.size()) {
            throw DimensionError("CSV row has " + std::to_string(row.size()) + " fields, header has " +
                                 std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << (i ? "," : "") << row[i];
        }
        out << '\n';
    }
}

} // namespace geoflow
