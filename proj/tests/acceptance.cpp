// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
//
// Criteria 6 to 9 train the desk pipeline on 256 GRF samples over a 256-node annulus.
// Set GEOFLOW_ACCEPTANCE_CSV to a directory to keep the study tables.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "geoflow/binary_io.hpp"
#include "geoflow/dataset_io.hpp"
#include "geoflow/evaluation.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/selfcheck.hpp"
#include "geoflow/training.hpp"

using namespace geoflow;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
    int failures = 0;

    void report(int id, bool passed, const std::string& detail)
    {
        std::printf("CRITERION %2d %s  %s\n", id, passed ? "PASS" : "FAIL", detail.c_str());
        std::fflush(stdout);
        failures += passed ? 0 : 1;
    }
};

std::string fmt(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// Suite verdict, listing any check that exceeded its bound.
std::string summarize(const std::vector<CheckResult>& results, bool& all_passed)
{
    all_passed = !results.empty();
    std::string failed;
    for (const auto& r : results) {
        if (!r.passed) {
            all_passed = false;
            failed += " [" + r.name + fmt(" %.3g > %.3g]", r.value, r.threshold);
        }
    }
    return fmt("%zu checks", results.size()) + (failed.empty() ? std::string(" all within bounds") : failed);
}

std::string join_values(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += fmt(i == 0 ? "%.4f" : ", %.4f", v[i]);
    }
    return s;
}

void maybe_write(const char* name, const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows)
{
    const char* dir = std::getenv("GEOFLOW_ACCEPTANCE_CSV");
    if (dir == nullptr || *dir == '\0') {
        return;
    }
    fs::create_directories(dir);
    write_csv(fs::path(dir) / name, header, rows);
}

// ---- criteria 1 to 5 --------------------------------------------------------------

void property_criteria(Verdict& v)
{
    bool ok = false;
    const auto start = Clock::now();
    const auto grads = gradient_suite(101);
    const double elapsed = seconds_since(start);
    double worst = 0.0;
    for (const auto& r : grads) {
        worst = std::max(worst, r.value);
    }
    const std::string detail = summarize(grads, ok);
    v.report(1, ok && elapsed < 120.0,
             fmt("gradient suite: max rel err %.2e (< 1e-4), %.1f s (< 120 s); ", worst, elapsed) + detail);

    const auto perm = permutation_suite(102);
    double worst_perm = 0.0;
    for (const auto& r : perm) {
        worst_perm = std::max(worst_perm, r.value);
    }
    const std::string perm_detail = summarize(perm, ok);
    v.report(2, ok, fmt("permutation: max abs latent diff %.2e (<= 1e-8) over m = 8, 64, 333; ", worst_perm) +
                        perm_detail);

    const auto disc = discretization_suite(103);
    const std::string disc_detail = summarize(disc, ok);
    v.report(3, ok, fmt("discretization: latent shape fixed, split-batch diff %.2e (<= 1e-12); ", disc.back().value) +
                        disc_detail);

    const auto thm = theorem_suite(104, 1000);
    const std::string thm_detail = summarize(thm, ok);
    v.report(4, ok,
             fmt("theorem: min slack %.3e over 1000 trials (>= -1e-9), scaled-orthogonal gap %.2e (<= 1e-9); ",
                 thm[0].value, thm[1].value) +
                 thm_detail);

    const auto w2 = w2_suite(105);
    const std::string w2_detail = summarize(w2, ok);
    v.report(5, ok,
             fmt("W2: sort vs assignment %.2e, |W2 - 1| %.4f (<= 0.05), Bures %.2e; ", w2[0].value, w2[1].value,
                 w2[2].value) +
                 w2_detail);
}

// ---- criterion 10 -----------------------------------------------------------------

void schedule_criterion(Verdict& v)
{
    const TrainConfig paper = TrainConfig::paper();
    const double l0 = lr_at(0, paper);
    const double l2500 = lr_at(2500, paper);
    const double l5000 = lr_at(5000, paper);
    const double l10000 = lr_at(10000, paper);
    bool ok = l0 == 0.0 && std::abs(l2500 - 5e-4) < 1e-12 && std::abs(l5000 - 1e-3) < 1e-12 &&
              std::abs(l10000 - 9e-4) < 1e-12;

    double worst = 0.0;
    {
        std::vector<double> p{1.0}, g{1.0}, m{0.0}, s{0.0};
        adamw_update(p, g, m, s, 1, 0.1, 0.0);
        worst = std::max(worst, std::abs(p[0] - (1.0 - 0.1 / (1.0 + 1e-8))));
    }
    {
        std::vector<double> p{1.0}, g{0.0}, m{0.0}, s{0.0};
        adamw_update(p, g, m, s, 1, 1e-3, 1e-5);
        worst = std::max(worst, std::abs(p[0] - (1.0 - 1e-8)));
    }
    {
        std::vector<double> p{0.25}, g{0.0}, m{0.0}, s{0.0};
        adamw_update(p, g, m, s, 1, 0.1, 0.0);
        worst = std::max(worst, std::abs(p[0] - 0.25));
    }
    ok = ok && worst <= 1e-12;
    v.report(10, ok,
             fmt("lr_at(0)=%g lr_at(2500)=%g lr_at(5000)=%g lr_at(10000)=%g; AdamW hand cases max err %.1e", l0,
                 l2500, l5000, l10000, worst));
}

// ---- criterion 11 -----------------------------------------------------------------

bool same_bytes(const fs::path& a, const fs::path& b)
{
    return read_file(a) == read_file(b);
}

void determinism_criterion(Verdict& v, const FieldDataset& raw, const FieldDataset& data,
                           const std::vector<std::size_t>& train)
{
    const fs::path dir = fs::temp_directory_path() / "geoflow_acceptance";
    fs::create_directories(dir);

    TrainConfig cfg = TrainConfig::desk();
    cfg.seed = 77;
    cfg.log_every = 1;

    // Identical seeds, identical runs.
    GeoFae a(GeoFaeConfig::desk(), 5);
    GeoFae b(GeoFaeConfig::desk(), 5);
    TrainState sa;
    TrainState sb;
    train_stage1(a, data, train, cfg, sa, 6);
    train_stage1(b, data, train, cfg, sb, 6);
    make_fae_checkpoint(a, data.meta.stats, sa, cfg).save(dir / "a.gfck");
    make_fae_checkpoint(b, data.meta.stats, sb, cfg).save(dir / "b.gfck");
    const bool reruns = same_bytes(dir / "a.gfck", dir / "b.gfck");

    // Dataset and checkpoint round trips.
    dataset_write(dir / "d.gffd", raw);
    dataset_write(dir / "d2.gffd", dataset_read(dir / "d.gffd"));
    const bool gffd = same_bytes(dir / "d.gffd", dir / "d2.gffd");
    const FaeBundle loaded = load_fae(dir / "a.gfck");
    make_fae_checkpoint(loaded.model, loaded.stats, loaded.state, loaded.train).save(dir / "a2.gfck");
    const bool gfck = same_bytes(dir / "a.gfck", dir / "a2.gfck");

    // Interrupted at 3, resumed to 6.
    GeoFae c(GeoFaeConfig::desk(), 5);
    TrainState sc;
    train_stage1(c, data, train, cfg, sc, 3);
    make_fae_checkpoint(c, data.meta.stats, sc, cfg).save(dir / "part.gfck");
    FaeBundle resumed = load_fae(dir / "part.gfck");
    train_stage1(resumed.model, data, train, resumed.train, resumed.state, 6);
    make_fae_checkpoint(resumed.model, resumed.stats, resumed.state, resumed.train).save(dir / "resumed.gfck");
    const bool resume = same_bytes(dir / "a.gfck", dir / "resumed.gfck");

    // The same for the flow stage.
    a.freeze();
    FlowModel fa(FlowConfig::desk(), 9);
    FlowModel fb(FlowConfig::desk(), 9);
    TrainState ta;
    TrainState tb;
    train_stage2(fa, a, data, train, cfg, ta, 4);
    train_stage2(fb, a, data, train, cfg, tb, 2);
    const Checkpoint part = make_flow_checkpoint(fb, a, tb, cfg);
    FlowBundle fr = load_flow(part, a);
    train_stage2(fr.model, a, data, train, fr.train, fr.state, 4);
    const bool flow_resume = make_flow_checkpoint(fa, a, ta, cfg).serialize() ==
                             make_flow_checkpoint(fr.model, a, fr.state, fr.train).serialize();

    fs::remove_all(dir);
    v.report(11, reruns && gffd && gfck && resume && flow_resume,
             fmt("rerun identical: %s, GFFD round trip: %s, GFCK round trip: %s, stage-1 resume: %s, stage-2 "
                 "resume: %s",
                 reruns ? "yes" : "no", gffd ? "yes" : "no", gfck ? "yes" : "no", resume ? "yes" : "no",
                 flow_resume ? "yes" : "no"));
}

// ---- criteria 6 to 9 --------------------------------------------------------------

double fill_distance_slope(std::vector<double>& fills, const std::vector<std::size_t>& counts)
{
    const PointCloud dense = gen_domain(DomainKind::annulus, 4096, 31);
    fills.clear();
    for (const auto m : counts) {
        const SensorSet s = quasi_uniform_sensors(dense, m, 32);
        Array2 pts(m, 2);
        for (std::size_t i = 0; i < m; ++i) {
            pts(i, 0) = dense.coords(s.indices[i], 0);
            pts(i, 1) = dense.coords(s.indices[i], 1);
        }
        fills.push_back(fill_distance(pts, dense.coords));
    }
    const std::vector<double> xs(counts.begin(), counts.end());
    return loglog_slope(xs, fills);
}

} // namespace

int main()
{
    const auto total = Clock::now();
    Verdict v;

    property_criteria(v);
    schedule_criterion(v);

    GeneratorSpec spec;
    spec.kind = DomainKind::annulus;
    spec.n_points = 256;
    spec.samples = 256;
    spec.lengthscale = 0.5;
    spec.seed = 7;
    const FieldDataset raw = generate_dataset(spec);
    const FieldDataset data = normalized(raw, raw.meta.stats);
    const TrainTestSplit split = split_dataset(raw.size());

    determinism_criterion(v, raw, data, split.train);

    // Criterion 6: stage-1 pilot.
    TrainConfig cfg = TrainConfig::desk();
    cfg.seed = 3;
    GeoFae fae(GeoFaeConfig::desk(), 11);
    const auto t1 = Clock::now();
    TrainState s1;
    train_stage1(fae, data, split.train, cfg, s1, cfg.iterations);
    const double stage1_seconds = seconds_since(t1);
    fae.freeze();

    EvalSettings full;
    full.fraction = 1.0;
    full.noise_level = 0.01;
    full.seed = 99;
    const double err_full = mean_fae_error(evaluate(fae, nullptr, raw, raw.meta.stats, split.test, full));
    const double rbf = rbf_baseline(raw, raw.meta.stats, split.test, full, 0.5, 1e-4);
    const bool within_threshold = err_full < 0.15;
    const bool within_rbf = err_full <= 2.0 * rbf;
    const bool fast = stage1_seconds < 1800.0;
    v.report(6, within_threshold && within_rbf && fast,
             fmt("held-out rel L2 %.4f (< 0.15: %s); RBF oracle %.4f, ratio %.1fx (<= 2x: %s); stage-1 %zu iters in "
                 "%.0f s (< 1800 s)",
                 err_full, within_threshold ? "yes" : "no", rbf, err_full / rbf, within_rbf ? "yes" : "no",
                 cfg.iterations, stage1_seconds));

    // Criterion 7: stage-2 pilot on the same data.
    TrainConfig cfg2 = TrainConfig::desk();
    cfg2.seed = 4;
    FlowModel flow(FlowConfig::desk(fae.config().embed_dim), 12);
    const auto t2 = Clock::now();
    TrainState s2;
    train_stage2(flow, fae, data, split.train, cfg2, s2, cfg2.iterations);
    const double stage2_seconds = seconds_since(t2);

    EvalSettings half = full;
    half.fraction = 0.5;
    half.steps = 10;
    half.ensemble_size = 8;
    const auto rows = evaluate(fae, &flow, raw, raw.meta.stats, split.test, half);
    const double fae_half = mean_fae_error(rows);
    const double flow_half = mean_flow_error(rows);
    double mean_std = 0.0;
    for (const auto& r : rows) {
        mean_std += r.mean_std / static_cast<double>(rows.size());
    }
    v.report(7, flow_half <= 1.5 * fae_half,
             fmt("fraction 0.5: ensemble-mean rel L2 %.4f vs GeoFAE %.4f, ratio %.3f (<= 1.5); mean ensemble std "
                 "%.4f; stage-2 %zu iters in %.0f s",
                 flow_half, fae_half, flow_half / fae_half, mean_std, cfg2.iterations, stage2_seconds));

    // Criterion 8: step-count study plus the straight-line teacher.
    const std::vector<std::size_t> steps{1, 2, 5, 10, 20, 100, 1000};
    EvalSettings study = half;
    study.ensemble_size = 4;
    const auto step_errors = step_study(fae, flow, raw, raw.meta.stats, split.test, steps, study);
    const double e10 = step_errors[3];
    const double e1000 = step_errors.back();
    const double rel_gap = std::abs(e10 - e1000) / e1000;

    CounterRng rng(808);
    std::vector<double> z0v(16 * 32);
    std::vector<double> z1v(16 * 32);
    for (std::size_t i = 0; i < z0v.size(); ++i) {
        z0v[i] = rng.normal();
        z1v[i] = rng.normal();
    }
    const Tensor z0({16, 32}, z0v);
    const Tensor z1({16, 32}, z1v);
    const Tensor zc({16, 32}, std::vector<double>(16 * 32, 0.0));
    const VelocityField teacher = [&](const Tensor&, double, const Tensor&) { return sub(z1, z0); };
    const Tensor one = euler_integrate(teacher, z0, zc, 1);
    const Tensor thousand = euler_integrate(teacher, z0, zc, 1000);
    double teacher_gap = 0.0;
    for (std::size_t i = 0; i < one.numel(); ++i) {
        teacher_gap = std::max(teacher_gap, std::abs(one.data()[i] - thousand.data()[i]));
    }
    std::vector<std::vector<double>> step_rows;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        step_rows.push_back({static_cast<double>(steps[k]), step_errors[k]});
    }
    maybe_write("steps.csv", {"steps", "relative_l2"}, step_rows);
    v.report(8, rel_gap <= 0.2 && teacher_gap <= 1e-12,
             fmt("ensemble-mean rel L2 by steps {1,2,5,10,20,100,1000}: %s; |e10 - e1000| / e1000 = %.3f (<= 0.2); "
                 "teacher 1 vs 1000 steps max diff %.1e",
                 join_values(step_errors).c_str(), rel_gap, teacher_gap));

    // Criterion 9: sensor-fraction trend and fill-distance rate.
    const std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
    const auto trend = fraction_study(fae, &flow, raw, raw.meta.stats, split.test, fractions, half);
    std::vector<double> flow_errors;
    std::vector<double> fae_errors;
    std::vector<std::vector<double>> trend_rows;
    for (const auto& p : trend) {
        flow_errors.push_back(p.flow_error);
        fae_errors.push_back(p.fae_error);
        trend_rows.push_back({p.fraction, p.fae_error, p.flow_error});
    }
    maybe_write("fractions.csv", {"fraction", "fae_relative_l2", "flow_relative_l2"}, trend_rows);
    const MonotonicityReport mono = nonincreasing_check(flow_errors);
    const bool trend_ok = mono.inversions == 0 || (mono.inversions == 1 && mono.worst_increase <= 0.05);
    const std::vector<std::size_t> counts{16, 32, 64, 128, 256, 512};
    std::vector<double> fills;
    const double slope = fill_distance_slope(fills, counts);
    const bool slope_ok = std::abs(slope + 0.5) <= 0.15;
    v.report(9, trend_ok && slope_ok,
             fmt("ensemble-mean rel L2 at fractions {0.25,0.5,0.75,1}: %s (inversions %zu, worst +%.1f%%; GeoFAE %s); "
                 "fill-distance slope %.3f vs -1/d = -0.5 (+-0.15)",
                 join_values(flow_errors).c_str(), mono.inversions, 100.0 * mono.worst_increase,
                 join_values(fae_errors).c_str(), slope));

    std::printf("acceptance: %d of 11 criteria failed, total %.0f s\n", v.failures, seconds_since(total));
    return v.failures == 0 ? 0 : 1;
}
