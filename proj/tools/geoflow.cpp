// Command-line driver: data generation, two-stage training, sampling, evaluation and studies.
//
// Exit codes: 0 success, 1 selfcheck failure, 2 usage error, 3 runtime error.

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geoflow/dataset_io.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/evaluation.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/selfcheck.hpp"
#include "geoflow/training.hpp"

namespace fs = std::filesystem;
using namespace geoflow;

namespace {

constexpr int kExitSelfcheck = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

// Stream ids under the root seed, one per consumer.
enum SeedStream : std::uint64_t {
    kFaeInit = 10,
    kFaeTrain = 11,
    kFlowInit = 20,
    kFlowTrain = 21,
    kEvaluation = 30,
    kStudy = 31,
    kSelfcheck = 40,
};

struct Options {
    std::uint64_t seed = 0;

    // gen-data
    std::string kind = "annulus";
    std::size_t n_points = 256;
    std::size_t samples = 64;
    std::string field = "grf";
    double lengthscale = 0.5;
    double amplitude = 1.0;
    std::size_t degree = 4;

    // shared paths
    std::string data;
    std::string fae;
    std::string flow;
    std::string out;
    std::string resume;

    // training overrides (0 / negative keep the preset value)
    std::string preset = "desk";
    std::size_t iters = 0;
    std::size_t batch = 0;
    double lr = -1.0;
    std::size_t log_every = 0;

    // evaluation
    double fraction = 0.5;
    double noise = 0.01;
    std::size_t steps = 10;
    std::size_t members = 8;
    std::size_t index = std::numeric_limits<std::size_t>::max();
    std::size_t max_samples = 0;
    std::vector<std::size_t> counts{16, 64, 256};
    std::size_t trials = 2;
    std::vector<std::size_t> step_list{1, 2, 5, 10, 20, 100, 1000};
};

std::string error_kind(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) {
        return "config";
    }
    if (dynamic_cast<const FormatError*>(&e) != nullptr) {
        return "format";
    }
    if (dynamic_cast<const DimensionError*>(&e) != nullptr) {
        return "dimension";
    }
    if (dynamic_cast<const ParameterError*>(&e) != nullptr) {
        return "parameter";
    }
    if (dynamic_cast<const DomainError*>(&e) != nullptr) {
        return "domain";
    }
    if (dynamic_cast<const ContractError*>(&e) != nullptr) {
        return "contract";
    }
    if (dynamic_cast<const CapacityError*>(&e) != nullptr) {
        return "capacity";
    }
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) {
        return "numerical";
    }
    return "runtime";
}

std::string one_line(std::string s)
{
    for (auto& c : s) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return s;
}

std::ostream& log()
{
    return std::cerr;
}

TrainConfig resolve_train(const Options& o, std::uint64_t stream)
{
    TrainConfig cfg = TrainConfig::preset(o.preset);
    if (o.iters > 0) {
        cfg.iterations = o.iters;
    }
    if (o.batch > 0) {
        cfg.batch_size = o.batch;
    }
    if (o.lr >= 0.0) {
        cfg.base_lr = o.lr;
    }
    if (o.log_every > 0) {
        cfg.log_every = o.log_every;
    }
    cfg.seed = derive_seed(o.seed, {stream});
    cfg.validate();
    return cfg;
}

fs::path output_dir(const Options& o)
{
    const fs::path dir(o.out);
    fs::create_directories(dir);
    return dir;
}

// Creates the parent directory of an output file.
fs::path output_file(const std::string& path)
{
    const fs::path p(path);
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    return p;
}

ProgressFn progress_printer(const char* stage)
{
    const auto start = std::chrono::steady_clock::now();
    return [stage, start](const LossRecord& r) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log() << stage << " step " << r.step << " lr " << r.lr << " loss " << r.loss << " (" << std::fixed
              << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::setprecision(6) << '\n';
    };
}

std::vector<std::size_t> test_indices(const FieldDataset& data, std::size_t limit)
{
    auto idx = split_dataset(data.size()).test;
    if (limit > 0 && idx.size() > limit) {
        idx.resize(limit);
    }
    return idx;
}

EvalSettings eval_settings(const Options& o)
{
    EvalSettings s;
    s.fraction = o.fraction;
    s.noise_level = o.noise;
    s.steps = o.steps;
    s.ensemble_size = o.members;
    s.seed = derive_seed(o.seed, {kEvaluation});
    return s;
}

// ---- subcommands ------------------------------------------------------------------

int cmd_gen_data(const Options& o)
{
    GeneratorSpec spec;
    spec.kind = parse_domain_kind(o.kind);
    spec.n_points = o.n_points;
    spec.samples = o.samples;
    spec.field = o.field;
    spec.lengthscale = o.lengthscale;
    spec.amplitude = o.amplitude;
    spec.harmonic_degree = o.degree;
    spec.seed = o.seed;
    const FieldDataset data = generate_dataset(spec);
    dataset_write(output_file(o.out), data);
    std::cout << "wrote " << data.size() << " samples (d=" << data.meta.d << ", p=" << data.meta.p << ") to " << o.out
              << '\n';
    return 0;
}

int cmd_train_fae(const Options& o)
{
    const FieldDataset raw = dataset_read(o.data);
    const fs::path dir = output_dir(o);
    const auto split = split_dataset(raw.size());

    std::optional<FaeBundle> bundle;
    TrainConfig cfg;
    if (!o.resume.empty()) {
        bundle.emplace(load_fae(o.resume));
        cfg = bundle->train;
        if (o.iters > 0) {
            cfg.iterations = o.iters;
        }
        std::cout << "resuming from " << o.resume << " at iteration " << bundle->state.completed << '\n';
    } else {
        cfg = resolve_train(o, kFaeTrain);
        bundle.emplace(FaeBundle{GeoFae(GeoFaeConfig::preset(o.preset), derive_seed(o.seed, {kFaeInit})),
                                 raw.meta.stats, TrainState{}, cfg});
    }
    const FieldDataset data = normalized(raw, bundle->stats);
    train_stage1(bundle->model, data, split.train, cfg, bundle->state, cfg.iterations, progress_printer("stage-1"));

    make_fae_checkpoint(bundle->model, bundle->stats, bundle->state, cfg).save(dir / "fae.gfck");
    write_history_csv(dir / "fae_history.csv", bundle->state.history);
    std::cout << "completed " << bundle->state.completed << " iterations; parameter hash " << std::hex
              << parameter_hash(bundle->model.parameters()) << std::dec << '\n';
    std::cout << "wrote " << (dir / "fae.gfck").string() << " and " << (dir / "fae_history.csv").string() << '\n';
    return 0;
}

int cmd_train_flow(const Options& o)
{
    const FieldDataset raw = dataset_read(o.data);
    FaeBundle fae = load_fae(o.fae);
    fae.model.freeze();
    const fs::path dir = output_dir(o);
    const auto split = split_dataset(raw.size());
    const FieldDataset data = normalized(raw, fae.stats);

    std::optional<FlowBundle> bundle;
    TrainConfig cfg;
    if (!o.resume.empty()) {
        bundle.emplace(load_flow(o.resume, fae.model));
        cfg = bundle->train;
        if (o.iters > 0) {
            cfg.iterations = o.iters;
        }
        std::cout << "resuming from " << o.resume << " at iteration " << bundle->state.completed << '\n';
    } else {
        cfg = resolve_train(o, kFlowTrain);
        const FlowConfig fc = FlowConfig::preset(o.preset, fae.model.config().embed_dim);
        bundle.emplace(FlowBundle{FlowModel(fc, derive_seed(o.seed, {kFlowInit})), TrainState{}, cfg});
    }
    train_stage2(bundle->model, fae.model, data, split.train, cfg, bundle->state, cfg.iterations,
                 progress_printer("stage-2"));

    make_flow_checkpoint(bundle->model, fae.model, bundle->state, cfg).save(dir / "flow.gfck");
    write_history_csv(dir / "flow_history.csv", bundle->state.history);
    std::cout << "completed " << bundle->state.completed << " iterations\n";
    std::cout << "wrote " << (dir / "flow.gfck").string() << " and " << (dir / "flow_history.csv").string() << '\n';
    return 0;
}

int cmd_sample(const Options& o)
{
    const FieldDataset raw = dataset_read(o.data);
    FaeBundle fae = load_fae(o.fae);
    fae.model.freeze();
    const FlowBundle flow = load_flow(o.flow, fae.model);
    const std::size_t index = o.index == std::numeric_limits<std::size_t>::max() ? test_indices(raw, 1).front() : o.index;
    if (index >= raw.size()) {
        throw ParameterError("sample index " + std::to_string(index) + " is out of range");
    }
    const EvalSettings s = eval_settings(o);
    const FieldSample& target = raw.samples[index];
    const FieldSample norm{PointCloud{normalize_coords(target.cloud.coords, fae.stats.box), target.cloud.domain_id},
                           normalize_values(target.values, fae.stats)};
    const auto inst = evaluation_instance(norm, index, s.fraction, s.noise_level, s.seed);
    const auto ens = posterior_ensemble(flow.model, fae.model, inst, s.ensemble_size, norm.cloud.coords, s.steps,
                                        derive_seed(s.seed, {index, 2}));
    std::vector<Array2> members;
    for (const auto& m : ens.members) {
        members.push_back(denormalize_values(m, fae.stats));
    }
    Array2 mean;
    Array2 std;
    ensemble_moments(members, mean, std);

    std::vector<std::string> header{"node"};
    for (std::size_t k = 0; k < target.cloud.dim(); ++k) {
        header.push_back("x" + std::to_string(k));
    }
    header.push_back("observed");
    for (std::size_t c = 0; c < target.channels(); ++c) {
        header.push_back("target_" + std::to_string(c));
        header.push_back("mean_" + std::to_string(c));
        header.push_back("std_" + std::to_string(c));
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < target.cloud.size(); ++i) {
        std::vector<double> row{static_cast<double>(i)};
        for (std::size_t k = 0; k < target.cloud.dim(); ++k) {
            row.push_back(target.cloud.coords(i, k));
        }
        row.push_back(inst.mask[i]);
        for (std::size_t c = 0; c < target.channels(); ++c) {
            row.push_back(target.values(i, c));
            row.push_back(mean(i, c));
            row.push_back(std(i, c));
        }
        rows.push_back(std::move(row));
    }
    write_csv(output_file(o.out), header, rows);
    std::cout << "sample " << index << ": ensemble-mean relative L2 " << relative_l2_mean(mean, target.values) << '\n';
    std::cout << "wrote " << o.out << '\n';
    return 0;
}

int cmd_eval(const Options& o)
{
    const FieldDataset raw = dataset_read(o.data);
    FaeBundle fae = load_fae(o.fae);
    fae.model.freeze();
    std::optional<FlowBundle> flow;
    if (!o.flow.empty()) {
        flow.emplace(load_flow(o.flow, fae.model));
    }
    const auto idx = test_indices(raw, o.max_samples);
    const auto rows =
        evaluate(fae.model, flow ? &flow->model : nullptr, raw, fae.stats, idx, eval_settings(o));
    std::vector<std::vector<double>> table;
    for (const auto& r : rows) {
        const double headline = flow ? r.flow_rel_l2 : r.fae_rel_l2;
        table.push_back({static_cast<double>(r.sample), headline, r.fae_rel_l2, r.mean_std, r.max_std});
    }
    write_csv(output_file(o.out), {"sample", "relative_l2", "fae_relative_l2", "mean_std", "max_std"}, table);
    std::cout << "test samples " << rows.size() << ", mean relative L2 "
              << (flow ? mean_flow_error(rows) : mean_fae_error(rows)) << " (autoencoder " << mean_fae_error(rows)
              << ")\n";
    std::cout << "wrote " << o.out << '\n';
    return 0;
}

int cmd_study_sensors(const Options& o)
{
    const FieldDataset raw = dataset_read(o.data);
    FaeBundle fae = load_fae(o.fae);
    fae.model.freeze();
    std::optional<FlowBundle> flow;
    if (!o.flow.empty()) {
        flow.emplace(load_flow(o.flow, fae.model));
    }
    const FieldDataset data = normalized(raw, fae.stats);
    std::vector<FieldSample> samples;
    for (auto i : test_indices(raw, o.max_samples)) {
        samples.push_back(data.samples[i]);
    }
    const std::uint64_t study_seed = derive_seed(o.seed, {kStudy});
    std::vector<std::uint64_t> seeds;
    for (std::size_t t = 0; t < o.trials; ++t) {
        seeds.push_back(derive_seed(study_seed, {t}));
    }
    const Reconstructor estimate = [&](const ConditioningInstance& inst) {
        if (flow) {
            return posterior_ensemble(flow->model, fae.model, inst, o.members, inst.coords, o.steps,
                                      derive_seed(study_seed, {inst.size(), 99}))
                .mean;
        }
        return geoflow::reconstruct(fae.model, inst, inst.coords);
    };
    const ScalingReport rep = sensor_scaling_study(estimate, samples, o.counts, seeds, o.noise, 0.0);
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < rep.counts.size(); ++k) {
        rows.push_back({static_cast<double>(rep.counts[k]), rep.fill_distances[k], rep.errors[k]});
    }
    write_csv(output_file(o.out), {"sensors", "fill_distance", "relative_l2"}, rows);
    std::vector<double> xs(rep.counts.begin(), rep.counts.end());
    std::cout << "error log-log slope " << rep.slope << ", fill-distance slope "
              << loglog_slope(xs, rep.fill_distances) << '\n';
    std::cout << "wrote " << o.out << '\n';
    return 0;
}

int cmd_study_steps(const Options& o)
{
    const FieldDataset raw = dataset_read(o.data);
    FaeBundle fae = load_fae(o.fae);
    fae.model.freeze();
    const FlowBundle flow = load_flow(o.flow, fae.model);
    const auto idx = test_indices(raw, o.max_samples);
    const auto errors = step_study(fae.model, flow.model, raw, fae.stats, idx, o.step_list, eval_settings(o));
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < errors.size(); ++k) {
        rows.push_back({static_cast<double>(o.step_list[k]), errors[k]});
        std::cout << "steps " << o.step_list[k] << " relative L2 " << errors[k] << '\n';
    }
    write_csv(output_file(o.out), {"steps", "relative_l2"}, rows);
    std::cout << "wrote " << o.out << '\n';
    return 0;
}

int cmd_selfcheck(const Options& o)
{
    const auto results = run_selfcheck(derive_seed(o.seed, {kSelfcheck}));
    std::size_t failed = 0;
    std::vector<std::vector<double>> rows;
    for (const auto& r : results) {
        std::cout << (r.passed ? "ok   " : "FAIL ") << r.suite << ": " << r.name << " value " << r.value
                  << " bound " << r.threshold << '\n';
        failed += r.passed ? 0 : 1;
        rows.push_back({static_cast<double>(rows.size()), r.passed ? 1.0 : 0.0, r.value, r.threshold});
    }
    if (!o.out.empty()) {
        write_csv(output_file(o.out), {"check", "passed", "value", "bound"}, rows);
    }
    std::cout << results.size() - failed << " of " << results.size() << " checks passed\n";
    if (failed > 0) {
        std::cerr << "error[selfcheck]: " << failed << " check(s) failed\n";
        return kExitSelfcheck;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Geometric function autoencoder with latent rectified flow"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Configuration file (TOML or INI); command-line flags take precedence");
    Options o;
    app.add_option("--seed", o.seed, "Root seed")->envname("GFF_SEED")->capture_default_str();

    auto add_train_flags = [&o](CLI::App* sub) {
        sub->add_option("--data", o.data, "GFFD dataset")->required()->check(CLI::ExistingFile);
        sub->add_option("--preset", o.preset, "Model and schedule preset")
            ->check(CLI::IsMember({"desk", "paper"}))
            ->capture_default_str();
        sub->add_option("--iters", o.iters, "Iterations (default: preset)");
        sub->add_option("--batch", o.batch, "Batch size (default: preset)");
        sub->add_option("--lr", o.lr, "Peak learning rate (default: preset)");
        sub->add_option("--log-every", o.log_every, "Loss history interval (default: preset)");
        sub->add_option("--out", o.out, "Output directory")->required();
        sub->add_option("--resume", o.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
    };
    auto add_eval_flags = [&o](CLI::App* sub, bool flow_required) {
        sub->add_option("--data", o.data, "GFFD dataset")->required()->check(CLI::ExistingFile);
        sub->add_option("--fae", o.fae, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
        auto* flow = sub->add_option("--flow", o.flow, "Flow checkpoint")->check(CLI::ExistingFile);
        if (flow_required) {
            flow->required();
        }
        sub->add_option("--fraction", o.fraction, "Sensor fraction")->capture_default_str();
        sub->add_option("--noise", o.noise, "Noise level relative to the training std")->capture_default_str();
        sub->add_option("--steps", o.steps, "Euler steps")->capture_default_str();
        sub->add_option("--members", o.members, "Posterior ensemble size")->capture_default_str();
        sub->add_option("--max-samples", o.max_samples, "Limit on test samples (0: all)")->capture_default_str();
        sub->add_option("--out", o.out, "Output CSV")->required();
    };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic GFFD dataset");
    gen->add_option("--kind", o.kind, "Domain: annulus, notch_triangle or perturbed_disk")->capture_default_str();
    gen->add_option("--n", o.n_points, "Nodes per cloud")->capture_default_str();
    gen->add_option("--samples", o.samples, "Number of samples")->capture_default_str();
    gen->add_option("--field", o.field, "Field family")->check(CLI::IsMember({"grf", "harmonic"}))->capture_default_str();
    gen->add_option("--lengthscale", o.lengthscale, "GRF lengthscale")->capture_default_str();
    gen->add_option("--amplitude", o.amplitude, "GRF amplitude")->capture_default_str();
    gen->add_option("--degree", o.degree, "Harmonic degree")->capture_default_str();
    gen->add_option("--out", o.out, "Output file")->required();

    auto* train_fae = app.add_subcommand("train-fae", "Stage 1: train the autoencoder");
    add_train_flags(train_fae);

    auto* train_flow = app.add_subcommand("train-flow", "Stage 2: train the latent flow on a frozen autoencoder");
    add_train_flags(train_flow);
    train_flow->add_option("--fae", o.fae, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);

    auto* sample = app.add_subcommand("sample", "Posterior ensemble for one sample, written per node");
    add_eval_flags(sample, true);
    sample->add_option("--index", o.index, "Dataset index (default: first test sample)");

    auto* eval = app.add_subcommand("eval", "Per-sample test errors and uncertainty");
    add_eval_flags(eval, false);

    auto* sensors = app.add_subcommand("study-sensors", "Error against quasi-uniform sensor count");
    add_eval_flags(sensors, false);
    sensors->add_option("--counts", o.counts, "Sensor counts, strictly increasing")->delimiter(',');
    sensors->add_option("--trials", o.trials, "Seeds per count")->capture_default_str();

    auto* steps = app.add_subcommand("study-steps", "Error against the number of Euler steps");
    add_eval_flags(steps, true);
    steps->add_option("--step-list", o.step_list, "Step counts")->delimiter(',');

    auto* selfcheck = app.add_subcommand("selfcheck", "Gradient, invariance, W2 and theorem checks");
    selfcheck->add_option("--out", o.out, "Optional CSV of check results");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[usage]: " << one_line(e.what()) << " (run with --help)\n";
        return kExitUsage;
    }

    CLI::App* active = app.get_subcommands().front();
    std::cout << "# resolved configuration (usable with --config)\n"
              << "seed = " << o.seed << '\n'
              << active->config_to_str(true, false) << std::flush;

    try {
        const std::string name = active->get_name();
        if (name == "gen-data") {
            return cmd_gen_data(o);
        }
        if (name == "train-fae") {
            return cmd_train_fae(o);
        }
        if (name == "train-flow") {
            return cmd_train_flow(o);
        }
        if (name == "sample") {
            return cmd_sample(o);
        }
        if (name == "eval") {
            return cmd_eval(o);
        }
        if (name == "study-sensors") {
            return cmd_study_sensors(o);
        }
        if (name == "study-steps") {
            return cmd_study_steps(o);
        }
        return cmd_selfcheck(o);
    } catch (const std::exception& e) {
        std::cerr << "error[" << error_kind(e) << "]: " << one_line(e.what()) << '\n';
        return kExitRuntime;
    }
}
