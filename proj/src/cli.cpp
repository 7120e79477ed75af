#include "embver/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "embver/benchmark.hpp"
#include "embver/run_config.hpp"
#include "embver/trainer.hpp"
#include "embver/transform.hpp"

namespace embver {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw StateError("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

fs::path stats_path_for(const fs::path& requested, const fs::path& output) {
    if (!requested.empty()) return requested;
    fs::path p = output;
    p += ".stats.json";
    return p;
}

void write_graph_stats(const fs::path& path, const InteractionGraph& graph,
                       const IngestStats* ingest_stats) {
    json stats;
    stats["num_users"] = graph.num_users();
    stats["num_items"] = graph.num_items();
    stats["num_interactions"] = graph.num_interactions();
    stats["feature_dim"] = graph.feature_dim();
    if (ingest_stats != nullptr) {
        stats["num_brands"] = ingest_stats->num_brands;
        stats["num_subcategories"] = ingest_stats->num_subcategories;
    }
    write_json(path, stats);
}

std::string format_lambda(double lambda) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", lambda);
    return buf;
}

fs::path resolve_run_dir(const RunConfig& config, const std::string& override_dir) {
    const std::string dir = !override_dir.empty() ? override_dir : config.output_dir;
    if (dir.empty())
        throw ValidationError("output_dir: set it in the config file or pass --output");
    fs::path path = dir;
    if (path.is_relative()) {
        const char* root = std::getenv(kRunRootEnv);
        if (root != nullptr && *root != '\0') path = fs::path(root) / path;
    }
    return path;
}

std::string loss_log_csv(const std::vector<EpochLoss>& log) {
    std::string out = "epoch,stage,intended,alignment,total\n";
    char line[160];
    for (const EpochLoss& e : log) {
        std::snprintf(line, sizeof(line), "%d,%s,%.17g,%.17g,%.17g\n", e.epoch,
                      to_string(e.stage).c_str(), e.intended, e.alignment, e.total);
        out += line;
    }
    return out;
}

// Checkpoints, chain, served tables, loss curves, and the metric trace:
// everything needed to audit or resume the method's part of the run.
void persist_method_run(const fs::path& dir, const BenchmarkRun& run) {
    fs::create_directories(dir);
    for (std::size_t k = 0; k < run.encoders.size(); ++k) {
        const std::string v = std::to_string(k);
        run.encoders[k].save(dir / ("encoder_v" + v + ".bin"));
        run.tables[k].save(dir / ("table_v" + v + ".bin"));
        write_text(dir / ("loss_v" + v + ".csv"), loss_log_csv(run.loss_logs[k]));
    }
    if (!run.registry.empty()) run.registry.save(dir / "registry.bin");
    write_json(dir / "metrics.json", report_to_json(run.report));
}

void write_summary(const fs::path& dir, std::vector<MetricsReport> reports) {
    reports = order_reports(std::move(reports));
    json j;
    j["reports"] = json::array();
    for (const MetricsReport& r : reports) j["reports"].push_back(report_to_json(r));
    write_json(dir / "summary.json", j);
    write_text(dir / "summary.txt", summary_table(reports));
}

MetricsReport load_report_file(const fs::path& path) { return report_from_json(read_json(path)); }

// Runs every non-baseline method at one trade-off weight, `workers` at a
// time. Results are collected and persisted in method order, so the artifacts
// and any failure are independent of the worker count.
std::vector<MetricsReport> run_methods_at_lambda(
    const InteractionGraph& graph, const VersionSchedule& schedule,
    const std::vector<std::string>& methods, const BenchmarkConfig& bench,
    const ReferenceBundle& reference, const MetricsReport& baseline, const fs::path& methods_dir,
    int workers) {
    std::vector<MetricsReport> reports;
    for (std::size_t begin = 0; begin < methods.size();
         begin += static_cast<std::size_t>(workers)) {
        const std::size_t end =
            std::min(methods.size(), begin + static_cast<std::size_t>(workers));
        std::vector<std::future<BenchmarkRun>> wave;
        for (std::size_t m = begin; m < end; ++m) {
            const MethodSpec spec = MethodSpec::parse(methods[m]);
            wave.push_back(std::async(std::launch::async, [&, spec] {
                return run_benchmark(graph, schedule, spec, bench, reference, &baseline);
            }));
        }
        for (std::size_t m = begin; m < end; ++m) {
            BenchmarkRun run = wave[m - begin].get();
            persist_method_run(methods_dir / methods[m], run);
            reports.push_back(std::move(run.report));
        }
    }
    return reports;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e) != nullptr) return 2;
    return 3;
}

}  // namespace

void cmd_ingest(const IngestOptions& opts) {
    IngestStats stats;
    const InteractionGraph graph = ingest(opts.edges, opts.features, &stats);
    if (!opts.output.parent_path().empty()) fs::create_directories(opts.output.parent_path());
    graph.save(opts.output);
    write_graph_stats(stats_path_for(opts.stats, opts.output), graph, &stats);
}

void cmd_synth(const SynthOptions& opts) {
    const InteractionGraph graph = generate_synthetic(opts.config);
    if (!opts.output.parent_path().empty()) fs::create_directories(opts.output.parent_path());
    graph.save(opts.output);
    write_graph_stats(stats_path_for(opts.stats, opts.output), graph, nullptr);
}

void cmd_run(const RunOptions& opts) {
    if (opts.workers < 1) throw ValidationError("workers: must be >= 1");
    json raw = read_json(opts.config_path);
    for (const std::string& assignment : opts.overrides) apply_override(raw, assignment);
    const RunConfig config = parse_run_config(raw);

    const fs::path dir = resolve_run_dir(config, opts.output_override);
    fs::create_directories(dir / "methods");
    write_json(dir / "config.json", run_config_to_json(config));

    const InteractionGraph graph = config.load_graph();
    const VersionSchedule schedule = config.make_schedule();
    const BenchmarkConfig bench = config.to_benchmark_config(graph.feature_dim());

    // Keep-All comes first: every other method is scored against it.
    const std::string keepall = MethodSpec{Method::keep_all}.name();
    std::vector<std::string> rest;
    for (const std::string& name : config.methods)
        if (name != keepall) rest.push_back(name);

    auto fail_marker = [&](const std::string& stage, double lambda, const std::string& error) {
        json marker;
        marker["stage"] = stage;
        marker["lambda"] = lambda;
        marker["error"] = error;
        write_json(dir / "FAILED.json", marker);
    };

    MetricsReport baseline;
    try {
        const ReferenceBundle reference = build_reference(graph, schedule, bench);

        const fs::path keepall_dir = dir / "methods" / keepall;
        if (fs::exists(keepall_dir / "metrics.json")) {
            baseline = load_report_file(keepall_dir / "metrics.json");
        } else {
            BenchmarkRun run =
                run_benchmark(graph, schedule, MethodSpec{Method::keep_all}, bench, reference,
                              nullptr);
            persist_method_run(keepall_dir, run);
            baseline = std::move(run.report);
        }

        std::vector<double> lambdas{bench.train.lambda};
        if (opts.lambda_sweep) lambdas = {1.0, 2.0, 4.0, 8.0, 16.0, 32.0};

        for (double lambda : lambdas) {
            const fs::path scope =
                opts.lambda_sweep ? dir / ("lambda_" + format_lambda(lambda)) : dir;
            const fs::path methods_dir = opts.lambda_sweep ? scope / "methods" : dir / "methods";
            fs::create_directories(methods_dir);
            BenchmarkConfig bench_lambda = bench;
            bench_lambda.train.lambda = lambda;
            std::vector<MetricsReport> reports;
            try {
                reports = run_methods_at_lambda(graph, schedule, rest, bench_lambda, reference,
                                                baseline, methods_dir, opts.workers);
            } catch (const Error& e) {
                fail_marker("methods at lambda " + format_lambda(lambda), lambda, e.what());
                throw;
            }
            reports.insert(reports.begin(), baseline);
            write_summary(scope, std::move(reports));
        }
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        if (!fs::exists(dir / "FAILED.json")) fail_marker("reference", bench.train.lambda, e.what());
        throw;
    }
}

void cmd_convert(const ConvertOptions& opts) {
    if (!fs::exists(opts.registry_path))
        throw ValidationError("registry file not found: " + opts.registry_path.string());
    if (!fs::exists(opts.table_path))
        throw ValidationError("table file not found: " + opts.table_path.string());
    const TransformRegistry registry = TransformRegistry::load(opts.registry_path);
    const EmbeddingTable table = EmbeddingTable::load(opts.table_path);
    const EmbeddingTable converted = to_version(registry, table, opts.target_version);
    if (!opts.output.parent_path().empty()) fs::create_directories(opts.output.parent_path());
    converted.save(opts.output);
}

void cmd_report(const ReportOptions& opts) {
    if (!fs::is_directory(opts.run_dir))
        throw ValidationError("run directory not found: " + opts.run_dir.string());
    const std::string keepall = MethodSpec{Method::keep_all}.name();

    // A sweep produces one summary scope per trade-off weight; a plain run
    // has a single scope at the top level.
    std::vector<fs::path> scopes;
    for (const fs::directory_entry& entry : fs::directory_iterator(opts.run_dir)) {
        if (entry.is_directory() && entry.path().filename().string().rfind("lambda_", 0) == 0 &&
            fs::is_directory(entry.path() / "methods"))
            scopes.push_back(entry.path());
    }
    std::sort(scopes.begin(), scopes.end());
    if (scopes.empty()) scopes.push_back(opts.run_dir);

    const fs::path baseline_file = opts.run_dir / "methods" / keepall / "metrics.json";
    if (!fs::exists(baseline_file))
        throw ValidationError("Keep-All report not found: " + baseline_file.string());
    const MetricsReport baseline = load_report_file(baseline_file);

    for (const fs::path& scope : scopes) {
        std::vector<fs::path> method_dirs;
        for (const fs::directory_entry& entry : fs::directory_iterator(scope / "methods")) {
            if (entry.is_directory() && fs::exists(entry.path() / "metrics.json"))
                method_dirs.push_back(entry.path());
        }
        std::sort(method_dirs.begin(), method_dirs.end());
        std::vector<MetricsReport> reports;
        bool saw_baseline = false;
        for (const fs::path& mdir : method_dirs) {
            MetricsReport report = load_report_file(mdir / "metrics.json");
            saw_baseline = saw_baseline || report.method == keepall;
            reports.push_back(std::move(report));
        }
        if (!saw_baseline) reports.push_back(baseline);
        // Degradations are re-derived from the stored raw averages so the
        // summary stays consistent even if metric files were edited.
        for (MetricsReport& report : reports) recompute_degradations(report, baseline);
        write_summary(scope, std::move(reports));
    }
}

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"backward-compatible embedding version management toolkit"};
    app.require_subcommand(1);

    IngestOptions ingest_opts;
    CLI::App* ingest_cmd =
        app.add_subcommand("ingest", "convert an edge list + item-feature file into a graph");
    ingest_cmd->add_option("--edges", ingest_opts.edges, "edge list file")->required();
    ingest_cmd->add_option("--features", ingest_opts.features, "item feature file")->required();
    ingest_cmd->add_option("--output", ingest_opts.output, "persisted graph path")->required();
    ingest_cmd->add_option("--stats", ingest_opts.stats, "stats summary path");

    SynthOptions synth_opts;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a seeded synthetic graph");
    synth_cmd->add_option("--seed", synth_opts.config.seed, "generator seed");
    synth_cmd->add_option("--users", synth_opts.config.num_users, "number of users");
    synth_cmd->add_option("--items", synth_opts.config.num_items, "number of items");
    synth_cmd->add_option("--interactions", synth_opts.config.num_interactions,
                          "number of interactions");
    synth_cmd->add_option("--feature-dim", synth_opts.config.feature_dim, "item feature width");
    synth_cmd->add_option("--latent-dim", synth_opts.config.latent_dim, "planted factor rank");
    synth_cmd->add_option("--output", synth_opts.output, "persisted graph path")->required();
    synth_cmd->add_option("--stats", synth_opts.stats, "stats summary path");

    RunOptions run_opts;
    CLI::App* run_cmd = app.add_subcommand("run", "run the version-management benchmark");
    run_cmd->add_option("--config", run_opts.config_path, "JSON run configuration")->required();
    run_cmd->add_option("--output", run_opts.output_override,
                        "run directory (overrides the config field)");
    run_cmd->add_option("--set", run_opts.overrides,
                        "scalar config override, e.g. --set train.epochs=50");
    run_cmd->add_option("--workers", run_opts.workers, "methods trained concurrently");
    run_cmd->add_flag("--lambda-sweep", run_opts.lambda_sweep,
                      "run the alignment-weight sweep {1,2,4,8,16,32}");

    ConvertOptions convert_opts;
    CLI::App* convert_cmd =
        app.add_subcommand("convert", "convert an embedding table to an older version");
    convert_cmd->add_option("--table", convert_opts.table_path, "embedding table file")
        ->required();
    convert_cmd->add_option("--registry", convert_opts.registry_path, "transform registry file")
        ->required();
    convert_cmd->add_option("--to", convert_opts.target_version, "target version")->required();
    convert_cmd->add_option("--output", convert_opts.output, "converted table path")->required();

    ReportOptions report_opts;
    CLI::App* report_cmd =
        app.add_subcommand("report", "reassemble summaries from stored metric traces");
    report_cmd->add_option("--run", report_opts.run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (ingest_cmd->parsed()) cmd_ingest(ingest_opts);
        if (synth_cmd->parsed()) cmd_synth(synth_opts);
        if (run_cmd->parsed()) cmd_run(run_opts);
        if (convert_cmd->parsed()) cmd_convert(convert_opts);
        if (report_cmd->parsed()) cmd_report(report_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}

}  // namespace embver
