#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "embver/benchmark.hpp"
#include "embver/graph.hpp"

namespace embver {

// Where a run gets its interaction graph from: a seeded generator, a raw
// edge-list + feature-file pair, or a previously persisted graph container.
enum class DatasetKind { synthetic, files, graph_file };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::synthetic;
    SyntheticConfig synthetic;  // seed defaults to the run's global seed
    std::filesystem::path edges;
    std::filesystem::path features;
    std::filesystem::path graph_path;
};

// One experiment described by a single JSON file. Scalar fields can be
// overridden from the command line; everything else lives in the file so a
// run is reproducible from one artifact plus the seed.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir;  // may instead come from a flag at run time
    DatasetSpec dataset;
    std::vector<double> schedule;

    EncoderConfig encoder_base;  // version pinned to 0; feature dim from graph
    GrowthSchedule growth;
    TrainConfig train;  // seed pinned to the global seed

    std::vector<std::string> methods;  // canonical method names, run in order
    ConsumerGrid consumer_grid = ConsumerGrid::desk();
    ConsumerTrainConfig consumer_train;
    int consumer_seeds = 3;
    int recall_cutoff = 50;

    // Field-level checks (method names, schedule shape, referenced paths
    // exist, positive counts). Throws ValidationError naming the field.
    void validate() const;

    // Benchmark view of this config once the graph's feature width is known.
    BenchmarkConfig to_benchmark_config(std::size_t input_feature_dim) const;

    // Materializes the dataset (generate, ingest, or load).
    InteractionGraph load_graph() const;

    VersionSchedule make_schedule() const;
};

// Parses the documented schema; unknown keys and type mismatches raise
// ValidationError messages prefixed with the JSON path of the bad field.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Resolved round-trip form with every default materialized.
nlohmann::json run_config_to_json(const RunConfig& config);

// Applies a "dotted.path=value" override onto the raw JSON document before
// parsing. Only scalar leaves may be set; values are parsed as bool, integer,
// real, or string in that order.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Metric report serialization; NaN round-trips through JSON null.
nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// Re-derives the three degradation percentages of `report` from its stored
// raw averages against the baseline's. The baseline must be Keep-All.
void recompute_degradations(MetricsReport& report, const MetricsReport& baseline);

// Fixed-width summary table, one row per report in the given order:
// retrieval (x100), task ROC-AUC, intended / unintended / combined
// degradation percentages, and alignment error.
std::string summary_table(const std::vector<MetricsReport>& reports);

// Baseline first, then remaining reports by descending combined degradation
// (ties by canonical method-name order): the serving-table ranking.
std::vector<MetricsReport> order_reports(std::vector<MetricsReport> reports);

}  // namespace embver
