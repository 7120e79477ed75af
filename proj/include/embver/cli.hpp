#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "embver/graph.hpp"

namespace embver {

// Environment variable naming the root that relative run directories are
// resolved against.
inline constexpr const char* kRunRootEnv = "EMBVER_RUN_ROOT";

struct IngestOptions {
    std::filesystem::path edges;
    std::filesystem::path features;
    std::filesystem::path output;
    std::filesystem::path stats;  // empty: "<output>.stats.json"
};

struct SynthOptions {
    SyntheticConfig config;
    std::filesystem::path output;
    std::filesystem::path stats;  // empty: "<output>.stats.json"
};

struct RunOptions {
    std::filesystem::path config_path;
    std::string output_override;            // --output beats the config field
    std::vector<std::string> overrides;     // repeated --set path=value
    int workers = 1;                        // methods trained concurrently
    bool lambda_sweep = false;              // one report per trade-off weight
};

struct ConvertOptions {
    std::filesystem::path table_path;
    std::filesystem::path registry_path;
    std::filesystem::path output;
    int target_version = 0;
};

struct ReportOptions {
    std::filesystem::path run_dir;
};

// Command bodies; they throw (ValidationError and friends for bad input,
// NumericError/StateError for runtime failures) and cli_main maps the
// exception taxonomy onto the exit-code contract: 0 success, 2 configuration
// or validation failure, 3 numeric or other runtime failure.
void cmd_ingest(const IngestOptions& opts);
void cmd_synth(const SynthOptions& opts);
void cmd_run(const RunOptions& opts);
void cmd_convert(const ConvertOptions& opts);
void cmd_report(const ReportOptions& opts);

int cli_main(int argc, const char* const* argv);

}  // namespace embver
