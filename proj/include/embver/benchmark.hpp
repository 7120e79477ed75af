#pragma once

#include <string>
#include <vector>

#include "embver/common.hpp"
#include "embver/consumer.hpp"
#include "embver/embedding_table.hpp"
#include "embver/encoder.hpp"
#include "embver/graph.hpp"
#include "embver/trainer.hpp"
#include "embver/transform.hpp"

namespace embver {

struct BenchmarkConfig {
    EncoderConfig encoder_base;
    GrowthSchedule growth;
    TrainConfig train;
    int recall_cutoff = 50;
    ConsumerGrid consumer_grid = ConsumerGrid::desk();
    ConsumerTrainConfig consumer_train;
    int consumer_seeds = 3;

    void validate() const;
};

// Frozen version-0 artifacts shared by every method at one seed: the
// version-0 encoder (bit-identical across methods by construction), its
// embeddings of every snapshot (each table also covers the endpoints of the
// following edge window, so cold evaluation nodes are embeddable), and the
// consumer models trained once on version-0 embeddings.
struct ReferenceBundle {
    EncoderParams v0_encoder;
    std::vector<EmbeddingTable> v0_tables;                      // index k = 0..K
    std::vector<std::vector<ConsumerModel>> consumers;          // [task][seed]
    std::vector<std::vector<ConsumerTrainInfo>> consumer_info;  // [task][seed]
};

ReferenceBundle build_reference(const InteractionGraph& graph, const VersionSchedule& schedule,
                                const BenchmarkConfig& config);

struct VersionMetrics {
    int version = 0;
    double recall = 0.0;     // intended retrieval metric on the next window
    double alignment = 0.0;  // mean distance of served vs reference v0 vectors
};

// One downstream task's ROC-AUC across version slots; entries before the
// task's first test slot are NaN.
struct TaskSeries {
    TaskId task = TaskId::user_activity;
    std::vector<double> auc;
};

struct MetricsReport {
    std::string method;
    std::vector<VersionMetrics> per_version;  // k = 0..K
    std::vector<TaskSeries> tasks;            // aligned with TaskSpec::all_tasks()

    // Raw averages: recall over all versions; task ROC-AUC first over each
    // task's test slots and then across tasks; alignment over versions >= 1.
    double avg_recall = 0.0;
    double avg_task_auc = 0.0;
    double avg_alignment = 0.0;

    // Percentages vs the Keep-All baseline, computed from the averages
    // above (average first, then degrade); zero for Keep-All itself.
    double intended_degradation = 0.0;
    double unintended_degradation = 0.0;
    double combined_degradation = 0.0;
};

// Everything a method run produces: metrics plus the per-version artifacts
// (encoders, backward-transform chain, served tables, loss logs) needed to
// persist, audit, or trace error growth.
struct BenchmarkRun {
    MetricsReport report;
    std::vector<EncoderParams> encoders;
    TransformRegistry registry;               // empty for KeepAll / FixM0
    std::vector<EmbeddingTable> tables;       // raw served table per version
    std::vector<std::vector<EpochLoss>> loss_logs;
};

// Runs one method over the whole schedule. For each version k it trains via
// train_version, scores retrieval on the (t_k, t_{k+1}] window, converts the
// latest table to version-0 space through the transform chain (KeepAll and
// FixM0 serve the exact version-0 function instead), evaluates the frozen
// consumers on the converted table, and measures alignment against the
// reference version-0 embeddings. `keepall_baseline` must be the Keep-All
// report at the same seed for every other method (StateError otherwise) and
// may be null only for Keep-All itself.
BenchmarkRun run_benchmark(const InteractionGraph& graph, const VersionSchedule& schedule,
                           const MethodSpec& method, const BenchmarkConfig& config,
                           const ReferenceBundle& reference,
                           const MetricsReport* keepall_baseline);

// Methods whose consumers are served from the latest model through a
// backward chain; the group competing on the combined degradation score.
bool in_keep_latest_group(Method method);

}  // namespace embver
