#include "embver/benchmark.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "embver/common.hpp"
#include "embver/consumer.hpp"
#include "embver/graph.hpp"
#include "embver/trainer.hpp"
#include "test_support.hpp"

namespace embver {
namespace {

double mat_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Small but non-degenerate world: every task has both label classes in every
// slot of this graph/schedule combination, and both edge windows are
// non-empty, so all metrics are well defined.
BenchmarkConfig tiny_config() {
    BenchmarkConfig config;
    config.encoder_base.version = 0;
    config.encoder_base.num_layers = 1;
    config.encoder_base.hidden_dim = 12;
    config.encoder_base.input_feature_dim = 16;
    config.growth.dim_step = 4;
    config.growth.add_layer_at = 2;
    config.train.epochs = 12;
    config.train.seed = 11;
    config.recall_cutoff = 5;
    config.consumer_grid = ConsumerGrid{{8}, {0.0}};
    config.consumer_train.max_epochs = 40;
    config.consumer_train.patience = 6;
    config.consumer_seeds = 2;
    return config;
}

struct World {
    InteractionGraph graph;
    VersionSchedule schedule;
    BenchmarkConfig config;
    ReferenceBundle reference;
    BenchmarkRun keep_all;
};

const World& world() {
    static const World w = [] {
        SyntheticConfig synth;
        synth.seed = 11;
        synth.num_users = 60;
        synth.num_items = 30;
        synth.num_interactions = 1200;
        synth.feature_dim = 16;
        synth.latent_dim = 4;
        InteractionGraph graph = generate_synthetic(synth);
        VersionSchedule schedule({0.5, 0.65, 0.8});
        BenchmarkConfig config = tiny_config();
        ReferenceBundle reference = build_reference(graph, schedule, config);
        BenchmarkRun keep_all = run_benchmark(graph, schedule, MethodSpec{Method::keep_all},
                                              config, reference, nullptr);
        return World{std::move(graph), schedule, config, std::move(reference),
                     std::move(keep_all)};
    }();
    return w;
}

BenchmarkRun run_method(Method method) {
    const World& w = world();
    return run_benchmark(w.graph, w.schedule, MethodSpec{method}, w.config, w.reference,
                         &w.keep_all.report);
}

TEST(BenchmarkConfig, ValidationRejectsBadFields) {
    BenchmarkConfig config = tiny_config();
    EXPECT_NO_THROW(config.validate());

    BenchmarkConfig bad = config;
    bad.recall_cutoff = 0;
    EXPECT_THROW(bad.validate(), ValidationError);

    bad = config;
    bad.consumer_seeds = 0;
    EXPECT_THROW(bad.validate(), ValidationError);

    bad = config;
    bad.consumer_grid.hidden_dims.clear();
    EXPECT_THROW(bad.validate(), ValidationError);

    bad = config;
    bad.train.epochs = 0;
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(KeepLatestGroup, ContainsExactlyTheServedFromLatestMethods) {
    EXPECT_FALSE(in_keep_latest_group(Method::keep_all));
    EXPECT_FALSE(in_keep_latest_group(Method::fix_m0));
    EXPECT_FALSE(in_keep_latest_group(Method::finetune_m0));
    EXPECT_TRUE(in_keep_latest_group(Method::non_bc));
    EXPECT_TRUE(in_keep_latest_group(Method::post_lin_sloss));
    EXPECT_TRUE(in_keep_latest_group(Method::post_lin_mloss));
    EXPECT_TRUE(in_keep_latest_group(Method::joint_no_trans));
    EXPECT_TRUE(in_keep_latest_group(Method::joint_lin_sloss));
    EXPECT_TRUE(in_keep_latest_group(Method::bc_aligner));
}

TEST(ReferenceBundle, HasExpectedShapeAndCoverage) {
    const World& w = world();
    const ReferenceBundle& ref = w.reference;
    const int num_versions = w.schedule.last_version() + 1;

    ASSERT_EQ(ref.v0_tables.size(), static_cast<std::size_t>(num_versions));
    const auto& tasks = TaskSpec::all_tasks();
    ASSERT_EQ(ref.consumers.size(), tasks.size());
    ASSERT_EQ(ref.consumer_info.size(), tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        ASSERT_EQ(ref.consumers[t].size(), 2u);
        ASSERT_EQ(ref.consumer_info[t].size(), 2u);
        for (const ConsumerModel& model : ref.consumers[t]) {
            EXPECT_EQ(model.task, tasks[t]);
            EXPECT_EQ(model.input_dim,
                      TaskSpec{tasks[t]}.input_dim(w.config.encoder_base.output_dim()));
        }
        for (const ConsumerTrainInfo& info : ref.consumer_info[t]) {
            EXPECT_GT(info.epochs_run, 0);
            EXPECT_TRUE(std::isfinite(info.validation_auc));
        }
    }

    for (int k = 0; k < num_versions; ++k) {
        const EmbeddingTable& table = ref.v0_tables[k];
        EXPECT_EQ(table.version(), 0);
        EXPECT_EQ(table.dim(), w.config.encoder_base.output_dim());
        // Covers the snapshot plus the endpoints of the following window, so
        // cold evaluation nodes are embeddable.
        const Snapshot snap = snapshot_at(w.graph, w.schedule, k);
        for (NodeId u : snap.users()) EXPECT_TRUE(table.has(NodeKind::user, u));
        for (NodeId i : snap.items()) EXPECT_TRUE(table.has(NodeKind::item, i));
        const EdgeRange window = delta_edges(w.graph, w.schedule, k);
        for (std::size_t e = window.begin; e < window.end; ++e) {
            const Interaction& edge = w.graph.interactions()[e];
            EXPECT_TRUE(table.has(NodeKind::user, edge.user_id));
            EXPECT_TRUE(table.has(NodeKind::item, edge.item_id));
        }
    }
}

TEST(ReferenceBundle, BuildIsDeterministic) {
    const World& w = world();
    const ReferenceBundle again = build_reference(w.graph, w.schedule, w.config);
    EXPECT_TRUE(again.v0_encoder == w.reference.v0_encoder);
    ASSERT_EQ(again.v0_tables.size(), w.reference.v0_tables.size());
    for (std::size_t k = 0; k < again.v0_tables.size(); ++k) {
        EXPECT_TRUE(again.v0_tables[k] == w.reference.v0_tables[k]);
    }
    for (std::size_t t = 0; t < again.consumers.size(); ++t) {
        for (std::size_t s = 0; s < again.consumers[t].size(); ++s) {
            const ConsumerModel& a = again.consumers[t][s];
            const ConsumerModel& b = w.reference.consumers[t][s];
            EXPECT_EQ(mat_diff(a.hidden_weight, b.hidden_weight), 0.0);
            EXPECT_EQ(mat_diff(a.output_weight, b.output_weight), 0.0);
            EXPECT_EQ(a.output_bias, b.output_bias);
            EXPECT_EQ(again.consumer_info[t][s].validation_auc,
                      w.reference.consumer_info[t][s].validation_auc);
        }
    }
}

TEST(RunBenchmark, KeepAllBaselineHasZeroDegradationAndAlignment) {
    const World& w = world();
    const BenchmarkRun& run = w.keep_all;
    const MetricsReport& report = run.report;
    const int num_versions = w.schedule.last_version() + 1;

    EXPECT_EQ(report.method, "KeepAll");
    ASSERT_EQ(report.per_version.size(), static_cast<std::size_t>(num_versions));
    ASSERT_EQ(run.tables.size(), static_cast<std::size_t>(num_versions));
    ASSERT_EQ(run.encoders.size(), static_cast<std::size_t>(num_versions));
    ASSERT_EQ(run.loss_logs.size(), static_cast<std::size_t>(num_versions));
    EXPECT_TRUE(run.registry.empty());

    for (int k = 0; k < num_versions; ++k) {
        const VersionMetrics& vm = report.per_version[k];
        EXPECT_EQ(vm.version, k);
        EXPECT_GT(vm.recall, 0.0);
        EXPECT_LE(vm.recall, 1.0);
        // Serves the identical reference function, so alignment is exactly 0.
        EXPECT_EQ(vm.alignment, 0.0);
        EXPECT_EQ(run.tables[k].version(), k);
        EXPECT_EQ(run.encoders[k].version(), k);
        EXPECT_FALSE(run.loss_logs[k].empty());
    }

    // Version growth must follow the schedule: 12 -> 16 -> 20 wide.
    EXPECT_EQ(run.tables[0].dim(), 12);
    EXPECT_EQ(run.tables[1].dim(), 16);
    EXPECT_EQ(run.tables[2].dim(), 20);

    // Baseline degradations are identically zero, averages finite.
    EXPECT_EQ(report.intended_degradation, 0.0);
    EXPECT_EQ(report.unintended_degradation, 0.0);
    EXPECT_EQ(report.combined_degradation, 0.0);
    EXPECT_TRUE(std::isfinite(report.avg_recall));
    EXPECT_TRUE(std::isfinite(report.avg_task_auc));
    EXPECT_EQ(report.avg_alignment, 0.0);

    // Task series: user tasks first tested at slot 2, item/edge tasks at 1.
    const auto& tasks = TaskSpec::all_tasks();
    ASSERT_EQ(report.tasks.size(), tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskSeries& series = report.tasks[t];
        const TaskSpec spec{tasks[t]};
        EXPECT_EQ(series.task, tasks[t]);
        ASSERT_EQ(series.auc.size(), static_cast<std::size_t>(num_versions));
        const int first = spec.first_test_slot();
        for (int k = 0; k < num_versions; ++k) {
            if (k < first) {
                EXPECT_TRUE(std::isnan(series.auc[k])) << spec.name() << " slot " << k;
            } else {
                EXPECT_TRUE(std::isfinite(series.auc[k])) << spec.name() << " slot " << k;
                EXPECT_GE(series.auc[k], 0.0);
                EXPECT_LE(series.auc[k], 1.0);
            }
        }
    }

    // The reported averages match their definitions.
    double recall_sum = 0.0;
    for (const VersionMetrics& vm : report.per_version) recall_sum += vm.recall;
    EXPECT_DOUBLE_EQ(report.avg_recall, recall_sum / num_versions);
}

TEST(RunBenchmark, FixM0ServesTheExactVersionZeroFunction) {
    const World& w = world();
    const BenchmarkRun run = run_method(Method::fix_m0);
    const MetricsReport& report = run.report;

    EXPECT_EQ(report.method, "FixM0");
    EXPECT_TRUE(run.registry.empty());
    // The encoder never changes.
    for (const EncoderParams& enc : run.encoders) {
        EXPECT_TRUE(enc == w.reference.v0_encoder);
    }
    // Serving the frozen function keeps every consumer input bit-identical,
    // so alignment and unintended degradation are exactly zero.
    for (const VersionMetrics& vm : report.per_version) {
        EXPECT_EQ(vm.alignment, 0.0);
    }
    EXPECT_EQ(report.avg_alignment, 0.0);
    EXPECT_EQ(report.unintended_degradation, 0.0);
    for (std::size_t t = 0; t < report.tasks.size(); ++t) {
        const auto& fixed = report.tasks[t].auc;
        const auto& base = w.keep_all.report.tasks[t].auc;
        ASSERT_EQ(fixed.size(), base.size());
        for (std::size_t k = 0; k < fixed.size(); ++k) {
            if (std::isnan(base[k])) {
                EXPECT_TRUE(std::isnan(fixed[k]));
            } else {
                EXPECT_EQ(fixed[k], base[k]);
            }
        }
    }
    EXPECT_EQ(report.avg_task_auc, w.keep_all.report.avg_task_auc);
    // Combined score therefore reduces to the intended part.
    EXPECT_DOUBLE_EQ(report.combined_degradation, report.intended_degradation);
    // Version 0 retrieval matches the baseline bitwise; later versions are
    // scored with the stale model and may differ.
    EXPECT_EQ(report.per_version[0].recall, w.keep_all.report.per_version[0].recall);
}

TEST(RunBenchmark, PosthocRetrievalMatchesKeepAllBitwise) {
    const World& w = world();
    const BenchmarkRun run = run_method(Method::post_lin_sloss);
    const MetricsReport& report = run.report;

    EXPECT_EQ(report.method, "PostLinSLoss");
    // Stage one is ranking-only training with the same seed stream, so the
    // encoders and retrieval numbers equal Keep-All's exactly.
    ASSERT_EQ(run.encoders.size(), w.keep_all.encoders.size());
    for (std::size_t k = 0; k < run.encoders.size(); ++k) {
        EXPECT_TRUE(run.encoders[k] == w.keep_all.encoders[k]);
        EXPECT_TRUE(run.tables[k] == w.keep_all.tables[k]);
        EXPECT_EQ(report.per_version[k].recall, w.keep_all.report.per_version[k].recall);
    }
    EXPECT_EQ(report.avg_recall, w.keep_all.report.avg_recall);
    EXPECT_EQ(report.intended_degradation, 0.0);

    // The learned chain exists and is linear at every step.
    EXPECT_EQ(run.registry.latest_version(), w.schedule.last_version());
    for (int k = 1; k <= run.registry.latest_version(); ++k) {
        EXPECT_EQ(run.registry.transform(k).kind(), TransformKind::linear);
    }
    // Alignment through a learned map is positive but finite.
    for (std::size_t k = 1; k < report.per_version.size(); ++k) {
        EXPECT_GT(report.per_version[k].alignment, 0.0);
        EXPECT_TRUE(std::isfinite(report.per_version[k].alignment));
    }
}

TEST(RunBenchmark, NonBCServesThroughTruncation) {
    const World& w = world();
    const BenchmarkRun run = run_method(Method::non_bc);
    const MetricsReport& report = run.report;

    EXPECT_EQ(report.method, "NonBC");
    // Same ranking-only training as Keep-All.
    for (std::size_t k = 0; k < run.encoders.size(); ++k) {
        EXPECT_TRUE(run.encoders[k] == w.keep_all.encoders[k]);
        EXPECT_EQ(report.per_version[k].recall, w.keep_all.report.per_version[k].recall);
    }
    // The structural chain truncates: the composite from version 2 to 0 is
    // [I 0] of shape 12 x 20.
    EXPECT_EQ(run.registry.latest_version(), 2);
    const Mat& composite = run.registry.composite(0, 2);
    ASSERT_EQ(composite.rows(), 12);
    ASSERT_EQ(composite.cols(), 20);
    Mat expected = Mat::Zero(12, 20);
    expected.leftCols(12) = Mat::Identity(12, 12);
    EXPECT_EQ(mat_diff(composite, expected), 0.0);
    // Truncating a freshly retrained space does not align it.
    EXPECT_GT(report.per_version[1].alignment, 0.0);
    EXPECT_GT(report.per_version[2].alignment, 0.0);
}

TEST(RunBenchmark, FinetuneM0KeepsArchitectureAndIdentityChain) {
    const World& w = world();
    const BenchmarkRun run = run_method(Method::finetune_m0);
    const MetricsReport& report = run.report;

    EXPECT_EQ(report.method, "FinetuneM0");
    // Architecture is frozen at version 0's, so all tables stay 12-wide and
    // the structural chain composes to the identity.
    for (const EmbeddingTable& table : run.tables) EXPECT_EQ(table.dim(), 12);
    EXPECT_EQ(run.registry.latest_version(), 2);
    const Mat& composite = run.registry.composite(0, 2);
    EXPECT_EQ(mat_diff(composite, Mat::Identity(12, 12)), 0.0);
    // Version 0 is the shared starting point...
    EXPECT_TRUE(run.encoders[0] == w.reference.v0_encoder);
    // ...but fine-tuning moves the weights afterwards, so the identity chain
    // does not keep it aligned.
    EXPECT_FALSE(run.encoders[1] == w.reference.v0_encoder);
    EXPECT_GT(report.per_version[1].alignment, 0.0);
    EXPECT_GT(report.per_version[2].alignment, 0.0);
}

TEST(RunBenchmark, JointMethodProducesFiniteReport) {
    const BenchmarkRun run = run_method(Method::joint_lin_sloss);
    const MetricsReport& report = run.report;

    EXPECT_EQ(report.method, "JointLinSLoss");
    EXPECT_EQ(run.registry.latest_version(), 2);
    for (int k = 1; k <= 2; ++k) {
        EXPECT_EQ(run.registry.transform(k).kind(), TransformKind::linear);
    }
    EXPECT_TRUE(std::isfinite(report.avg_recall));
    EXPECT_TRUE(std::isfinite(report.avg_task_auc));
    EXPECT_TRUE(std::isfinite(report.avg_alignment));
    EXPECT_GT(report.avg_alignment, 0.0);
    EXPECT_TRUE(std::isfinite(report.intended_degradation));
    EXPECT_TRUE(std::isfinite(report.unintended_degradation));
    EXPECT_DOUBLE_EQ(report.combined_degradation,
                     report.intended_degradation + report.unintended_degradation);
}

TEST(RunBenchmark, DegradationsMatchRecomputationFromAverages) {
    const World& w = world();
    const BenchmarkRun run = run_method(Method::non_bc);
    const MetricsReport& base = w.keep_all.report;
    const MetricsReport& report = run.report;

    EXPECT_DOUBLE_EQ(report.intended_degradation,
                     100.0 * (report.avg_recall - base.avg_recall) / base.avg_recall);
    EXPECT_DOUBLE_EQ(report.unintended_degradation,
                     100.0 * (report.avg_task_auc - base.avg_task_auc) / base.avg_task_auc);
    EXPECT_DOUBLE_EQ(report.combined_degradation,
                     report.intended_degradation + report.unintended_degradation);
}

TEST(RunBenchmark, RepeatRunsAreBitwiseIdentical) {
    const BenchmarkRun a = run_method(Method::post_lin_sloss);
    const BenchmarkRun b = run_method(Method::post_lin_sloss);

    EXPECT_EQ(a.report.avg_recall, b.report.avg_recall);
    EXPECT_EQ(a.report.avg_task_auc, b.report.avg_task_auc);
    EXPECT_EQ(a.report.avg_alignment, b.report.avg_alignment);
    EXPECT_EQ(a.report.combined_degradation, b.report.combined_degradation);
    ASSERT_EQ(a.tables.size(), b.tables.size());
    for (std::size_t k = 0; k < a.tables.size(); ++k) {
        EXPECT_TRUE(a.tables[k] == b.tables[k]);
        EXPECT_EQ(a.report.per_version[k].recall, b.report.per_version[k].recall);
        EXPECT_EQ(a.report.per_version[k].alignment, b.report.per_version[k].alignment);
    }
    EXPECT_TRUE(a.registry == b.registry);
}

TEST(RunBenchmark, GuardsAgainstWrongBaselineWiring) {
    const World& w = world();
    // Non-baseline methods require the Keep-All report.
    EXPECT_THROW(run_benchmark(w.graph, w.schedule, MethodSpec{Method::non_bc}, w.config,
                               w.reference, nullptr),
                 StateError);
    // The baseline must actually be Keep-All.
    MetricsReport wrong = w.keep_all.report;
    wrong.method = "NonBC";
    EXPECT_THROW(run_benchmark(w.graph, w.schedule, MethodSpec{Method::fix_m0}, w.config,
                               w.reference, &wrong),
                 StateError);
    // Keep-All itself takes no baseline.
    EXPECT_THROW(run_benchmark(w.graph, w.schedule, MethodSpec{Method::keep_all}, w.config,
                               w.reference, &w.keep_all.report),
                 StateError);
    // The reference bundle must match the schedule it was built for.
    VersionSchedule shorter({0.5, 0.8});
    EXPECT_THROW(run_benchmark(w.graph, shorter, MethodSpec{Method::keep_all}, w.config,
                               w.reference, nullptr),
                 StateError);
}

}  // namespace
}  // namespace embver
