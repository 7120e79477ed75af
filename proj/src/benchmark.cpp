#include "embver/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "embver/losses.hpp"
#include "embver/metrics.hpp"

namespace embver {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct DeltaInfo {
    std::vector<Interaction> edges;
    std::vector<NodeId> users;  // sorted unique endpoint ids
    std::vector<NodeId> items;
};

DeltaInfo delta_info(const InteractionGraph& graph, const VersionSchedule& schedule, int k) {
    const EdgeRange range = delta_edges(graph, schedule, k);
    DeltaInfo info;
    std::set<NodeId> users, items;
    for (std::size_t e = range.begin; e < range.end; ++e) {
        const Interaction& x = graph.interactions()[e];
        info.edges.push_back(x);
        users.insert(x.user_id);
        items.insert(x.item_id);
    }
    info.users.assign(users.begin(), users.end());
    info.items.assign(items.begin(), items.end());
    return info;
}

std::vector<NodeId> sorted_union(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
    std::vector<NodeId> merged;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(merged));
    return merged;
}

// Embeddings of the snapshot's nodes plus the next window's endpoints, so
// every evaluation consumer of this version finds its inputs.
EmbeddingTable coverage_table(const EncoderParams& encoder, const Snapshot& snapshot,
                              const DeltaInfo& delta) {
    return encode_table(encoder, snapshot, sorted_union(snapshot.users(), delta.users),
                        sorted_union(snapshot.items(), delta.items));
}

double mean(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace

void BenchmarkConfig::validate() const {
    encoder_base.validate();
    train.validate();
    consumer_train.validate();
    if (recall_cutoff < 1) throw ValidationError("recall cutoff must be >= 1");
    if (consumer_seeds < 1) throw ValidationError("consumer_seeds must be >= 1");
    if (consumer_grid.hidden_dims.empty() || consumer_grid.dropout_rates.empty()) {
        throw ValidationError("consumer grid is empty");
    }
}

ReferenceBundle build_reference(const InteractionGraph& graph, const VersionSchedule& schedule,
                                const BenchmarkConfig& config) {
    config.validate();
    const int last = schedule.last_version();

    TrainResult v0 = train_version(0, graph, schedule, config.encoder_base, config.growth,
                                   MethodSpec{Method::keep_all}, config.train, nullptr, nullptr);

    std::vector<EmbeddingTable> v0_tables;
    for (int k = 0; k <= last; ++k) {
        const Snapshot snap = snapshot_at(graph, schedule, k);
        v0_tables.push_back(coverage_table(v0.encoder, snap, delta_info(graph, schedule, k)));
    }

    ReferenceBundle bundle{std::move(v0.encoder), std::move(v0_tables), {}, {}};
    const auto& tasks = TaskSpec::all_tasks();
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const TaskSpec spec{tasks[ti]};
        const LabeledExamples train_ex = build_train_labels(spec.task, graph, schedule);
        const LabeledExamples valid_ex =
            build_labels(spec.task, graph, schedule, spec.validation_slot());
        std::vector<ConsumerModel> models;
        std::vector<ConsumerTrainInfo> infos;
        for (int s = 0; s < config.consumer_seeds; ++s) {
            ConsumerTrainInfo info;
            const std::uint64_t seed = Rng::mix(
                Rng::mix(config.train.seed, 0x636F6E5355u + static_cast<std::uint64_t>(ti)),
                static_cast<std::uint64_t>(s));
            models.push_back(train_consumer(
                spec.task, bundle.v0_tables[0],
                bundle.v0_tables[static_cast<std::size_t>(spec.validation_slot())], train_ex,
                valid_ex, config.consumer_grid, config.consumer_train, seed, &info));
            infos.push_back(info);
        }
        bundle.consumers.push_back(std::move(models));
        bundle.consumer_info.push_back(std::move(infos));
    }
    return bundle;
}

bool in_keep_latest_group(Method method) {
    switch (method) {
        case Method::non_bc:
        case Method::post_lin_sloss:
        case Method::post_lin_mloss:
        case Method::joint_no_trans:
        case Method::joint_lin_sloss:
        case Method::bc_aligner:
            return true;
        case Method::keep_all:
        case Method::fix_m0:
        case Method::finetune_m0:
            return false;
    }
    throw ValidationError("unknown method");
}

BenchmarkRun run_benchmark(const InteractionGraph& graph, const VersionSchedule& schedule,
                           const MethodSpec& method, const BenchmarkConfig& config,
                           const ReferenceBundle& reference,
                           const MetricsReport* keepall_baseline) {
    config.validate();
    const int last = schedule.last_version();
    const std::string keepall_name = MethodSpec{Method::keep_all}.name();
    if (static_cast<int>(reference.v0_tables.size()) != last + 1) {
        throw StateError("reference bundle does not match the schedule (" +
                         std::to_string(reference.v0_tables.size()) + " tables for " +
                         std::to_string(last + 1) + " versions)");
    }
    if (reference.consumers.size() != TaskSpec::all_tasks().size()) {
        throw StateError("reference bundle is missing consumer models");
    }
    if (keepall_baseline == nullptr && method.method != Method::keep_all) {
        throw StateError("method " + method.name() +
                         " needs the Keep-All baseline report to compute degradations");
    }
    if (keepall_baseline != nullptr && method.method == Method::keep_all) {
        throw StateError("Keep-All is the baseline itself and takes no baseline report");
    }
    if (keepall_baseline != nullptr && keepall_baseline->method != keepall_name) {
        throw StateError("baseline report comes from " + keepall_baseline->method +
                         ", expected " + keepall_name);
    }

    const bool serves_exact_v0 =
        method.method == Method::keep_all || method.method == Method::fix_m0;

    BenchmarkRun run;
    run.report.method = method.name();
    for (TaskId task : TaskSpec::all_tasks()) {
        run.report.tasks.push_back(
            TaskSeries{task, std::vector<double>(static_cast<std::size_t>(last) + 1, kNaN)});
    }

    for (int k = 0; k <= last; ++k) {
        const Snapshot snap = snapshot_at(graph, schedule, k);
        const DeltaInfo delta = delta_info(graph, schedule, k);

        const EncoderParams* prev = nullptr;
        if (k >= 1) {
            if (method.serves_v0_model()) {
                prev = &run.encoders[0];
            } else if (method.method != Method::keep_all && method.method != Method::non_bc) {
                prev = &run.encoders[static_cast<std::size_t>(k) - 1];
            }
        }
        TrainResult result = train_version(k, graph, schedule, config.encoder_base, config.growth,
                                           method, config.train, prev, &run.registry);
        if (k == 0 && !(result.encoder == reference.v0_encoder)) {
            throw StateError(
                "version-0 model differs from the reference bundle; the bundle was built with "
                "different training settings");
        }
        if (result.transform.has_value()) {
            run.registry.register_transform(std::move(*result.transform));
        }
        run.loss_logs.push_back(std::move(result.loss_log));

        // FixM0 serves the frozen version-0 function, which is exactly the
        // reference table; every other method embeds with its latest model.
        run.tables.push_back(method.serves_v0_model()
                                 ? reference.v0_tables[static_cast<std::size_t>(k)]
                                 : coverage_table(result.encoder, snap, delta));
        run.encoders.push_back(std::move(result.encoder));
        const EmbeddingTable& latest = run.tables.back();

        const double recall = recall_at_k(latest, delta.edges, snap, config.recall_cutoff);

        std::optional<EmbeddingTable> converted;
        const EmbeddingTable* served = nullptr;
        if (serves_exact_v0) {
            served = &reference.v0_tables[static_cast<std::size_t>(k)];
        } else if (k == 0) {
            served = &latest;
        } else {
            converted.emplace(to_version(run.registry, latest, 0));
            served = &*converted;
        }

        const AlignmentSet align_set = full_alignment_set(snap);
        const double align =
            alignment_error(*served, reference.v0_tables[static_cast<std::size_t>(k)], align_set);
        run.report.per_version.push_back(VersionMetrics{k, recall, align});

        const auto& tasks = TaskSpec::all_tasks();
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
            const TaskSpec spec{tasks[ti]};
            if (k < spec.first_test_slot()) continue;
            const LabeledExamples examples = build_labels(spec.task, graph, schedule, k);
            double sum = 0.0;
            for (const ConsumerModel& model : reference.consumers[ti]) {
                sum += evaluate_consumer(model, *served, examples);
            }
            run.report.tasks[ti].auc[static_cast<std::size_t>(k)] =
                sum / static_cast<double>(reference.consumers[ti].size());
        }
    }

    std::vector<double> recalls, alignments;
    for (const VersionMetrics& vm : run.report.per_version) {
        recalls.push_back(vm.recall);
        if (vm.version >= 1) alignments.push_back(vm.alignment);
    }
    run.report.avg_recall = mean(recalls);
    run.report.avg_alignment = mean(alignments);
    std::vector<double> task_means;
    for (const TaskSeries& series : run.report.tasks) {
        std::vector<double> defined;
        for (double v : series.auc) {
            if (!std::isnan(v)) defined.push_back(v);
        }
        // A short schedule can leave a task with no test slot at all.
        if (!defined.empty()) task_means.push_back(mean(defined));
    }
    if (task_means.empty()) {
        throw ValidationError("schedule has no test slot for any downstream task");
    }
    run.report.avg_task_auc = mean(task_means);

    if (keepall_baseline != nullptr) {
        run.report.intended_degradation =
            relative_degradation(run.report.avg_recall, keepall_baseline->avg_recall);
        run.report.unintended_degradation =
            relative_degradation(run.report.avg_task_auc, keepall_baseline->avg_task_auc);
        run.report.combined_degradation =
            run.report.intended_degradation + run.report.unintended_degradation;
    }
    return run;
}

}  // namespace embver
