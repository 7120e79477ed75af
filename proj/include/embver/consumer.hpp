#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "embver/common.hpp"
#include "embver/embedding_table.hpp"
#include "embver/graph.hpp"
#include "embver/tensor.hpp"

namespace embver {

// The five downstream binary prediction tasks built on version-0 embeddings.
enum class TaskId {
    user_activity,           // user has any edge in (t_k, t_{k+1}]
    user_positive_activity,  // user has an edge rated >= 4 in (t_k, t_{k+1}]
    item_rating_avg,         // item's average rating until t_{k+1} above the
                             // median of version-0 averages
    item_rating_std,         // item's rating standard deviation until
                             // t_{k+1} above 1
    edge_rating,             // edge in (t_k, t_{k+1}] carries a rating >= 4
};

enum class TaskArity { user, item, edge };

// Static description of one task: what it consumes, which version slot
// serves as its validation set, and where its test range starts.
struct TaskSpec {
    TaskId task;

    static TaskSpec parse(const std::string& name);
    static const std::vector<TaskId>& all_tasks();

    std::string name() const;
    TaskArity arity() const;
    // Slot whose examples tune consumer hyperparameters: 1 for user tasks
    // (their slot 0 is the training set), 0 for item/edge tasks (their
    // training sets use dedicated version-0 windows).
    int validation_slot() const;
    // User tasks test from slot 2, item/edge tasks from slot 1.
    int first_test_slot() const;
    // Model input width for embeddings of dimension `dim`.
    Eigen::Index input_dim(Eigen::Index dim) const;

    // Label thresholds shared across tasks.
    static constexpr int positive_rating = 4;
    // Items qualify only with strictly more reviews than this by t_k.
    static constexpr int min_reviews = 10;
    static constexpr double std_threshold = 1.0;
};

// Example set for one task at one version slot. `users`/`items` are each
// parallel to `labels` when the task's arity uses them.
struct LabeledExamples {
    TaskId task = TaskId::user_activity;
    int version = 0;
    std::vector<NodeId> users;
    std::vector<NodeId> items;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

// Standard slot-k example set: user tasks label snapshot-k users by activity
// in (t_k, t_{k+1}]; item tasks label items having > min_reviews reviews by
// t_k using the rating window up to t_{k+1} (the average-rating threshold is
// the median of version-0 averages, frozen at t_0); the edge task labels the
// edges arriving in (t_k, t_{k+1}]. Valid for k in [0, last_version()].
LabeledExamples build_labels(TaskId task, const InteractionGraph& graph,
                             const VersionSchedule& schedule, int k);

// The version-0 training set. For user tasks this is the standard slot 0;
// item tasks instead label the rating window up to t_0; the edge task labels
// the edges already present at t_0.
LabeledExamples build_train_labels(TaskId task, const InteractionGraph& graph,
                                   const VersionSchedule& schedule);

// One-hidden-layer MLP consumer: logit = w2' relu(W1 x + b1) + b2. Dropout
// applies to the hidden activations during training only.
struct ConsumerModel {
    TaskId task = TaskId::user_activity;
    Eigen::Index input_dim = 0;
    int hidden_dim = 0;
    double dropout = 0.0;
    Mat hidden_weight;  // hidden_dim x input_dim
    Vec hidden_bias;    // hidden_dim
    Vec output_weight;  // hidden_dim
    double output_bias = 0.0;

    // Scores for a column-per-example input matrix, dropout disabled.
    Vec logits(const Mat& inputs) const;
};

// Input matrix (one column per example): the user vector, the item vector,
// or their concatenation (user stacked above item) for the edge task.
Mat consumer_inputs(const LabeledExamples& examples, const EmbeddingTable& table);

struct ConsumerGradients {
    double loss = 0.0;
    Mat hidden_weight;
    Vec hidden_bias;
    Vec output_weight;
    double output_bias = 0.0;
};

// Mean binary cross-entropy (with logits) and its exact gradients.
// `dropout_mask` is either empty (no dropout) or hidden_dim x n with entries
// 0 or 1/(1-p), applied to the hidden activations on both passes.
ConsumerGradients consumer_backward(const ConsumerModel& model, const Mat& inputs,
                                    const std::vector<int>& labels, const Mat& dropout_mask);

struct ConsumerGrid {
    std::vector<int> hidden_dims;
    std::vector<double> dropout_rates;

    // {128, 256} x {0, 0.25}: the fast default.
    static ConsumerGrid desk();
    // {128, 256, 512, 1024} x {0, 0.25, 0.5}.
    static ConsumerGrid full();
};

struct ConsumerTrainConfig {
    int max_epochs = 200;
    int patience = 10;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;

    void validate() const;
};

// Diagnostics of the winning grid point.
struct ConsumerTrainInfo {
    double validation_auc = 0.0;
    int epochs_run = 0;
    int grid_index = 0;
    std::vector<double> grid_validation_aucs;
};

// Full-batch Adam training of every grid point with early stopping on
// validation ROC-AUC (strict improvement, `patience` epochs); returns the
// grid point with the best validation ROC-AUC, earlier grid entries winning
// ties. `train_table`/`valid_table` supply the embeddings for the training
// and validation examples (user tasks validate on version-0-model embeddings
// of the next snapshot, so the two tables differ). Deterministic given seed.
ConsumerModel train_consumer(TaskId task, const EmbeddingTable& train_table,
                             const EmbeddingTable& valid_table,
                             const LabeledExamples& labels_train,
                             const LabeledExamples& labels_valid, const ConsumerGrid& grid,
                             const ConsumerTrainConfig& config, std::uint64_t seed,
                             ConsumerTrainInfo* info = nullptr);

// ROC-AUC of the frozen model's scores on the examples, dropout disabled.
double evaluate_consumer(const ConsumerModel& model, const EmbeddingTable& table,
                         const LabeledExamples& labels_test);

}  // namespace embver
