#include "embver/consumer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "embver/losses.hpp"
#include "embver/metrics.hpp"
#include "embver/optimizer.hpp"

namespace embver {

namespace {

struct TaskTraits {
    TaskId task;
    const char* name;
    TaskArity arity;
};

constexpr TaskTraits kTaskTraits[] = {
    {TaskId::user_activity, "user_activity", TaskArity::user},
    {TaskId::user_positive_activity, "user_positive_activity", TaskArity::user},
    {TaskId::item_rating_avg, "item_rating_avg", TaskArity::item},
    {TaskId::item_rating_std, "item_rating_std", TaskArity::item},
    {TaskId::edge_rating, "edge_rating", TaskArity::edge},
};

const TaskTraits& traits(TaskId task) {
    for (const TaskTraits& t : kTaskTraits) {
        if (t.task == task) return t;
    }
    throw ValidationError("unknown task id");
}

// Per-item rating sums over the window time <= t.
struct ItemWindow {
    std::vector<std::size_t> count;
    std::vector<double> sum;
    std::vector<double> sum_sq;
};

ItemWindow item_window_until(const InteractionGraph& graph, double t) {
    ItemWindow w;
    w.count.assign(graph.num_items(), 0);
    w.sum.assign(graph.num_items(), 0.0);
    w.sum_sq.assign(graph.num_items(), 0.0);
    for (const Interaction& x : graph.interactions()) {
        if (x.time > t) break;  // interactions are time-sorted
        ++w.count[x.item_id];
        w.sum[x.item_id] += static_cast<double>(x.rating);
        w.sum_sq[x.item_id] += static_cast<double>(x.rating) * static_cast<double>(x.rating);
    }
    return w;
}

double item_avg(const ItemWindow& w, NodeId item) {
    return w.sum[item] / static_cast<double>(w.count[item]);
}

double item_std(const ItemWindow& w, NodeId item) {
    const double mean = item_avg(w, item);
    const double var = w.sum_sq[item] / static_cast<double>(w.count[item]) - mean * mean;
    return std::sqrt(std::max(0.0, var));
}

// Median of version-0 average ratings over version-0-eligible items; fixed
// once and reused at every later slot.
double frozen_avg_threshold(const InteractionGraph& graph, const VersionSchedule& schedule) {
    const ItemWindow w0 = item_window_until(graph, schedule.t(0));
    std::vector<double> averages;
    for (NodeId i = 0; i < graph.num_items(); ++i) {
        if (w0.count[i] > static_cast<std::size_t>(TaskSpec::min_reviews)) {
            averages.push_back(item_avg(w0, i));
        }
    }
    if (averages.empty()) {
        throw ValidationError("item rating tasks: no item has more than " +
                              std::to_string(TaskSpec::min_reviews) + " reviews by t_0");
    }
    std::sort(averages.begin(), averages.end());
    const std::size_t n = averages.size();
    return n % 2 == 1 ? averages[n / 2] : 0.5 * (averages[n / 2 - 1] + averages[n / 2]);
}

LabeledExamples user_task_labels(TaskId task, const InteractionGraph& graph,
                                 const VersionSchedule& schedule, int k) {
    const Snapshot snap = snapshot_at(graph, schedule, k);
    const EdgeRange future = delta_edges(graph, schedule, k);
    std::set<NodeId> active;
    for (std::size_t e = future.begin; e < future.end; ++e) {
        const Interaction& x = graph.interactions()[e];
        if (task == TaskId::user_activity || x.rating >= TaskSpec::positive_rating) {
            active.insert(x.user_id);
        }
    }
    LabeledExamples out;
    out.task = task;
    out.version = k;
    for (NodeId u : snap.users()) {
        out.users.push_back(u);
        out.labels.push_back(active.count(u) != 0 ? 1 : 0);
    }
    if (out.labels.empty()) {
        throw ValidationError(traits(task).name + std::string(": snapshot ") + std::to_string(k) +
                              " has no users");
    }
    return out;
}

LabeledExamples item_task_labels(TaskId task, const InteractionGraph& graph,
                                 const VersionSchedule& schedule, int k, double label_time) {
    const ItemWindow eligibility = item_window_until(graph, schedule.t(k));
    const ItemWindow window = item_window_until(graph, label_time);
    const double threshold = task == TaskId::item_rating_avg
                                 ? frozen_avg_threshold(graph, schedule)
                                 : TaskSpec::std_threshold;
    LabeledExamples out;
    out.task = task;
    out.version = k;
    for (NodeId i = 0; i < graph.num_items(); ++i) {
        if (eligibility.count[i] <= static_cast<std::size_t>(TaskSpec::min_reviews)) continue;
        const double value =
            task == TaskId::item_rating_avg ? item_avg(window, i) : item_std(window, i);
        out.items.push_back(i);
        out.labels.push_back(value > threshold ? 1 : 0);
    }
    if (out.labels.empty()) {
        throw ValidationError(traits(task).name + std::string(": no item has more than ") +
                              std::to_string(TaskSpec::min_reviews) + " reviews by t_" +
                              std::to_string(k));
    }
    return out;
}

LabeledExamples edge_labels_in_range(const InteractionGraph& graph, int k, std::size_t begin,
                                     std::size_t end) {
    LabeledExamples out;
    out.task = TaskId::edge_rating;
    out.version = k;
    for (std::size_t e = begin; e < end; ++e) {
        const Interaction& x = graph.interactions()[e];
        out.users.push_back(x.user_id);
        out.items.push_back(x.item_id);
        out.labels.push_back(x.rating >= TaskSpec::positive_rating ? 1 : 0);
    }
    if (out.labels.empty()) {
        throw ValidationError("edge_rating: no edges in the requested window");
    }
    return out;
}

}  // namespace

TaskSpec TaskSpec::parse(const std::string& name) {
    for (const TaskTraits& t : kTaskTraits) {
        if (name == t.name) return TaskSpec{t.task};
    }
    throw ValidationError("unknown task name: " + name);
}

const std::vector<TaskId>& TaskSpec::all_tasks() {
    static const std::vector<TaskId> all = {
        TaskId::user_activity, TaskId::user_positive_activity, TaskId::item_rating_avg,
        TaskId::item_rating_std, TaskId::edge_rating,
    };
    return all;
}

std::string TaskSpec::name() const { return traits(task).name; }

TaskArity TaskSpec::arity() const { return traits(task).arity; }

int TaskSpec::validation_slot() const { return arity() == TaskArity::user ? 1 : 0; }

int TaskSpec::first_test_slot() const { return arity() == TaskArity::user ? 2 : 1; }

Eigen::Index TaskSpec::input_dim(Eigen::Index dim) const {
    return arity() == TaskArity::edge ? 2 * dim : dim;
}

LabeledExamples build_labels(TaskId task, const InteractionGraph& graph,
                             const VersionSchedule& schedule, int k) {
    if (k < 0 || k > schedule.last_version()) {
        throw RangeError("task slot " + std::to_string(k) + " outside [0, " +
                         std::to_string(schedule.last_version()) + "]");
    }
    switch (traits(task).arity) {
        case TaskArity::user:
            return user_task_labels(task, graph, schedule, k);
        case TaskArity::item:
            return item_task_labels(task, graph, schedule, k, schedule.t(k + 1));
        case TaskArity::edge: {
            const EdgeRange range = delta_edges(graph, schedule, k);
            return edge_labels_in_range(graph, k, range.begin, range.end);
        }
    }
    throw ValidationError("unknown task arity");
}

LabeledExamples build_train_labels(TaskId task, const InteractionGraph& graph,
                                   const VersionSchedule& schedule) {
    switch (traits(task).arity) {
        case TaskArity::user:
            return build_labels(task, graph, schedule, 0);
        case TaskArity::item:
            // Training labels read the rating window up to t_0 itself.
            return item_task_labels(task, graph, schedule, 0, schedule.t(0));
        case TaskArity::edge:
            // Training edges are the ones already present at t_0.
            return edge_labels_in_range(graph, 0, 0, graph.prefix_count(schedule.t(0)));
    }
    throw ValidationError("unknown task arity");
}

Vec ConsumerModel::logits(const Mat& inputs) const {
    if (inputs.rows() != input_dim) {
        throw ShapeError("consumer expects inputs of dim " + std::to_string(input_dim) +
                         ", got " + std::to_string(inputs.rows()));
    }
    const Mat pre = (hidden_weight * inputs).colwise() + hidden_bias;
    const Mat h = pre.cwiseMax(0.0);
    return ((h.transpose() * output_weight).array() + output_bias).matrix();
}

Mat consumer_inputs(const LabeledExamples& examples, const EmbeddingTable& table) {
    const TaskSpec spec{examples.task};
    const std::size_t n = examples.size();
    const auto expect = [&](std::size_t got, std::size_t want, const char* what) {
        if (got != want) {
            throw ValidationError(spec.name() + ": expected " + std::to_string(want) + " " + what +
                                  ", got " + std::to_string(got));
        }
    };
    switch (spec.arity()) {
        case TaskArity::user:
            expect(examples.users.size(), n, "users");
            expect(examples.items.size(), 0, "items");
            break;
        case TaskArity::item:
            expect(examples.users.size(), 0, "users");
            expect(examples.items.size(), n, "items");
            break;
        case TaskArity::edge:
            expect(examples.users.size(), n, "users");
            expect(examples.items.size(), n, "items");
            break;
    }
    const Eigen::Index dim = table.dim();
    Mat inputs(spec.input_dim(dim), static_cast<Eigen::Index>(n));
    for (std::size_t e = 0; e < n; ++e) {
        const Eigen::Index col = static_cast<Eigen::Index>(e);
        switch (spec.arity()) {
            case TaskArity::user:
                inputs.col(col) = table.vector(NodeKind::user, examples.users[e]);
                break;
            case TaskArity::item:
                inputs.col(col) = table.vector(NodeKind::item, examples.items[e]);
                break;
            case TaskArity::edge:
                inputs.col(col).head(dim) = table.vector(NodeKind::user, examples.users[e]);
                inputs.col(col).tail(dim) = table.vector(NodeKind::item, examples.items[e]);
                break;
        }
    }
    return inputs;
}

ConsumerGradients consumer_backward(const ConsumerModel& model, const Mat& inputs,
                                    const std::vector<int>& labels, const Mat& dropout_mask) {
    if (inputs.cols() != static_cast<Eigen::Index>(labels.size())) {
        throw ShapeError("consumer_backward: " + std::to_string(inputs.cols()) +
                         " examples but " + std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) {
        throw ValidationError("consumer_backward: no examples");
    }
    if (inputs.rows() != model.input_dim) {
        throw ShapeError("consumer_backward: input dim " + std::to_string(inputs.rows()) +
                         " does not match model dim " + std::to_string(model.input_dim));
    }
    const bool use_mask = dropout_mask.size() != 0;
    if (use_mask && (dropout_mask.rows() != model.hidden_weight.rows() ||
                     dropout_mask.cols() != inputs.cols())) {
        throw ShapeError("consumer_backward: dropout mask shape mismatch");
    }

    const Eigen::Index n = inputs.cols();
    const Mat pre = (model.hidden_weight * inputs).colwise() + model.hidden_bias;
    Mat hidden = pre.cwiseMax(0.0);
    if (use_mask) hidden = hidden.cwiseProduct(dropout_mask);
    const Vec logit =
        ((hidden.transpose() * model.output_weight).array() + model.output_bias).matrix();

    double loss = 0.0;
    Vec dlogit(n);
    for (Eigen::Index e = 0; e < n; ++e) {
        const int y = labels[static_cast<std::size_t>(e)];
        if (y != 0 && y != 1) {
            throw ValidationError("consumer_backward: labels must be 0 or 1, got " +
                                  std::to_string(y));
        }
        loss += softplus(logit[e]) - static_cast<double>(y) * logit[e];
        dlogit[e] = (stable_sigmoid(logit[e]) - static_cast<double>(y)) / static_cast<double>(n);
    }

    ConsumerGradients grads;
    grads.loss = loss / static_cast<double>(n);
    grads.output_weight = hidden * dlogit;
    grads.output_bias = dlogit.sum();
    Mat dhidden = model.output_weight * dlogit.transpose();
    if (use_mask) dhidden = dhidden.cwiseProduct(dropout_mask);
    const Mat dpre = (pre.array() > 0.0).select(dhidden, Mat::Zero(pre.rows(), pre.cols()));
    grads.hidden_weight = dpre * inputs.transpose();
    grads.hidden_bias = dpre.rowwise().sum();
    return grads;
}

ConsumerGrid ConsumerGrid::desk() { return {{128, 256}, {0.0, 0.25}}; }

ConsumerGrid ConsumerGrid::full() { return {{128, 256, 512, 1024}, {0.0, 0.25, 0.5}}; }

void ConsumerTrainConfig::validate() const {
    if (max_epochs < 1) throw ValidationError("consumer max_epochs must be >= 1");
    if (patience < 1) throw ValidationError("consumer patience must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("consumer learning_rate must be > 0");
    if (weight_decay < 0.0) throw ValidationError("consumer weight_decay must be >= 0");
}

namespace {

ParamSet params_from_model(const ConsumerModel& model) {
    ParamSet params;
    params.add("hidden.weight", model.hidden_weight);
    params.add("hidden.bias", model.hidden_bias);
    params.add("output.weight", model.output_weight);
    Mat bias(1, 1);
    bias(0, 0) = model.output_bias;
    params.add("output.bias", std::move(bias));
    return params;
}

void model_from_params(ConsumerModel& model, const ParamSet& params) {
    model.hidden_weight = params.at("hidden.weight");
    model.hidden_bias = params.at("hidden.bias");
    model.output_weight = params.at("output.weight");
    model.output_bias = params.at("output.bias")(0, 0);
}

ParamSet grads_to_set(const ConsumerGradients& grads) {
    ParamSet set;
    set.add("hidden.weight", grads.hidden_weight);
    set.add("hidden.bias", grads.hidden_bias);
    set.add("output.weight", grads.output_weight);
    Mat bias(1, 1);
    bias(0, 0) = grads.output_bias;
    set.add("output.bias", std::move(bias));
    return set;
}

Mat draw_dropout_mask(Rng& rng, Eigen::Index hidden, Eigen::Index n, double rate) {
    const double keep = 1.0 - rate;
    Mat mask(hidden, n);
    for (Eigen::Index r = 0; r < hidden; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            mask(r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
    }
    return mask;
}

void require_both_classes(const LabeledExamples& examples, const char* role) {
    std::size_t ones = 0;
    for (int label : examples.labels) ones += static_cast<std::size_t>(label != 0);
    if (ones == 0 || ones == examples.size()) {
        throw ValidationError(std::string("consumer ") + role +
                              " labels are single-class (cannot early-stop on ROC-AUC)");
    }
}

std::vector<double> to_std_vector(const Vec& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

ConsumerModel train_consumer(TaskId task, const EmbeddingTable& train_table,
                             const EmbeddingTable& valid_table,
                             const LabeledExamples& labels_train,
                             const LabeledExamples& labels_valid, const ConsumerGrid& grid,
                             const ConsumerTrainConfig& config, std::uint64_t seed,
                             ConsumerTrainInfo* info) {
    config.validate();
    if (grid.hidden_dims.empty() || grid.dropout_rates.empty()) {
        throw ValidationError("consumer grid is empty");
    }
    for (int hidden : grid.hidden_dims) {
        if (hidden < 1) throw ValidationError("consumer hidden dim must be >= 1");
    }
    for (double rate : grid.dropout_rates) {
        if (!(rate >= 0.0 && rate < 1.0)) {
            throw ValidationError("consumer dropout rate must be in [0, 1)");
        }
    }
    if (labels_train.task != task || labels_valid.task != task) {
        throw ValidationError("consumer label sets do not match the task");
    }
    if (train_table.dim() != valid_table.dim()) {
        throw ShapeError("consumer train/validation tables differ in dimension");
    }
    require_both_classes(labels_train, "training");
    require_both_classes(labels_valid, "validation");

    const Mat train_inputs = consumer_inputs(labels_train, train_table);
    const Mat valid_inputs = consumer_inputs(labels_valid, valid_table);
    const TaskSpec spec{task};
    const Eigen::Index input_dim = spec.input_dim(train_table.dim());

    AdamConfig adam;
    adam.learning_rate = config.learning_rate;
    adam.weight_decay = config.weight_decay;

    ConsumerModel best_model;
    double best_auc = -1.0;
    int best_epochs = 0;
    int best_index = 0;
    std::vector<double> grid_aucs;

    int grid_index = 0;
    for (int hidden : grid.hidden_dims) {
        for (double rate : grid.dropout_rates) {
            Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(grid_index)));
            ConsumerModel model;
            model.task = task;
            model.input_dim = input_dim;
            model.hidden_dim = hidden;
            model.dropout = rate;
            model.hidden_weight.resize(hidden, input_dim);
            const double hidden_scale = std::sqrt(2.0 / static_cast<double>(input_dim));
            for (Eigen::Index r = 0; r < model.hidden_weight.rows(); ++r) {
                for (Eigen::Index c = 0; c < model.hidden_weight.cols(); ++c) {
                    model.hidden_weight(r, c) = hidden_scale * rng.normal();
                }
            }
            model.hidden_bias = Vec::Zero(hidden);
            model.output_weight.resize(hidden);
            const double output_scale = std::sqrt(2.0 / static_cast<double>(hidden));
            for (Eigen::Index r = 0; r < hidden; ++r) {
                model.output_weight[r] = output_scale * rng.normal();
            }
            model.output_bias = 0.0;

            ParamSet params = params_from_model(model);
            OptimizerState opt(params);
            double point_best = -1.0;
            ParamSet point_best_params = params;
            int epochs_done = 0;
            int stale = 0;
            for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
                model_from_params(model, params);
                const Mat mask = rate > 0.0 ? draw_dropout_mask(rng, hidden, train_inputs.cols(),
                                                                rate)
                                            : Mat();
                const ConsumerGradients grads =
                    consumer_backward(model, train_inputs, labels_train.labels, mask);
                if (!std::isfinite(grads.loss)) {
                    throw NumericError("non-finite consumer loss at epoch " +
                                       std::to_string(epoch));
                }
                const ParamSet grad_set = grads_to_set(grads);
                adam_step(params, grad_set, opt, adam);
                ++epochs_done;

                model_from_params(model, params);
                const double auc =
                    roc_auc(to_std_vector(model.logits(valid_inputs)), labels_valid.labels);
                if (auc > point_best) {
                    point_best = auc;
                    point_best_params = params;
                    stale = 0;
                } else if (++stale >= config.patience) {
                    break;
                }
            }
            grid_aucs.push_back(point_best);
            if (point_best > best_auc) {
                best_auc = point_best;
                model_from_params(model, point_best_params);
                best_model = model;
                best_epochs = epochs_done;
                best_index = grid_index;
            }
            ++grid_index;
        }
    }

    if (info != nullptr) {
        info->validation_auc = best_auc;
        info->epochs_run = best_epochs;
        info->grid_index = best_index;
        info->grid_validation_aucs = grid_aucs;
    }
    return best_model;
}

double evaluate_consumer(const ConsumerModel& model, const EmbeddingTable& table,
                         const LabeledExamples& labels_test) {
    if (labels_test.task != model.task) {
        throw ValidationError("consumer evaluation labels do not match the model's task");
    }
    const Mat inputs = consumer_inputs(labels_test, table);
    return roc_auc(to_std_vector(model.logits(inputs)), labels_test.labels);
}

}  // namespace embver
