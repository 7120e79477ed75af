#include "embver/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "embver/optimizer.hpp"

namespace embver {

namespace {

struct MethodTraits {
    const char* name;
    AlignStrategy strategy;
    TransformChoice transform;
    LossKind loss;
};

const MethodTraits& traits(Method m) {
    static const MethodTraits table[] = {
        {"KeepAll", AlignStrategy::none, TransformChoice::none, LossKind::single_step},
        {"FixM0", AlignStrategy::none, TransformChoice::none, LossKind::single_step},
        {"FinetuneM0", AlignStrategy::none, TransformChoice::truncation, LossKind::single_step},
        {"NonBC", AlignStrategy::none, TransformChoice::truncation, LossKind::single_step},
        {"PostLinSLoss", AlignStrategy::posthoc, TransformChoice::linear, LossKind::single_step},
        {"PostLinMLoss", AlignStrategy::posthoc, TransformChoice::linear, LossKind::multi_step},
        {"JointNoTrans", AlignStrategy::joint, TransformChoice::truncation,
         LossKind::single_step},
        {"JointLinSLoss", AlignStrategy::joint, TransformChoice::linear, LossKind::single_step},
        {"BCAligner", AlignStrategy::joint, TransformChoice::linear, LossKind::multi_step},
    };
    return table[static_cast<int>(m)];
}

constexpr Method kAllMethods[] = {
    Method::keep_all,       Method::fix_m0,         Method::finetune_m0,
    Method::non_bc,         Method::post_lin_sloss, Method::post_lin_mloss,
    Method::joint_no_trans, Method::joint_lin_sloss, Method::bc_aligner,
};

}  // namespace

MethodSpec MethodSpec::parse(const std::string& name) {
    for (Method m : kAllMethods) {
        if (name == traits(m).name) {
            return MethodSpec{m};
        }
    }
    std::string known;
    for (Method m : kAllMethods) {
        if (!known.empty()) known += ", ";
        known += traits(m).name;
    }
    throw ValidationError("unknown method '" + name + "' (expected one of: " + known + ")");
}

const std::vector<std::string>& MethodSpec::all_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (Method m : kAllMethods) out.emplace_back(traits(m).name);
        return out;
    }();
    return names;
}

std::string MethodSpec::name() const { return traits(method).name; }
AlignStrategy MethodSpec::strategy() const { return traits(method).strategy; }
TransformChoice MethodSpec::transform() const { return traits(method).transform; }
LossKind MethodSpec::loss_kind() const { return traits(method).loss; }

bool MethodSpec::emits_transform() const {
    return method != Method::keep_all && method != Method::fix_m0;
}

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw ValidationError("train config: epochs must be >= 1, got " + std::to_string(epochs));
    }
    if (!(learning_rate > 0.0)) {
        throw ValidationError("train config: learning_rate must be positive");
    }
    if (!(weight_decay >= 0.0)) {
        throw ValidationError("train config: weight_decay must be non-negative");
    }
    if (!(lambda >= 0.0)) {
        throw ValidationError("train config: lambda must be non-negative, got " +
                              std::to_string(lambda));
    }
    if (batch_size < 0) {
        throw ValidationError("train config: batch_size must be >= 0 (0 = full batch)");
    }
    if (negatives_per_positive < 1) {
        throw ValidationError("train config: negatives_per_positive must be >= 1, got " +
                              std::to_string(negatives_per_positive));
    }
}

std::vector<BprTriple> sample_triples(const Snapshot& snapshot, Rng& rng,
                                      int negatives_per_positive) {
    if (negatives_per_positive < 1) {
        throw ValidationError("sample_triples: negatives_per_positive must be >= 1");
    }
    if (snapshot.edge_count() == 0) {
        throw ValidationError("sample_triples: snapshot has no edges");
    }
    const auto& interactions = snapshot.graph().interactions();
    const auto& items = snapshot.items();
    std::vector<BprTriple> out;
    out.reserve(snapshot.edge_count() * static_cast<std::size_t>(negatives_per_positive));
    for (std::size_t e = 0; e < snapshot.edge_count(); ++e) {
        for (int rep = 0; rep < negatives_per_positive; ++rep) {
            const NodeId neg = items[rng.uniform_int(items.size())];
            out.push_back({interactions[e].user_id, interactions[e].item_id, neg});
        }
    }
    return out;
}

std::string to_string(TrainStage stage) {
    switch (stage) {
        case TrainStage::intended: return "intended";
        case TrainStage::alignment: return "alignment";
        case TrainStage::joint: return "joint";
    }
    return "unknown";
}

JointObjective joint_objective(const EncoderParams& encoder, const Snapshot& snapshot,
                               const std::vector<BprTriple>& triples,
                               const BackwardTransform* transform, const Mat& align_target,
                               const AlignmentSet& align_set, const TransformRegistry* registry,
                               LossKind loss_kind, double lambda) {
    if (triples.empty()) {
        throw ValidationError("joint_objective: no ranking examples");
    }
    if (lambda < 0.0) {
        throw ValidationError("joint_objective: lambda must be non-negative");
    }
    const InteractionGraph& graph = snapshot.graph();
    const auto num_users = static_cast<NodeId>(graph.num_users());
    const auto num_items = static_cast<NodeId>(graph.num_items());
    for (const BprTriple& t : triples) {
        if (t.user >= num_users || t.pos_item >= num_items || t.neg_item >= num_items) {
            throw LookupError("joint_objective: triple references a node outside the graph");
        }
    }

    const ForwardTrace trace = encode_forward(encoder, snapshot);
    const Mat& user_emb = trace.user_embeddings();
    const Mat& item_emb = trace.item_embeddings();
    const Eigen::Index dim = user_emb.rows();

    const auto n = static_cast<Eigen::Index>(triples.size());
    Mat u(dim, n), pos(dim, n), neg(dim, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        u.col(c) = user_emb.col(triples[c].user);
        pos.col(c) = item_emb.col(triples[c].pos_item);
        neg.col(c) = item_emb.col(triples[c].neg_item);
    }
    const BprResult bpr = bpr_loss(u, pos, neg);

    Mat g_user = Mat::Zero(dim, user_emb.cols());
    Mat g_item = Mat::Zero(dim, item_emb.cols());
    for (Eigen::Index c = 0; c < n; ++c) {
        g_user.col(triples[c].user) += bpr.user_grad.col(c);
        g_item.col(triples[c].pos_item) += bpr.pos_grad.col(c);
        g_item.col(triples[c].neg_item) += bpr.neg_grad.col(c);
    }

    JointObjective out;
    out.intended = bpr.loss;

    if (transform != nullptr && lambda > 0.0) {
        if (transform->in_dim() != dim) {
            throw ShapeError("joint_objective: transform input dimension " +
                             std::to_string(transform->in_dim()) +
                             " does not match encoder output dimension " + std::to_string(dim));
        }
        if (align_set.size() == 0) {
            throw ValidationError("joint_objective: empty alignment set");
        }
        for (NodeId id : align_set.users) {
            if (id >= num_users) throw LookupError("joint_objective: alignment user out of range");
        }
        for (NodeId id : align_set.items) {
            if (id >= num_items) throw LookupError("joint_objective: alignment item out of range");
        }
        Mat source(dim, static_cast<Eigen::Index>(align_set.size()));
        Eigen::Index c = 0;
        for (NodeId id : align_set.users) source.col(c++) = user_emb.col(id);
        for (NodeId id : align_set.items) source.col(c++) = item_emb.col(id);

        const TransformRegistry empty_registry;
        const TransformRegistry& reg = registry != nullptr ? *registry : empty_registry;
        const AlignmentResult ar =
            loss_kind == LossKind::multi_step
                ? multi_step_alignment_loss(reg, *transform, source, align_target)
                : single_step_alignment_loss(*transform, source, align_target);
        out.alignment = ar.loss;
        c = 0;
        for (NodeId id : align_set.users) g_user.col(id) += lambda * ar.source_grad.col(c++);
        for (NodeId id : align_set.items) g_item.col(id) += lambda * ar.source_grad.col(c++);
        if (ar.transform_grad.size() > 0) {
            out.transform_grad = lambda * ar.transform_grad;
        }
    }

    out.total = out.intended + lambda * out.alignment;
    out.encoder_grad = encode_backward(encoder, snapshot, trace, g_user, g_item);
    return out;
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void ensure_finite(double loss, int version, int epoch, const char* stage) {
    if (!std::isfinite(loss)) {
        throw NumericError("train_version: non-finite " + std::string(stage) +
                           " loss at version " + std::to_string(version) + ", epoch " +
                           std::to_string(epoch));
    }
}

// [I 0]: the dimension-matching no-op a learned map starts from.
Mat truncation_matrix(Eigen::Index out_dim, Eigen::Index in_dim) {
    Mat w = Mat::Zero(out_dim, in_dim);
    w.topLeftCorner(out_dim, out_dim).setIdentity();
    return w;
}

// Split [0, n) into deterministic batches. Full-batch mode must not touch
// the rng so that batch_size = 0 runs are identical across methods sharing
// a sampling stream.
std::vector<std::vector<BprTriple>> make_batches(std::vector<BprTriple> triples, int batch_size,
                                                 Rng& rng) {
    if (batch_size == 0 || static_cast<std::size_t>(batch_size) >= triples.size()) {
        return {std::move(triples)};
    }
    for (std::size_t i = triples.size(); i > 1; --i) {
        std::swap(triples[i - 1], triples[rng.uniform_int(i)]);
    }
    std::vector<std::vector<BprTriple>> batches;
    for (std::size_t start = 0; start < triples.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop =
            std::min(triples.size(), start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(triples.begin() + static_cast<std::ptrdiff_t>(start),
                             triples.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

// Learnable (or fixed) backward-map state used inside the training loops.
struct TransformState {
    TransformChoice choice = TransformChoice::none;
    int version = 0;
    Eigen::Index in_dim = 0;
    Eigen::Index out_dim = 0;
    ParamSet params;  // holds "weight" for the linear case

    static TransformState make(TransformChoice choice, int version, Eigen::Index in_dim,
                               Eigen::Index out_dim) {
        TransformState s;
        s.choice = choice;
        s.version = version;
        s.in_dim = in_dim;
        s.out_dim = out_dim;
        if (choice == TransformChoice::linear) {
            s.params.add("weight", truncation_matrix(out_dim, in_dim));
        }
        return s;
    }

    BackwardTransform build() const {
        if (choice == TransformChoice::linear) {
            return BackwardTransform::linear(version, params.at("weight"));
        }
        return BackwardTransform::no_trans(version, in_dim, out_dim);
    }
};

// Ranking-only epochs (lambda = 0, no transform). Shared verbatim by
// KeepAll, NonBC, FinetuneM0, version 0 of every method, and stage one of
// the posthoc methods, so equal seeds give bit-identical weights.
void run_ranking_epochs(EncoderParams& encoder, const Snapshot& snapshot,
                        const TrainConfig& config, Rng& sample_rng,
                        std::vector<EpochLoss>& log) {
    OptimizerState state(encoder.params());
    AdamConfig adam;
    adam.learning_rate = config.learning_rate;
    adam.weight_decay = config.weight_decay;
    const AlignmentSet no_set;
    const Mat no_target;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto batches = make_batches(sample_triples(snapshot, sample_rng,
                                                   config.negatives_per_positive),
                                    config.batch_size, sample_rng);
        double sum = 0.0;
        for (const auto& batch : batches) {
            const JointObjective obj =
                joint_objective(encoder, snapshot, batch, nullptr, no_target, no_set, nullptr,
                                LossKind::single_step, 0.0);
            ensure_finite(obj.total, snapshot.version(), epoch, "ranking");
            adam_step(encoder.mutable_params(), obj.encoder_grad, state, adam);
            sum += obj.intended;
        }
        const double mean = sum / static_cast<double>(batches.size());
        log.push_back({epoch, TrainStage::intended, mean, kNan, mean});
    }
}

// Joint epochs over encoder and (when linear) transform parameters.
void run_joint_epochs(EncoderParams& encoder, TransformState& transform,
                      const Snapshot& snapshot, const Mat& align_target,
                      const AlignmentSet& align_set, const TransformRegistry* registry,
                      LossKind loss_kind, const TrainConfig& config, Rng& sample_rng,
                      std::vector<EpochLoss>& log) {
    OptimizerState encoder_state(encoder.params());
    OptimizerState transform_state(transform.params);
    AdamConfig adam;
    adam.learning_rate = config.learning_rate;
    adam.weight_decay = config.weight_decay;
    // The backward map is a fitted alignment probe, not a regularized model
    // parameter: decaying it toward zero would bias the alignment objective
    // and force the encoder to inflate embeddings to compensate.
    AdamConfig transform_adam = adam;
    transform_adam.weight_decay = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto batches = make_batches(sample_triples(snapshot, sample_rng,
                                                   config.negatives_per_positive),
                                    config.batch_size, sample_rng);
        double sum_intended = 0.0, sum_align = 0.0, sum_total = 0.0;
        for (const auto& batch : batches) {
            const BackwardTransform current = transform.build();
            const JointObjective obj =
                joint_objective(encoder, snapshot, batch, &current, align_target, align_set,
                                registry, loss_kind, config.lambda);
            ensure_finite(obj.total, snapshot.version(), epoch, "joint");
            adam_step(encoder.mutable_params(), obj.encoder_grad, encoder_state, adam);
            if (transform.choice == TransformChoice::linear && obj.transform_grad.size() > 0) {
                ParamSet grads;
                grads.add("weight", obj.transform_grad);
                adam_step(transform.params, grads, transform_state, transform_adam);
            }
            sum_intended += obj.intended;
            sum_align += obj.alignment;
            sum_total += obj.total;
        }
        const double steps = static_cast<double>(batches.size());
        log.push_back(
            {epoch, TrainStage::joint, sum_intended / steps, sum_align / steps, sum_total / steps});
    }
}

// Posthoc stage: the encoder (hence `source`) is frozen; only the linear
// map's weight moves.
void run_posthoc_alignment_epochs(TransformState& transform, const Mat& source,
                                  const Mat& target, const TransformRegistry* registry,
                                  LossKind loss_kind, const TrainConfig& config, int version,
                                  std::vector<EpochLoss>& log) {
    OptimizerState state(transform.params);
    AdamConfig adam;
    adam.learning_rate = config.learning_rate;
    adam.weight_decay = 0.0;  // alignment probes fit without decay, as above
    const TransformRegistry empty_registry;
    const TransformRegistry& reg = registry != nullptr ? *registry : empty_registry;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const BackwardTransform current = transform.build();
        const AlignmentResult ar = loss_kind == LossKind::multi_step
                                       ? multi_step_alignment_loss(reg, current, source, target)
                                       : single_step_alignment_loss(current, source, target);
        ensure_finite(ar.loss, version, epoch, "alignment");
        ParamSet grads;
        grads.add("weight", ar.transform_grad);
        adam_step(transform.params, grads, state, adam);
        log.push_back({epoch, TrainStage::alignment, kNan, ar.loss, ar.loss});
    }
}

EncoderConfig resolve_base(const EncoderConfig& base_config, const InteractionGraph& graph) {
    EncoderConfig base = base_config;
    if (base.input_feature_dim == 0) {
        base.input_feature_dim = static_cast<Eigen::Index>(graph.feature_dim());
    } else if (base.input_feature_dim != static_cast<Eigen::Index>(graph.feature_dim())) {
        throw ShapeError("train_version: encoder input_feature_dim " +
                         std::to_string(base.input_feature_dim) +
                         " does not match graph feature dimension " +
                         std::to_string(graph.feature_dim()));
    }
    return base;
}

const EncoderParams& require_prev(const EncoderParams* prev, int k, int expected_version,
                                  const MethodSpec& method) {
    if (prev == nullptr) {
        throw StateError("train_version: method " + method.name() + " at version " +
                         std::to_string(k) + " requires the frozen version-" +
                         std::to_string(expected_version) + " encoder");
    }
    if (prev->version() != expected_version) {
        throw StateError("train_version: method " + method.name() + " at version " +
                         std::to_string(k) + " expected a version-" +
                         std::to_string(expected_version) + " encoder but got version " +
                         std::to_string(prev->version()));
    }
    return *prev;
}

}  // namespace

TrainResult train_version(int k, const InteractionGraph& graph, const VersionSchedule& schedule,
                          const EncoderConfig& base_config, const GrowthSchedule& growth,
                          const MethodSpec& method, const TrainConfig& config,
                          const EncoderParams* prev_encoder, const TransformRegistry* registry) {
    config.validate();
    if (k < 0 || k > schedule.last_version()) {
        throw RangeError("train_version: version " + std::to_string(k) +
                         " outside schedule range [0, " +
                         std::to_string(schedule.last_version()) + "]");
    }
    const EncoderConfig base = resolve_base(base_config, graph);
    const Snapshot snapshot = snapshot_at(graph, schedule, k);

    // Seed streams depend on (seed, k) only: methods sharing a code path
    // (and every method at version 0) produce bit-identical weights.
    const std::uint64_t init_seed = Rng::mix(config.seed, static_cast<std::uint64_t>(2 * k));
    Rng sample_rng(Rng::mix(config.seed, static_cast<std::uint64_t>(2 * k + 1)));

    std::vector<EpochLoss> log;

    if (k == 0 || method.method == Method::keep_all || method.method == Method::non_bc) {
        EncoderParams encoder = init_params(schedule_config(base, growth, k), init_seed);
        run_ranking_epochs(encoder, snapshot, config, sample_rng, log);
        EmbeddingTable table = encode_all(encoder, snapshot);
        std::optional<BackwardTransform> transform;
        if (k > 0 && method.method == Method::non_bc) {
            const Eigen::Index prev_dim = schedule_config(base, growth, k - 1).output_dim();
            transform = BackwardTransform::no_trans(k, encoder.config().output_dim(), prev_dim);
        }
        return {std::move(encoder), std::move(transform), std::move(table), std::move(log)};
    }

    if (method.method == Method::fix_m0) {
        const EncoderParams& prev = require_prev(prev_encoder, k, 0, method);
        EncoderParams encoder = prev;  // served unchanged at every version
        EmbeddingTable table = encode_all(encoder, snapshot);
        return {std::move(encoder), std::nullopt, std::move(table), std::move(log)};
    }

    if (method.method == Method::finetune_m0) {
        const EncoderParams& prev = require_prev(prev_encoder, k, k - 1, method);
        EncoderConfig cfg = prev.config();  // architecture is frozen at version 0's
        cfg.version = k;
        EncoderParams encoder(cfg, prev.params());
        run_ranking_epochs(encoder, snapshot, config, sample_rng, log);
        EmbeddingTable table = encode_all(encoder, snapshot);
        auto transform = BackwardTransform::no_trans(k, cfg.output_dim(), cfg.output_dim());
        return {std::move(encoder), std::move(transform), std::move(table), std::move(log)};
    }

    // Alignment-based methods: the frozen previous encoder provides the
    // alignment targets, evaluated on the current snapshot.
    const EncoderParams& prev = require_prev(prev_encoder, k, k - 1, method);
    const EncoderConfig cfg = schedule_config(base, growth, k);
    if (prev.config().output_dim() != schedule_config(base, growth, k - 1).output_dim()) {
        throw ShapeError("train_version: previous encoder width " +
                         std::to_string(prev.config().output_dim()) +
                         " does not match the growth schedule at version " +
                         std::to_string(k - 1));
    }
    const AlignmentSet align_set = full_alignment_set(snapshot);
    const Mat align_target = gather_columns(encode_all(prev, snapshot), align_set);

    EncoderParams encoder = init_params(cfg, init_seed);
    TransformState transform = TransformState::make(method.transform(), k, cfg.output_dim(),
                                                    prev.config().output_dim());

    if (method.strategy() == AlignStrategy::joint) {
        run_joint_epochs(encoder, transform, snapshot, align_target, align_set, registry,
                         method.loss_kind(), config, sample_rng, log);
        EmbeddingTable table = encode_all(encoder, snapshot);
        return {std::move(encoder), transform.build(), std::move(table), std::move(log)};
    }

    // Posthoc: stage one is exactly the ranking-only path; stage two fits
    // the linear map against the frozen embeddings.
    run_ranking_epochs(encoder, snapshot, config, sample_rng, log);
    EmbeddingTable table = encode_all(encoder, snapshot);
    const Mat source = gather_columns(table, align_set);
    run_posthoc_alignment_epochs(transform, source, align_target, registry, method.loss_kind(),
                                 config, k, log);
    return {std::move(encoder), transform.build(), std::move(table), std::move(log)};
}

}  // namespace embver
