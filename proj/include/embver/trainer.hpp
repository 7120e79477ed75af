#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "embver/common.hpp"
#include "embver/encoder.hpp"
#include "embver/graph.hpp"
#include "embver/losses.hpp"
#include "embver/tensor.hpp"
#include "embver/transform.hpp"

namespace embver {

// The nine version-management methods. Every method trains the same model at
// version 0 with the ranking loss only; they differ in what happens from
// version 1 on.
enum class Method {
    keep_all,        // retrain and keep every version; the reference upper bound
    fix_m0,          // never train again; serve the version-0 model forever
    finetune_m0,     // keep the version-0 architecture, finetune it each version
    non_bc,          // retrain per version; consumers get raw truncated vectors
    post_lin_sloss,  // retrain, then fit a linear map minimizing one-step error
    post_lin_mloss,  // retrain, then fit a linear map minimizing multi-step error
    joint_no_trans,  // joint training, truncation map, one-step loss
    joint_lin_sloss, // joint training, linear map, one-step loss
    bc_aligner,      // joint training, linear map, multi-step loss
};

enum class AlignStrategy { none, joint, posthoc };
enum class TransformChoice { none, linear, truncation };
enum class LossKind { single_step, multi_step };

struct MethodSpec {
    Method method = Method::keep_all;

    // Canonical names: KeepAll, FixM0, FinetuneM0, NonBC, PostLinSLoss,
    // PostLinMLoss, JointNoTrans, JointLinSLoss, BCAligner.
    static MethodSpec parse(const std::string& name);
    static const std::vector<std::string>& all_names();
    std::string name() const;

    AlignStrategy strategy() const;
    TransformChoice transform() const;
    LossKind loss_kind() const;  // meaningful when strategy() != none

    bool keeps_all_versions() const { return method == Method::keep_all; }
    bool serves_v0_model() const { return method == Method::fix_m0; }
    bool reuses_prev_architecture() const { return method == Method::finetune_m0; }
    // Whether versions >= 1 produce a backward map into the previous space
    // (learned or structural); false only for the methods that keep a v0-
    // compatible model around.
    bool emits_transform() const;
    bool trains_transform() const { return transform() == TransformChoice::linear; }

    bool operator==(const MethodSpec&) const = default;
};

struct TrainConfig {
    int epochs = 100;
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    double lambda = 16.0;  // alignment trade-off weight
    int batch_size = 0;    // positives per step; 0 = full batch
    int negatives_per_positive = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// One ranking example: a user, an item they interacted with, and a sampled
// item used as the negative.
struct BprTriple {
    NodeId user = 0;
    NodeId pos_item = 0;
    NodeId neg_item = 0;
};

// One triple per snapshot edge (times negatives_per_positive), in edge
// order; negatives drawn uniformly from the snapshot's item set.
std::vector<BprTriple> sample_triples(const Snapshot& snapshot, Rng& rng,
                                      int negatives_per_positive);

// Value and gradients of  L_bpr + lambda * L_align  at the current encoder
// and transform parameters. `transform` may be null (pure ranking loss);
// `align_target` holds the frozen previous-version vectors over `align_set`
// (users then items). `registry` supplies historical composites and is only
// consulted for the multi-step loss at versions >= 2.
struct JointObjective {
    double total = 0.0;
    double intended = 0.0;   // ranking component
    double alignment = 0.0;  // unweighted alignment component
    ParamSet encoder_grad;
    Mat transform_grad;  // d total / d W, lambda included; empty if unused
};

JointObjective joint_objective(const EncoderParams& encoder, const Snapshot& snapshot,
                               const std::vector<BprTriple>& triples,
                               const BackwardTransform* transform, const Mat& align_target,
                               const AlignmentSet& align_set, const TransformRegistry* registry,
                               LossKind loss_kind, double lambda);

enum class TrainStage { intended, alignment, joint };
std::string to_string(TrainStage stage);

struct EpochLoss {
    int epoch = 0;
    TrainStage stage = TrainStage::intended;
    double intended = 0.0;   // nan when the stage does not evaluate it
    double alignment = 0.0;  // nan when the stage does not evaluate it
    double total = 0.0;
};

struct TrainResult {
    EncoderParams encoder;
    std::optional<BackwardTransform> transform;  // absent for KeepAll / FixM0
    EmbeddingTable table;                        // embeddings over the snapshot's nodes
    std::vector<EpochLoss> loss_log;
};

// Trains version k of the given method.
//   - version 0: every method runs the identical ranking-only path, so equal
//     seeds give bit-identical models across methods.
//   - prev_encoder: the method's frozen version-(k-1) encoder (version-0 for
//     FixM0). Required for k >= 1 except for KeepAll and NonBC.
//   - registry: composites through version k-1; required only by the
//     multi-step loss at k >= 2.
// Seed streams are derived from (config.seed, k) only, never from the
// method, so methods sharing a training path produce identical weights.
TrainResult train_version(int k, const InteractionGraph& graph, const VersionSchedule& schedule,
                          const EncoderConfig& base_config, const GrowthSchedule& growth,
                          const MethodSpec& method, const TrainConfig& config,
                          const EncoderParams* prev_encoder, const TransformRegistry* registry);

}  // namespace embver
