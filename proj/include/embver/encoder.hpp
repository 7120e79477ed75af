#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "embver/common.hpp"
#include "embver/embedding_table.hpp"
#include "embver/graph.hpp"
#include "embver/tensor.hpp"

namespace embver {

// Architecture growth across versions: hidden width increases by dim_step
// per version (until growth_stop if set), and one extra layer is added from
// add_layer_at onwards.
struct GrowthSchedule {
    int dim_step = 64;
    int add_layer_at = 2;  // -1 = never add a layer
    int growth_stop = -1;  // last version whose width still grows; -1 = no cap

    bool operator==(const GrowthSchedule&) const = default;
};

struct EncoderConfig {
    int version = 0;
    int num_layers = 2;
    Eigen::Index hidden_dim = 256;
    Eigen::Index input_feature_dim = 0;

    // Embedding dimension D_k equals the hidden width.
    Eigen::Index output_dim() const { return hidden_dim; }
    void validate() const;

    bool operator==(const EncoderConfig&) const = default;
};

// Config for version k derived from the version-0 base.
EncoderConfig schedule_config(const EncoderConfig& base, const GrowthSchedule& schedule, int k);

// One encoder version: the input feature projection plus per-layer weights
// and biases, all hidden_dim wide.
class EncoderParams {
public:
    EncoderParams(EncoderConfig config, ParamSet params);

    const EncoderConfig& config() const { return config_; }
    int version() const { return config_.version; }
    const ParamSet& params() const { return params_; }
    ParamSet& mutable_params() { return params_; }

    const Mat& feature_proj() const { return params_.at("feature_proj"); }
    const Mat& layer_weight(int layer) const;  // 1-based
    const Mat& layer_bias(int layer) const;

    void save(const std::filesystem::path& path) const;
    static EncoderParams load(const std::filesystem::path& path);

    bool operator==(const EncoderParams& other) const;

private:
    EncoderConfig config_;
    ParamSet params_;
};

// Uniform Glorot weights (variance 2 / (fan_in + fan_out)), zero biases.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Every intermediate state of a full forward pass over all graph nodes,
// kept for the manual backward pass. Matrices are hidden_dim x num_nodes;
// index l of h is the state after l layers (l = 0 is the projected input).
struct ForwardTrace {
    std::vector<Mat> user_h;    // num_layers + 1 entries
    std::vector<Mat> item_h;
    std::vector<Mat> user_agg;  // num_layers entries: mean neighbor h^(l-1)
    std::vector<Mat> item_agg;
    std::vector<Mat> user_pre;  // num_layers entries: pre-activation
    std::vector<Mat> item_pre;

    const Mat& user_embeddings() const { return user_h.back(); }
    const Mat& item_embeddings() const { return item_h.back(); }
};

// Layer rule, applied over every node in the owning graph (nodes without
// snapshot edges aggregate over an empty neighborhood and stay embeddable):
//   item h^0 = feature_proj * multi_hot(features)
//   user h^0 = mean of neighbor items' h^0 (zero without neighbors)
//   h^l = relu(W^l [h^(l-1) || mean_{n in N(v)} h_n^(l-1)] + b^l),
// with relu omitted on the final layer.
ForwardTrace encode_forward(const EncoderParams& params, const Snapshot& snapshot);

// Gradients of sum_v <user_grad_v, user_emb_v> + sum_v <item_grad_v, item_emb_v>
// with respect to every parameter; the grad matrices must span all nodes
// (zero columns for nodes outside the objective).
ParamSet encode_backward(const EncoderParams& params, const Snapshot& snapshot,
                         const ForwardTrace& trace, const Mat& user_grad,
                         const Mat& item_grad);

// Single-node embedding; bit-identical to the matching encode_forward column.
Vec encode(const EncoderParams& params, const Snapshot& snapshot, NodeKind kind, NodeId node);

// Table over the requested node ids (any ids valid in the snapshot's graph).
EmbeddingTable encode_table(const EncoderParams& params, const Snapshot& snapshot,
                            std::vector<NodeId> user_ids, std::vector<NodeId> item_ids);

// Table over exactly the snapshot's user and item sets.
EmbeddingTable encode_all(const EncoderParams& params, const Snapshot& snapshot);

}  // namespace embver
