#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "embver/common.hpp"

namespace embver {

// One user-item interaction with a normalized timestamp in (0, 1].
struct Interaction {
    NodeId user_id = 0;
    NodeId item_id = 0;
    double time = 0.0;
    int rating = 0;

    bool operator==(const Interaction&) const = default;
};

// Immutable bipartite interaction graph. Interactions are kept sorted by
// time; item features are sorted index lists into a shared multi-hot
// feature space (brands followed by subcategories).
class InteractionGraph {
public:
    InteractionGraph(NodeId num_users, NodeId num_items, std::size_t feature_dim,
                     std::vector<std::vector<std::uint32_t>> item_features,
                     std::vector<Interaction> interactions);

    NodeId num_users() const { return num_users_; }
    NodeId num_items() const { return num_items_; }
    std::size_t feature_dim() const { return feature_dim_; }
    const std::vector<std::uint32_t>& item_features(NodeId item) const;
    const std::vector<Interaction>& interactions() const { return interactions_; }
    std::size_t num_interactions() const { return interactions_.size(); }

    // Number of interactions with time <= t.
    std::size_t prefix_count(double t) const;

    void save(const std::filesystem::path& path) const;
    static InteractionGraph load(const std::filesystem::path& path);

    bool operator==(const InteractionGraph&) const = default;

private:
    NodeId num_users_ = 0;
    NodeId num_items_ = 0;
    std::size_t feature_dim_ = 0;
    std::vector<std::vector<std::uint32_t>> item_features_;
    std::vector<Interaction> interactions_;
};

// Model refresh times t_0 < t_1 < ... < t_K, all inside (0, 1); the end of
// the observation window acts as an implied t_{K+1} = 1.
class VersionSchedule {
public:
    explicit VersionSchedule(std::vector<double> timestamps);

    int last_version() const { return static_cast<int>(timestamps_.size()) - 1; }
    std::size_t num_versions() const { return timestamps_.size(); }
    // Valid for k in [0, last_version() + 1]; t(last_version() + 1) == 1.
    double t(int k) const;
    const std::vector<double>& timestamps() const { return timestamps_; }

    bool operator==(const VersionSchedule&) const = default;

private:
    std::vector<double> timestamps_;
};

// Half-open run [begin, end) of indices into a graph's interaction list.
struct EdgeRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool operator==(const EdgeRange&) const = default;
};

// All edges up to t_k plus adjacency over them. Because interactions are
// time-sorted, the edge set is the prefix [0, edge_count). Adjacency keeps
// edge multiplicity and lists neighbors in edge order. Node ids outside the
// snapshot's active sets resolve to empty neighbor lists, so later nodes can
// still be embedded inductively against this snapshot.
class Snapshot {
public:
    Snapshot(const InteractionGraph& graph, int version, std::size_t edge_count);

    const InteractionGraph& graph() const { return *graph_; }
    int version() const { return version_; }
    std::size_t edge_count() const { return edge_count_; }
    EdgeRange edges() const { return {0, edge_count_}; }

    // Users/items incident to at least one snapshot edge, ascending ids.
    const std::vector<NodeId>& users() const { return users_; }
    const std::vector<NodeId>& items() const { return items_; }
    bool has_user(NodeId u) const;
    bool has_item(NodeId i) const;

    // Neighbor lists with multiplicity; valid for any id in the graph.
    std::span<const NodeId> items_of(NodeId user) const;
    std::span<const NodeId> users_of(NodeId item) const;

private:
    const InteractionGraph* graph_;
    int version_;
    std::size_t edge_count_;
    std::vector<NodeId> users_;
    std::vector<NodeId> items_;
    std::vector<std::size_t> user_offsets_;
    std::vector<NodeId> user_neighbors_;
    std::vector<std::size_t> item_offsets_;
    std::vector<NodeId> item_neighbors_;
};

// Snapshot of all edges with time <= t_k. k must be in [0, last_version()].
Snapshot snapshot_at(const InteractionGraph& graph, const VersionSchedule& schedule, int k);

// Edges with t_k < time <= t_{k+1} (t_{K+1} = 1). k must be in
// [0, last_version()]. Disjoint from snapshot_at(k); appending it to
// snapshot k's prefix yields the edge set at t_{k+1}.
EdgeRange delta_edges(const InteractionGraph& graph, const VersionSchedule& schedule, int k);

// Distinct brand / subcategory token counts gathered while ingesting; their
// sum is the graph's feature dimension.
struct IngestStats {
    std::size_t num_brands = 0;
    std::size_t num_subcategories = 0;
};

// Reads a delimited edge list (user_token, item_token, raw_time, rating) and
// a companion item-feature file (item_token, brand_token, subcategory
// tokens...). Tokens become dense ids in first-seen order; timestamps are
// replaced by their rank fraction (i+1)/N over a stable sort of raw times,
// so the last edge lands at time 1.
InteractionGraph ingest(const std::filesystem::path& edges_path,
                        const std::filesystem::path& features_path,
                        IngestStats* stats = nullptr);

struct SyntheticConfig {
    std::uint64_t seed = 7;
    NodeId num_users = 200;
    NodeId num_items = 100;
    std::size_t num_interactions = 5000;
    std::size_t feature_dim = 32;
    std::size_t latent_dim = 8;
};

// Seeded generator with a planted low-rank user-item affinity: items are
// drawn from a per-user softmax over affinities, ratings correlate with
// affinity, and brand/subcategory features correlate with item factors, so
// both link prediction and the rating-derived label tasks are learnable.
InteractionGraph generate_synthetic(const SyntheticConfig& config);

}  // namespace embver
