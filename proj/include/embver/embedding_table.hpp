#pragma once

#include <filesystem>
#include <vector>

#include "embver/common.hpp"
#include "embver/tensor.hpp"

namespace embver {

enum class NodeKind { user, item };

// Per-version node embeddings, one column per node. Ids are kept sorted
// ascending so lookups binary-search and iteration order is canonical.
class EmbeddingTable {
public:
    EmbeddingTable(int version, std::vector<NodeId> user_ids, Mat user_vectors,
                   std::vector<NodeId> item_ids, Mat item_vectors);

    int version() const { return version_; }
    Eigen::Index dim() const { return user_vectors_.rows(); }
    std::size_t count(NodeKind kind) const { return ids(kind).size(); }
    const std::vector<NodeId>& ids(NodeKind kind) const;
    const Mat& vectors(NodeKind kind) const;
    Mat& mutable_vectors(NodeKind kind);

    bool has(NodeKind kind, NodeId id) const;
    // Column index of a node; throws LookupError if absent.
    Eigen::Index col(NodeKind kind, NodeId id) const;
    Vec vector(NodeKind kind, NodeId id) const;

    void save(const std::filesystem::path& path) const;
    static EmbeddingTable load(const std::filesystem::path& path);

    bool operator==(const EmbeddingTable& other) const;

private:
    int version_;
    std::vector<NodeId> user_ids_;
    std::vector<NodeId> item_ids_;
    Mat user_vectors_;
    Mat item_vectors_;
};

}  // namespace embver
