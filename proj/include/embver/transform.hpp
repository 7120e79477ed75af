#pragma once

#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "embver/common.hpp"
#include "embver/embedding_table.hpp"
#include "embver/tensor.hpp"

namespace embver {

enum class TransformKind { linear, no_trans };

// One backward step B_k mapping version-k vectors (dim in_dim = D_k) to
// version-(k-1) vectors (dim out_dim = D_{k-1}): either a learned matrix or
// plain truncation to the first out_dim coordinates.
class BackwardTransform {
public:
    static BackwardTransform linear(int version, Mat weight);
    static BackwardTransform no_trans(int version, Eigen::Index in_dim, Eigen::Index out_dim);

    TransformKind kind() const { return kind_; }
    int version() const { return version_; }
    Eigen::Index in_dim() const { return in_dim_; }
    Eigen::Index out_dim() const { return out_dim_; }
    // Learned matrix; only valid for linear transforms.
    const Mat& weight() const;
    // Dense out_dim x in_dim matrix; truncation becomes [I 0].
    Mat as_matrix() const;

    Vec apply(const Vec& z) const;

    bool operator==(const BackwardTransform& other) const;

private:
    BackwardTransform(TransformKind kind, int version, Eigen::Index in_dim,
                      Eigen::Index out_dim, Mat weight);

    TransformKind kind_;
    int version_;
    Eigen::Index in_dim_;
    Eigen::Index out_dim_;
    Mat weight_;  // empty for no_trans
};

// Ordered chain B_1..B_K plus every composed product W^j_k (dense, with
// truncation steps materialized), precomputed eagerly at registration so a
// conversion is always a single matrix product.
class TransformRegistry {
public:
    TransformRegistry() = default;

    // Next transform in the chain; version must be latest_version() + 1 and
    // its output dimension must match the previous input dimension.
    void register_transform(BackwardTransform transform);

    int latest_version() const { return static_cast<int>(transforms_.size()); }
    bool empty() const { return transforms_.empty(); }
    const BackwardTransform& transform(int k) const;  // B_k, 1 <= k <= latest

    // Embedding dimension D_j for 0 <= j <= latest_version().
    Eigen::Index dim(int j) const;

    // W^j_k = W_{j+1} ... W_k, shape D_j x D_k, 0 <= j < k <= latest.
    const Mat& composite(int j, int k) const;

    void save(const std::filesystem::path& path) const;
    static TransformRegistry load(const std::filesystem::path& path);

    bool operator==(const TransformRegistry& other) const;

private:
    std::vector<BackwardTransform> transforms_;
    std::map<std::pair<int, int>, Mat> composites_;
};

// Version-j view of a version-k table: applies W^j_k to every column.
EmbeddingTable to_version(const TransformRegistry& registry, const EmbeddingTable& table,
                          int target_version);

// delta_k(x) = B_k(z_k(x)) - z_{k-1}(x), length D_{k-1}.
Vec single_step_error(const BackwardTransform& transform, const EmbeddingTable& table_k,
                      const EmbeddingTable& table_prev, NodeKind kind, NodeId node);

struct ErrorDecomposition {
    Vec total;               // reconstructed delta^j_k(x)
    std::vector<Vec> terms;  // W^j_i delta_{i+1}(x) for i = j..k-1, in order
};

// Rebuilds the multi-step error from stored single-step errors
// delta_{j+1}(x)..delta_k(x), exposing how each step is amplified by the
// composites in front of it. Algebraically equal to W^j_k z_k(x) - z_j(x).
ErrorDecomposition error_decomposition(const TransformRegistry& registry,
                                       const std::vector<Vec>& single_step_errors, int j, int k);

struct AlignmentErrorRecord {
    int j = 0;
    int k = 0;
    std::vector<double> node_norms;  // ||delta^j_k(x)|| per node, users then items
    double mean_l2 = 0.0;
};

// Mean multi-step error ||W^j_k z_k - z_j|| for every pair j < k, over one
// fixed node set present in all supplied tables (typically the oldest
// cohort). tables[i] must be the version-i table for i = 0..latest.
std::vector<AlignmentErrorRecord> error_growth_trace(const TransformRegistry& registry,
                                                     const std::vector<EmbeddingTable>& tables,
                                                     const std::vector<NodeId>& users,
                                                     const std::vector<NodeId>& items);

}  // namespace embver
