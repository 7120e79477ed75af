#pragma once

#include "embver/common.hpp"
#include "embver/embedding_table.hpp"
#include "embver/graph.hpp"
#include "embver/tensor.hpp"
#include "embver/transform.hpp"

namespace embver {

// Numerically stable helpers shared by the losses.
double stable_sigmoid(double x);
double softplus(double x);  // ln(1 + e^x) without overflow

// Pairwise ranking loss over column-aligned triples (user, positive item,
// negative item): mean over columns of -ln sigmoid(<u,i> - <u,j>), with
// exact gradients for every input column.
struct BprResult {
    double loss = 0.0;
    Mat user_grad;
    Mat pos_grad;
    Mat neg_grad;
};

BprResult bpr_loss(const Mat& user, const Mat& pos, const Mat& neg);

// Alignment losses on matrices whose columns are node vectors: `source`
// holds the current-version vectors z_k, `target` the frozen previous
// version's vectors z_{k-1} (a constant; no gradient flows to it).
// source_grad matches `source`; transform_grad matches the learned weight
// and is empty (0x0) for truncation transforms, which have no parameters.
struct AlignmentResult {
    double loss = 0.0;
    Mat source_grad;
    Mat transform_grad;
};

// (1/n) sum_x ||B_k(z_k(x)) - z_{k-1}(x)||^2 over the columns.
AlignmentResult single_step_alignment_loss(const BackwardTransform& transform, const Mat& source,
                                           const Mat& target);

// S_k = (1/k) (I + sum_{j=0}^{k-2} W^j_{k-1}^T W^j_{k-1}), the constant that
// turns the multi-step loss into delta^T S_k delta per node, where
// delta = B_k(z_k) - z_{k-1} and dim = D_{k-1}. The identity term is the
// j = k-1 link; at k = 1 the sum is empty and S_1 = I.
Mat amplification_gram(const TransformRegistry& registry, int k, Eigen::Index dim);

// (1/n) sum_x (1/k) sum_{j=0}^{k-1} ||W^j_{k-1} delta(x)||^2. Historical
// composites are constants; gradients flow through delta only.
AlignmentResult multi_step_alignment_loss(const TransformRegistry& registry,
                                          const BackwardTransform& transform, const Mat& source,
                                          const Mat& target);

// Node set the alignment losses average over. Column order everywhere is
// users first then items, each ascending by id.
struct AlignmentSet {
    std::vector<NodeId> users;
    std::vector<NodeId> items;

    std::size_t size() const { return users.size() + items.size(); }
};

// All users and items of the snapshot.
AlignmentSet full_alignment_set(const Snapshot& snapshot);

// Columns of the listed nodes gathered from a table, users then items.
Mat gather_columns(const EmbeddingTable& table, const AlignmentSet& set);

// Table-level wrappers over the matrix cores; source_grad columns follow
// the set's node order.
AlignmentResult single_step_alignment_loss(const BackwardTransform& transform,
                                           const EmbeddingTable& new_table,
                                           const EmbeddingTable& old_table,
                                           const AlignmentSet& set);
AlignmentResult multi_step_alignment_loss(const TransformRegistry& registry,
                                          const BackwardTransform& transform,
                                          const EmbeddingTable& new_table,
                                          const EmbeddingTable& old_table,
                                          const AlignmentSet& set);

}  // namespace embver
