#pragma once

#include <vector>

#include "embver/common.hpp"
#include "embver/embedding_table.hpp"
#include "embver/graph.hpp"
#include "embver/losses.hpp"

namespace embver {

// Rank-based ROC-AUC with ties credited half a win; exactly equal to the
// O(pos * neg) pairwise count. Labels must be 0/1 with both classes present
// (otherwise DegenerateMetricError).
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Top-k_cut retrieval recall, averaged over users. For each user with eval
// edges: candidates are the training snapshot's items minus that user's
// training-time items; relevant items are the user's eval items inside the
// candidate set; scores are dot products against the table's vectors, with
// score ties broken by ascending item id. Users whose relevant set is empty
// are skipped; if no user is scorable the metric is undefined.
double recall_at_k(const EmbeddingTable& table, const std::vector<Interaction>& eval_edges,
                   const Snapshot& train_snapshot, int k_cut = 50);

// Mean Euclidean distance between served and reference vectors over the
// node set (users then items; order does not affect the mean).
double alignment_error(const EmbeddingTable& compat_table, const EmbeddingTable& reference_table,
                       const AlignmentSet& set);

// 100 * (perf - baseline) / baseline; the baseline must be positive.
double relative_degradation(double perf, double perf_keepall);

}  // namespace embver
