#include "embver/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

namespace embver {

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("roc_auc: " + std::to_string(scores.size()) + " scores but " +
                         std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) {
        throw ValidationError("roc_auc: empty input");
    }
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw ValidationError("roc_auc: labels must be 0 or 1, got " +
                                  std::to_string(labels[i]));
        }
        if (!std::isfinite(scores[i])) {
            throw NumericError("roc_auc: non-finite score at index " + std::to_string(i));
        }
        positives += static_cast<std::size_t>(labels[i]);
    }
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw DegenerateMetricError("roc_auc: needs both classes, got " +
                                    std::to_string(positives) + " positives and " +
                                    std::to_string(negatives) + " negatives");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average 1-based ranks within tie groups; the positive rank sum then
    // counts each (positive, negative) pair once, ties worth 1/2.
    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) positive_rank_sum += avg_rank;
        }
        i = j;
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double recall_at_k(const EmbeddingTable& table, const std::vector<Interaction>& eval_edges,
                   const Snapshot& train_snapshot, int k_cut) {
    if (k_cut < 1) {
        throw ValidationError("recall_at_k: cutoff must be >= 1, got " + std::to_string(k_cut));
    }
    if (eval_edges.empty()) {
        throw ValidationError("recall_at_k: empty eval set");
    }
    const std::vector<NodeId>& candidates = train_snapshot.items();
    if (candidates.empty()) {
        throw ValidationError("recall_at_k: candidate item set is empty");
    }

    std::map<NodeId, std::set<NodeId>> eval_items_by_user;
    for (const Interaction& edge : eval_edges) {
        eval_items_by_user[edge.user_id].insert(edge.item_id);
    }

    // Candidate vectors gathered once; scores per user are one gemv.
    Mat candidate_vecs(table.dim(), static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        candidate_vecs.col(static_cast<Eigen::Index>(c)) =
            table.vectors(NodeKind::item).col(table.col(NodeKind::item, candidates[c]));
    }

    double recall_sum = 0.0;
    std::size_t scored_users = 0;
    std::vector<Eigen::Index> pool;
    for (const auto& [user, eval_items] : eval_items_by_user) {
        const auto train_span = train_snapshot.items_of(user);
        const std::set<NodeId> train_items(train_span.begin(), train_span.end());

        std::set<NodeId> relevant;
        for (NodeId item : eval_items) {
            if (train_items.count(item) == 0 &&
                std::binary_search(candidates.begin(), candidates.end(), item)) {
                relevant.insert(item);
            }
        }
        if (relevant.empty()) continue;

        const Vec user_vec = table.vector(NodeKind::user, user);
        const Vec scores = candidate_vecs.transpose() * user_vec;

        pool.clear();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (train_items.count(candidates[c]) == 0) {
                pool.push_back(static_cast<Eigen::Index>(c));
            }
        }
        const auto better = [&](Eigen::Index a, Eigen::Index b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return candidates[static_cast<std::size_t>(a)] < candidates[static_cast<std::size_t>(b)];
        };
        const std::size_t cut = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(k_cut));
        std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cut),
                          pool.end(), better);

        std::size_t hits = 0;
        for (std::size_t r = 0; r < cut; ++r) {
            if (relevant.count(candidates[static_cast<std::size_t>(pool[r])]) != 0) ++hits;
        }
        recall_sum += static_cast<double>(hits) / static_cast<double>(relevant.size());
        ++scored_users;
    }
    if (scored_users == 0) {
        throw ValidationError(
            "recall_at_k: no scorable user (every eval item is outside the candidate set)");
    }
    return recall_sum / static_cast<double>(scored_users);
}

double alignment_error(const EmbeddingTable& compat_table, const EmbeddingTable& reference_table,
                       const AlignmentSet& set) {
    if (compat_table.dim() != reference_table.dim()) {
        throw ShapeError("alignment_error: dimension mismatch (" +
                         std::to_string(compat_table.dim()) + " vs " +
                         std::to_string(reference_table.dim()) + ")");
    }
    if (set.size() == 0) {
        throw ValidationError("alignment_error: empty node set");
    }
    double sum = 0.0;
    const auto accumulate = [&](NodeKind kind, NodeId id) {
        sum += (compat_table.vector(kind, id) - reference_table.vector(kind, id)).norm();
    };
    for (NodeId user : set.users) accumulate(NodeKind::user, user);
    for (NodeId item : set.items) accumulate(NodeKind::item, item);
    return sum / static_cast<double>(set.size());
}

double relative_degradation(double perf, double perf_keepall) {
    if (!(perf_keepall > 0.0)) {
        throw NumericError("relative_degradation: baseline must be positive, got " +
                           std::to_string(perf_keepall));
    }
    return 100.0 * (perf - perf_keepall) / perf_keepall;
}

}  // namespace embver
