#include "embver/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace embver {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

BprResult bpr_loss(const Mat& user, const Mat& pos, const Mat& neg) {
    if (user.rows() != pos.rows() || user.rows() != neg.rows()) {
        throw ShapeError("bpr_loss: embedding dimensions differ (user " +
                         std::to_string(user.rows()) + ", pos " + std::to_string(pos.rows()) +
                         ", neg " + std::to_string(neg.rows()) + ")");
    }
    if (user.cols() != pos.cols() || user.cols() != neg.cols()) {
        throw ShapeError("bpr_loss: batch sizes differ (user " + std::to_string(user.cols()) +
                         ", pos " + std::to_string(pos.cols()) + ", neg " +
                         std::to_string(neg.cols()) + ")");
    }
    if (user.cols() == 0) {
        throw ValidationError("bpr_loss: empty batch");
    }

    const Eigen::Index n = user.cols();
    BprResult result;
    result.user_grad.resize(user.rows(), n);
    result.pos_grad.resize(user.rows(), n);
    result.neg_grad.resize(user.rows(), n);

    double total = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) {
        const double score = user.col(c).dot(pos.col(c) - neg.col(c));
        total += softplus(-score);
        // d/ds of -ln sigmoid(s) is sigmoid(s) - 1 = -sigmoid(-s).
        const double coef = -stable_sigmoid(-score) / static_cast<double>(n);
        result.user_grad.col(c) = coef * (pos.col(c) - neg.col(c));
        result.pos_grad.col(c) = coef * user.col(c);
        result.neg_grad.col(c) = -coef * user.col(c);
    }
    result.loss = total / static_cast<double>(n);
    return result;
}

namespace {

void check_alignment_shapes(const BackwardTransform& transform, const Mat& source,
                            const Mat& target) {
    if (source.rows() != transform.in_dim()) {
        throw ShapeError("alignment loss: source dimension " + std::to_string(source.rows()) +
                         " does not match transform input dimension " +
                         std::to_string(transform.in_dim()));
    }
    if (target.rows() != transform.out_dim()) {
        throw ShapeError("alignment loss: target dimension " + std::to_string(target.rows()) +
                         " does not match transform output dimension " +
                         std::to_string(transform.out_dim()));
    }
    if (source.cols() != target.cols()) {
        throw ShapeError("alignment loss: source has " + std::to_string(source.cols()) +
                         " columns but target has " + std::to_string(target.cols()));
    }
    if (source.cols() == 0) {
        throw ValidationError("alignment loss: empty alignment set");
    }
}

Mat apply_columns(const BackwardTransform& transform, const Mat& source) {
    if (transform.kind() == TransformKind::linear) {
        return transform.weight() * source;
    }
    return source.topRows(transform.out_dim());
}

// Shared backward chain: given dL/ddelta (same shape as target), produce the
// gradients w.r.t. the transform weight and the source columns.
AlignmentResult finish_alignment(const BackwardTransform& transform, const Mat& source,
                                 double loss, const Mat& delta_grad) {
    AlignmentResult result;
    result.loss = loss;
    if (transform.kind() == TransformKind::linear) {
        result.transform_grad.noalias() = delta_grad * source.transpose();
        result.source_grad.noalias() = transform.weight().transpose() * delta_grad;
    } else {
        result.source_grad = Mat::Zero(source.rows(), source.cols());
        result.source_grad.topRows(transform.out_dim()) = delta_grad;
    }
    return result;
}

}  // namespace

AlignmentResult single_step_alignment_loss(const BackwardTransform& transform, const Mat& source,
                                           const Mat& target) {
    check_alignment_shapes(transform, source, target);
    const double n = static_cast<double>(source.cols());
    Mat delta = apply_columns(transform, source);
    delta -= target;
    const double loss = delta.squaredNorm() / n;
    const Mat delta_grad = (2.0 / n) * delta;
    return finish_alignment(transform, source, loss, delta_grad);
}

Mat amplification_gram(const TransformRegistry& registry, int k, Eigen::Index dim) {
    if (k < 1) {
        throw RangeError("amplification_gram: version " + std::to_string(k) +
                         " has no previous version to align to");
    }
    if (dim <= 0) {
        throw ShapeError("amplification_gram: non-positive dimension " + std::to_string(dim));
    }
    if (k >= 2) {
        if (registry.latest_version() < k - 1) {
            throw StateError("amplification_gram: registry holds transforms through version " +
                             std::to_string(registry.latest_version()) +
                             " but version " + std::to_string(k - 1) + " is required");
        }
        if (registry.dim(k - 1) != dim) {
            throw ShapeError("amplification_gram: registry dimension " +
                             std::to_string(registry.dim(k - 1)) + " for version " +
                             std::to_string(k - 1) + " does not match requested dimension " +
                             std::to_string(dim));
        }
    }
    Mat gram = Mat::Identity(dim, dim);
    for (int j = 0; j <= k - 2; ++j) {
        const Mat& w = registry.composite(j, k - 1);
        gram.noalias() += w.transpose() * w;
    }
    gram /= static_cast<double>(k);
    return gram;
}

AlignmentResult multi_step_alignment_loss(const TransformRegistry& registry,
                                          const BackwardTransform& transform, const Mat& source,
                                          const Mat& target) {
    check_alignment_shapes(transform, source, target);
    if (transform.version() == 1) {
        // S_1 = I: the base case is exactly the single-step loss.
        return single_step_alignment_loss(transform, source, target);
    }
    const Mat gram = amplification_gram(registry, transform.version(), transform.out_dim());
    const double n = static_cast<double>(source.cols());
    Mat delta = apply_columns(transform, source);
    delta -= target;
    Mat gram_delta;
    gram_delta.noalias() = gram * delta;
    const double loss = (delta.array() * gram_delta.array()).sum() / n;
    const Mat delta_grad = (2.0 / n) * gram_delta;
    return finish_alignment(transform, source, loss, delta_grad);
}

AlignmentSet full_alignment_set(const Snapshot& snapshot) {
    AlignmentSet set;
    set.users = snapshot.users();
    set.items = snapshot.items();
    return set;
}

Mat gather_columns(const EmbeddingTable& table, const AlignmentSet& set) {
    Mat out(table.dim(), static_cast<Eigen::Index>(set.size()));
    Eigen::Index c = 0;
    for (NodeId user : set.users) {
        out.col(c++) = table.vectors(NodeKind::user).col(table.col(NodeKind::user, user));
    }
    for (NodeId item : set.items) {
        out.col(c++) = table.vectors(NodeKind::item).col(table.col(NodeKind::item, item));
    }
    return out;
}

AlignmentResult single_step_alignment_loss(const BackwardTransform& transform,
                                           const EmbeddingTable& new_table,
                                           const EmbeddingTable& old_table,
                                           const AlignmentSet& set) {
    if (set.size() == 0) {
        throw ValidationError("alignment loss: empty alignment set");
    }
    return single_step_alignment_loss(transform, gather_columns(new_table, set),
                                      gather_columns(old_table, set));
}

AlignmentResult multi_step_alignment_loss(const TransformRegistry& registry,
                                          const BackwardTransform& transform,
                                          const EmbeddingTable& new_table,
                                          const EmbeddingTable& old_table,
                                          const AlignmentSet& set) {
    if (set.size() == 0) {
        throw ValidationError("alignment loss: empty alignment set");
    }
    return multi_step_alignment_loss(registry, transform, gather_columns(new_table, set),
                                     gather_columns(old_table, set));
}

}  // namespace embver
