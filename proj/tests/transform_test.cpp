#include <gtest/gtest.h>

#include <Eigen/LU>

#include <cmath>
#include <map>
#include <vector>

#include "embver/transform.hpp"
#include "test_support.hpp"

using namespace embver;
using embver::testing::TempDir;

namespace {

Mat random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

std::vector<NodeId> iota_ids(std::size_t n) {
    std::vector<NodeId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<NodeId>(i);
    return ids;
}

EmbeddingTable random_table(Rng& rng, int version, Eigen::Index dim, std::size_t n_users,
                            std::size_t n_items) {
    return EmbeddingTable(version, iota_ids(n_users), random_mat(rng, dim, n_users),
                          iota_ids(n_items), random_mat(rng, dim, n_items));
}

}  // namespace

TEST(BackwardTransformTest, ApplyLinearMatchesHandComputation) {
    Mat w(2, 2);
    w << 0, 1, 1, 0;
    auto t = BackwardTransform::linear(1, w);
    Vec z(2);
    z << 3, 5;
    Vec out = t.apply(z);
    EXPECT_DOUBLE_EQ(out[0], 5.0);
    EXPECT_DOUBLE_EQ(out[1], 3.0);
}

TEST(BackwardTransformTest, TruncationTakesLeadingCoordinates) {
    auto same = BackwardTransform::no_trans(1, 3, 3);
    Vec z(3);
    z << 1, 2, 3;
    EXPECT_EQ(same.apply(z), z);

    auto shrink = BackwardTransform::no_trans(1, 3, 2);
    Vec out = shrink.apply(z);
    ASSERT_EQ(out.size(), 2);
    EXPECT_DOUBLE_EQ(out[0], 1.0);
    EXPECT_DOUBLE_EQ(out[1], 2.0);

    Mat m = shrink.as_matrix();
    Mat expected(2, 3);
    expected << 1, 0, 0, 0, 1, 0;
    EXPECT_TRUE((m.array() == expected.array()).all());
}

TEST(BackwardTransformTest, Validation) {
    EXPECT_THROW(BackwardTransform::no_trans(1, 2, 3), ValidationError);  // grows
    EXPECT_THROW(BackwardTransform::no_trans(0, 3, 2), ValidationError);
    EXPECT_THROW(BackwardTransform::linear(1, Mat()), ShapeError);
    Mat bad = Mat::Ones(2, 2) * std::nan("");
    EXPECT_THROW(BackwardTransform::linear(1, bad), ValidationError);
    auto t = BackwardTransform::linear(1, Mat::Identity(2, 3));
    Vec wrong(2);
    EXPECT_THROW(t.apply(wrong), ShapeError);
    EXPECT_THROW(BackwardTransform::no_trans(1, 3, 2).weight(), StateError);
}

TEST(TransformRegistryTest, BaseCompositeIsTheTransformItself) {
    TransformRegistry reg;
    Rng rng(3);
    Mat w1 = random_mat(rng, 4, 6);
    reg.register_transform(BackwardTransform::linear(1, w1));
    EXPECT_TRUE((reg.composite(0, 1).array() == w1.array()).all());
    EXPECT_EQ(reg.dim(0), 4);
    EXPECT_EQ(reg.dim(1), 6);
}

TEST(TransformRegistryTest, TwoStepCompositeMatchesHandProduct) {
    Mat w1(2, 2), w2(2, 2);
    w1 << 0, 1, 1, 0;
    w2 << 2, 0, 0, 3;
    TransformRegistry reg;
    reg.register_transform(BackwardTransform::linear(1, w1));
    reg.register_transform(BackwardTransform::linear(2, w2));
    Mat expected(2, 2);
    expected << 0, 3, 2, 0;
    EXPECT_TRUE((reg.composite(0, 2).array() == expected.array()).all());
}

TEST(TransformRegistryTest, IdentityChainComposesToIdentity) {
    TransformRegistry reg;
    for (int k = 1; k <= 4; ++k)
        reg.register_transform(BackwardTransform::linear(k, Mat::Identity(3, 3)));
    for (int j = 0; j < 4; ++j)
        EXPECT_TRUE(reg.composite(j, 4).isIdentity(0.0));
}

TEST(TransformRegistryTest, RegistrationValidation) {
    TransformRegistry reg;
    EXPECT_THROW(reg.register_transform(BackwardTransform::linear(2, Mat::Identity(2, 2))),
                 ValidationError);  // must start at version 1
    reg.register_transform(BackwardTransform::linear(1, Mat::Identity(3, 4)));
    // next transform must output dimension 4
    EXPECT_THROW(reg.register_transform(BackwardTransform::linear(2, Mat::Identity(3, 5))),
                 ValidationError);
    EXPECT_THROW(reg.composite(1, 1), RangeError);
    EXPECT_THROW(reg.composite(-1, 1), RangeError);
    EXPECT_THROW(reg.composite(0, 2), StateError);
    EXPECT_THROW(reg.transform(2), StateError);
    EXPECT_THROW(reg.transform(0), RangeError);
    EXPECT_THROW(reg.dim(2), RangeError);
    EXPECT_THROW(TransformRegistry().dim(0), StateError);
}

TEST(TransformRegistryTest, CompositionAssociativity) {
    Rng rng(17);
    TransformRegistry reg;
    std::vector<Eigen::Index> dims = {3, 4, 5, 6, 7};  // D_0..D_4
    for (int k = 1; k <= 4; ++k)
        reg.register_transform(
            BackwardTransform::linear(k, random_mat(rng, dims[k - 1], dims[k])));
    Vec v = random_mat(rng, dims[4], 1);
    for (int j = 0; j < 4; ++j)
        for (int m = j + 1; m < 4; ++m) {
            Vec direct = reg.composite(j, 4) * v;
            Vec stepped = reg.composite(j, m) * (reg.composite(m, 4) * v);
            EXPECT_LT((direct - stepped).norm(), 1e-10);
        }
}

TEST(TransformRegistryTest, CacheMatchesFreshRecomputation) {
    Rng rng(23);
    TransformRegistry reg;
    std::vector<Eigen::Index> dims = {3, 4, 4, 6};
    reg.register_transform(BackwardTransform::linear(1, random_mat(rng, dims[0], dims[1])));
    reg.register_transform(BackwardTransform::no_trans(2, dims[2], dims[1]));
    reg.register_transform(BackwardTransform::linear(3, random_mat(rng, dims[2], dims[3])));
    for (int k = 1; k <= 3; ++k)
        for (int j = 0; j < k; ++j) {
            Mat fresh = reg.transform(j + 1).as_matrix();
            for (int i = j + 2; i <= k; ++i) fresh = fresh * reg.transform(i).as_matrix();
            EXPECT_LT((reg.composite(j, k) - fresh).cwiseAbs().maxCoeff(), 1e-12);
        }
}

TEST(ToVersionTest, SingleStepMatchesPerNodeApply) {
    Rng rng(5);
    Mat w = random_mat(rng, 3, 5);
    TransformRegistry reg;
    reg.register_transform(BackwardTransform::linear(1, w));
    EmbeddingTable table = random_table(rng, 1, 5, 6, 4);
    EmbeddingTable converted = to_version(reg, table, 0);
    EXPECT_EQ(converted.version(), 0);
    EXPECT_EQ(converted.dim(), 3);
    auto t = BackwardTransform::linear(1, w);
    for (NodeId u : table.ids(NodeKind::user)) {
        Vec expected = t.apply(table.vector(NodeKind::user, u));
        EXPECT_LT((converted.vector(NodeKind::user, u) - expected).norm(), 1e-12);
    }
    for (NodeId i : table.ids(NodeKind::item)) {
        Vec expected = t.apply(table.vector(NodeKind::item, i));
        EXPECT_LT((converted.vector(NodeKind::item, i) - expected).norm(), 1e-12);
    }
    EXPECT_THROW(to_version(reg, table, 1), RangeError);
    EXPECT_THROW(to_version(reg, table, -1), RangeError);
}

TEST(ToVersionTest, PerfectChainRecoversOldEmbeddings) {
    // z_k = A_k z_{k-1} with invertible A_k; B_k = A_k^{-1} realigns exactly.
    Rng rng(7);
    const Eigen::Index dim = 4;
    Mat a1 = Mat::Identity(dim, dim) + 0.3 * random_mat(rng, dim, dim);
    Mat a2 = Mat::Identity(dim, dim) + 0.3 * random_mat(rng, dim, dim);
    EmbeddingTable z0 = random_table(rng, 0, dim, 8, 5);
    EmbeddingTable z2(2, z0.ids(NodeKind::user),
                      a2 * a1 * z0.vectors(NodeKind::user), z0.ids(NodeKind::item),
                      a2 * a1 * z0.vectors(NodeKind::item));
    TransformRegistry reg;
    reg.register_transform(BackwardTransform::linear(1, a1.inverse()));
    reg.register_transform(BackwardTransform::linear(2, a2.inverse()));
    EmbeddingTable recovered = to_version(reg, z2, 0);
    EXPECT_LT((recovered.vectors(NodeKind::user) - z0.vectors(NodeKind::user))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-9);
    EXPECT_LT((recovered.vectors(NodeKind::item) - z0.vectors(NodeKind::item))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-9);
}

TEST(ToVersionTest, ThreeChainEqualsSequentialApplication) {
    Rng rng(11);
    std::vector<Eigen::Index> dims = {3, 4, 5, 6};
    TransformRegistry reg;
    for (int k = 1; k <= 3; ++k)
        reg.register_transform(
            BackwardTransform::linear(k, random_mat(rng, dims[k - 1], dims[k])));
    EmbeddingTable table = random_table(rng, 3, dims[3], 5, 5);
    EmbeddingTable converted = to_version(reg, table, 0);
    for (NodeId u : table.ids(NodeKind::user)) {
        Vec v = table.vector(NodeKind::user, u);
        for (int k = 3; k >= 1; --k) v = reg.transform(k).apply(v);
        EXPECT_LT((converted.vector(NodeKind::user, u) - v).norm(), 1e-12);
    }
}

TEST(SingleStepErrorTest, PerfectAlignmentGivesZero) {
    Rng rng(13);
    Mat w = Mat::Identity(3, 3);
    EmbeddingTable prev = random_table(rng, 0, 3, 4, 4);
    EmbeddingTable cur(1, prev.ids(NodeKind::user), prev.vectors(NodeKind::user),
                       prev.ids(NodeKind::item), prev.vectors(NodeKind::item));
    auto t = BackwardTransform::linear(1, w);
    Vec err = single_step_error(t, cur, prev, NodeKind::user, 2);
    EXPECT_DOUBLE_EQ(err.norm(), 0.0);
}

TEST(SingleStepErrorTest, HandComputedTwoDimCase) {
    Mat w(2, 2);
    w << 0, 1, 1, 0;
    std::vector<NodeId> ids = {0};
    Mat zk(2, 1), zprev(2, 1);
    zk << 3, 5;
    zprev << 4, 1;
    EmbeddingTable cur(1, ids, zk, {}, Mat(2, 0));
    EmbeddingTable prev(0, ids, zprev, {}, Mat(2, 0));
    Vec err = single_step_error(BackwardTransform::linear(1, w), cur, prev, NodeKind::user, 0);
    // B(z) = (5,3); delta = (5,3) - (4,1) = (1,2)
    EXPECT_DOUBLE_EQ(err[0], 1.0);
    EXPECT_DOUBLE_EQ(err[1], 2.0);
    EXPECT_THROW(
        single_step_error(BackwardTransform::linear(1, w), cur, prev, NodeKind::user, 9),
        LookupError);
}

TEST(ErrorDecompositionTest, ReconstructionMatchesDirectMultiStepError) {
    Rng rng(29);
    std::vector<Eigen::Index> dims = {3, 4, 5, 6, 7};
    TransformRegistry reg;
    for (int k = 1; k <= 4; ++k)
        reg.register_transform(
            BackwardTransform::linear(k, random_mat(rng, dims[k - 1], dims[k])));
    // Arbitrary per-version embeddings of one node induce single-step errors.
    std::vector<Vec> z;
    for (int v = 0; v <= 4; ++v) z.push_back(random_mat(rng, dims[v], 1));
    std::vector<Vec> deltas;  // delta_i = W_i z_i - z_{i-1}
    for (int i = 1; i <= 4; ++i)
        deltas.push_back(reg.transform(i).apply(z[i]) - z[i - 1]);
    for (int j = 0; j < 4; ++j) {
        std::vector<Vec> slice(deltas.begin() + j, deltas.end());
        ErrorDecomposition dec = error_decomposition(reg, slice, j, 4);
        ASSERT_EQ(dec.terms.size(), static_cast<std::size_t>(4 - j));
        Vec direct = reg.composite(j, 4) * z[4] - z[j];
        EXPECT_LT((dec.total - direct).cwiseAbs().maxCoeff(), 1e-9);
        Vec sum = Vec::Zero(dims[j]);
        for (const Vec& term : dec.terms) sum += term;
        EXPECT_LT((dec.total - sum).cwiseAbs().maxCoeff(), 1e-12);
    }
    // single pair reduces to the plain single-step error
    ErrorDecomposition one = error_decomposition(reg, {deltas[2]}, 2, 3);
    EXPECT_LT((one.total - deltas[2]).cwiseAbs().maxCoeff(), 1e-12);
    // zero errors reconstruct to zero
    std::vector<Vec> zeros;
    for (int i = 1; i <= 4; ++i) zeros.push_back(Vec::Zero(dims[i - 1]));
    EXPECT_DOUBLE_EQ(error_decomposition(reg, zeros, 0, 4).total.norm(), 0.0);
    // wrong count rejected, and j must precede k
    EXPECT_THROW(error_decomposition(reg, {deltas[0]}, 0, 4), ValidationError);
    EXPECT_THROW(error_decomposition(reg, {}, 3, 3), RangeError);
    EXPECT_THROW(error_decomposition(reg, deltas, 0, 5), StateError);
}

TEST(ErrorDecompositionTest, IdentityLinksAddErrorsWithoutAmplification) {
    TransformRegistry reg;
    for (int k = 1; k <= 3; ++k)
        reg.register_transform(BackwardTransform::linear(k, Mat::Identity(4, 4)));
    Rng rng(31);
    std::vector<Vec> deltas;
    Vec plain_sum = Vec::Zero(4);
    for (int i = 0; i < 3; ++i) {
        deltas.push_back(random_mat(rng, 4, 1));
        plain_sum += deltas.back();
    }
    ErrorDecomposition dec = error_decomposition(reg, deltas, 0, 3);
    EXPECT_LT((dec.total - plain_sum).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ErrorGrowthTraceTest, ZeroErrorChainGivesZeros) {
    Rng rng(37);
    TransformRegistry reg;
    Mat a = Mat::Identity(3, 3) + 0.2 * random_mat(rng, 3, 3);
    reg.register_transform(BackwardTransform::linear(1, a.inverse()));
    reg.register_transform(BackwardTransform::linear(2, a.inverse()));
    EmbeddingTable z0 = random_table(rng, 0, 3, 6, 3);
    EmbeddingTable z1(1, z0.ids(NodeKind::user), a * z0.vectors(NodeKind::user),
                      z0.ids(NodeKind::item), a * z0.vectors(NodeKind::item));
    EmbeddingTable z2(2, z0.ids(NodeKind::user), a * z1.vectors(NodeKind::user),
                      z0.ids(NodeKind::item), a * z1.vectors(NodeKind::item));
    auto records = error_growth_trace(reg, {z0, z1, z2}, z0.ids(NodeKind::user),
                                      z0.ids(NodeKind::item));
    ASSERT_EQ(records.size(), 3u);  // (0,1), (0,2), (1,2)
    for (const auto& rec : records) EXPECT_LT(rec.mean_l2, 1e-9);
}

TEST(ErrorGrowthTraceTest, IidErrorsGrowAsSqrtGap) {
    const int versions = 4;
    const Eigen::Index dim = 16;
    const std::size_t nodes = 1000;
    TransformRegistry reg;
    for (int k = 1; k <= versions; ++k)
        reg.register_transform(BackwardTransform::linear(k, Mat::Identity(dim, dim)));
    Rng rng(41);
    // Build tables backwards: z_{k-1} = z_k - delta_k with unit-variance deltas,
    // so with identity links the (j,k) error is the sum of k-j iid gaussians.
    std::vector<Mat> user_vecs(versions + 1);
    user_vecs[versions] = random_mat(rng, dim, nodes);
    for (int k = versions; k >= 1; --k)
        user_vecs[k - 1] = user_vecs[k] - random_mat(rng, dim, nodes);
    std::vector<EmbeddingTable> tables;
    for (int v = 0; v <= versions; ++v)
        tables.emplace_back(v, iota_ids(nodes), user_vecs[v], std::vector<NodeId>{},
                            Mat(dim, 0));
    auto records =
        error_growth_trace(reg, tables, tables[0].ids(NodeKind::user), {});
    std::map<int, std::pair<double, int>> by_gap;
    for (const auto& rec : records) {
        auto& [sum, count] = by_gap[rec.k - rec.j];
        sum += rec.mean_l2;
        ++count;
    }
    double base = by_gap.at(1).first / by_gap.at(1).second;
    for (int gap = 2; gap <= versions; ++gap) {
        double mean = by_gap.at(gap).first / by_gap.at(gap).second;
        EXPECT_NEAR(mean / base, std::sqrt(double(gap)), 0.1 * std::sqrt(double(gap)));
    }
}

TEST(ErrorGrowthTraceTest, SingleVersionGivesEmptyTrace) {
    TransformRegistry reg;
    Rng rng(43);
    EmbeddingTable z0 = random_table(rng, 0, 3, 4, 4);
    auto records = error_growth_trace(reg, {z0}, z0.ids(NodeKind::user), {});
    EXPECT_TRUE(records.empty());
}

TEST(RegistryPersistenceTest, RoundTripBitExact) {
    TempDir dir;
    Rng rng(47);
    TransformRegistry reg;
    reg.register_transform(BackwardTransform::linear(1, random_mat(rng, 3, 4)));
    reg.register_transform(BackwardTransform::no_trans(2, 4, 4));
    reg.register_transform(BackwardTransform::linear(3, random_mat(rng, 4, 6)));
    reg.save(dir.file("registry.bin"));
    TransformRegistry loaded = TransformRegistry::load(dir.file("registry.bin"));
    EXPECT_TRUE(loaded == reg);
    EXPECT_EQ(loaded.latest_version(), 3);
}

TEST(EmbeddingTableTest, ValidationAndLookup) {
    Mat v = Mat::Ones(2, 2);
    EXPECT_THROW(EmbeddingTable(0, {1, 1}, v, {}, Mat(2, 0)), ValidationError);
    EXPECT_THROW(EmbeddingTable(0, {2, 1}, v, {}, Mat(2, 0)), ValidationError);
    EXPECT_THROW(EmbeddingTable(0, {0}, v, {}, Mat(2, 0)), ShapeError);
    EXPECT_THROW(EmbeddingTable(0, {0, 1}, v, {}, Mat(3, 0)), ShapeError);
    Mat bad = v;
    bad(0, 0) = std::nan("");
    EXPECT_THROW(EmbeddingTable(0, {0, 1}, bad, {}, Mat(2, 0)), ValidationError);
    EmbeddingTable table(0, {2, 5}, v, {1}, Mat::Zero(2, 1));
    EXPECT_TRUE(table.has(NodeKind::user, 5));
    EXPECT_FALSE(table.has(NodeKind::user, 3));
    EXPECT_EQ(table.col(NodeKind::user, 5), 1);
    EXPECT_THROW(table.col(NodeKind::user, 3), LookupError);
    EXPECT_THROW(table.vector(NodeKind::item, 0), LookupError);
    EXPECT_EQ(table.vector(NodeKind::item, 1).size(), 2);
}

TEST(EmbeddingTableTest, PersistenceRoundTrip) {
    TempDir dir;
    Rng rng(53);
    EmbeddingTable table = random_table(rng, 3, 5, 7, 4);
    table.save(dir.file("table.bin"));
    EmbeddingTable loaded = EmbeddingTable::load(dir.file("table.bin"));
    EXPECT_TRUE(loaded == table);
}
