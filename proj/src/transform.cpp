#include "embver/transform.hpp"

#include <cmath>
#include <utility>

#include "embver/io.hpp"

namespace embver {

namespace {

constexpr char kRegistryMagic[4] = {'E', 'V', 'R', 'G'};
constexpr std::uint32_t kRegistryFormatVersion = 1;

}  // namespace

BackwardTransform::BackwardTransform(TransformKind kind, int version, Eigen::Index in_dim,
                                     Eigen::Index out_dim, Mat weight)
    : kind_(kind), version_(version), in_dim_(in_dim), out_dim_(out_dim),
      weight_(std::move(weight)) {}

BackwardTransform BackwardTransform::linear(int version, Mat weight) {
    if (version < 1) throw ValidationError("transform version must be >= 1");
    if (weight.rows() <= 0 || weight.cols() <= 0)
        throw ShapeError("linear transform needs a non-empty matrix");
    if (!weight.allFinite())
        throw ValidationError("linear transform weights must be finite");
    Eigen::Index in = weight.cols(), out = weight.rows();
    return BackwardTransform(TransformKind::linear, version, in, out, std::move(weight));
}

BackwardTransform BackwardTransform::no_trans(int version, Eigen::Index in_dim,
                                              Eigen::Index out_dim) {
    if (version < 1) throw ValidationError("transform version must be >= 1");
    if (in_dim <= 0 || out_dim <= 0)
        throw ShapeError("transform dimensions must be positive");
    if (out_dim > in_dim)
        throw ValidationError(
            "truncation transform requires out_dim <= in_dim (embedding sizes never shrink)");
    return BackwardTransform(TransformKind::no_trans, version, in_dim, out_dim, Mat());
}

const Mat& BackwardTransform::weight() const {
    if (kind_ != TransformKind::linear)
        throw StateError("truncation transform has no weight matrix");
    return weight_;
}

Mat BackwardTransform::as_matrix() const {
    if (kind_ == TransformKind::linear) return weight_;
    Mat m = Mat::Zero(out_dim_, in_dim_);
    m.leftCols(out_dim_) = Mat::Identity(out_dim_, out_dim_);
    return m;
}

Vec BackwardTransform::apply(const Vec& z) const {
    if (z.size() != in_dim_)
        throw ShapeError("transform expects length " + std::to_string(in_dim_) + ", got " +
                         std::to_string(z.size()));
    if (kind_ == TransformKind::linear) return weight_ * z;
    return z.head(out_dim_);
}

bool BackwardTransform::operator==(const BackwardTransform& other) const {
    if (kind_ != other.kind_ || version_ != other.version_ || in_dim_ != other.in_dim_ ||
        out_dim_ != other.out_dim_)
        return false;
    if (kind_ == TransformKind::no_trans) return true;
    return (weight_.array() == other.weight_.array()).all();
}

void TransformRegistry::register_transform(BackwardTransform transform) {
    int expected = latest_version() + 1;
    if (transform.version() != expected)
        throw ValidationError("expected transform version " + std::to_string(expected) +
                              ", got " + std::to_string(transform.version()));
    if (!transforms_.empty() && transform.out_dim() != transforms_.back().in_dim())
        throw ValidationError("transform output dimension " +
                              std::to_string(transform.out_dim()) +
                              " does not chain onto previous input dimension " +
                              std::to_string(transforms_.back().in_dim()));
    int k = transform.version();
    Mat step = transform.as_matrix();
    transforms_.push_back(std::move(transform));
    // Eagerly extend the composite cache: W^{k-1}_k = W_k, W^j_k = W^j_{k-1} W_k.
    composites_[{k - 1, k}] = step;
    for (int j = k - 2; j >= 0; --j) composites_[{j, k}] = composites_.at({j, k - 1}) * step;
}

const BackwardTransform& TransformRegistry::transform(int k) const {
    if (k < 1) throw RangeError("transform index must be >= 1");
    if (k > latest_version())
        throw StateError("transform " + std::to_string(k) + " not registered (latest is " +
                         std::to_string(latest_version()) + ")");
    return transforms_[static_cast<std::size_t>(k - 1)];
}

Eigen::Index TransformRegistry::dim(int j) const {
    if (transforms_.empty()) throw StateError("registry is empty, dimensions unknown");
    if (j < 0 || j > latest_version())
        throw RangeError("version " + std::to_string(j) + " out of range");
    if (j == latest_version()) return transforms_.back().in_dim();
    return transforms_[static_cast<std::size_t>(j)].out_dim();
}

const Mat& TransformRegistry::composite(int j, int k) const {
    if (j < 0 || j >= k) throw RangeError("composite requires 0 <= j < k");
    if (k > latest_version())
        throw StateError("missing transform link for version " + std::to_string(k));
    return composites_.at({j, k});
}

void TransformRegistry::save(const std::filesystem::path& path) const {
    BinaryWriter w(path, kRegistryMagic, kRegistryFormatVersion);
    w.write_u32(static_cast<std::uint32_t>(transforms_.size()));
    for (const BackwardTransform& t : transforms_) {
        w.write_u8(t.kind() == TransformKind::linear ? 0 : 1);
        w.write_u32(static_cast<std::uint32_t>(t.version()));
        w.write_u64(static_cast<std::uint64_t>(t.in_dim()));
        w.write_u64(static_cast<std::uint64_t>(t.out_dim()));
        if (t.kind() == TransformKind::linear) w.write_matrix(t.weight());
    }
    w.write_u32(static_cast<std::uint32_t>(composites_.size()));
    for (const auto& [key, mat] : composites_) {
        w.write_u32(static_cast<std::uint32_t>(key.first));
        w.write_u32(static_cast<std::uint32_t>(key.second));
        w.write_matrix(mat);
    }
    w.finish();
}

TransformRegistry TransformRegistry::load(const std::filesystem::path& path) {
    BinaryReader r(path, kRegistryMagic, kRegistryFormatVersion);
    TransformRegistry registry;
    std::uint32_t count = r.read_u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint8_t kind = r.read_u8();
        int version = static_cast<int>(r.read_u32());
        auto in_dim = static_cast<Eigen::Index>(r.read_u64());
        auto out_dim = static_cast<Eigen::Index>(r.read_u64());
        BackwardTransform t = kind == 0
                                  ? BackwardTransform::linear(version, r.read_matrix())
                                  : BackwardTransform::no_trans(version, in_dim, out_dim);
        if (t.in_dim() != in_dim || t.out_dim() != out_dim)
            throw ParseError("transform dimensions disagree with header in " + path.string());
        registry.transforms_.push_back(std::move(t));
    }
    // Rebuild chain validation by checking adjacency.
    for (std::size_t i = 0; i < registry.transforms_.size(); ++i) {
        if (registry.transforms_[i].version() != static_cast<int>(i) + 1)
            throw ParseError("non-contiguous transform chain in " + path.string());
        if (i > 0 &&
            registry.transforms_[i].out_dim() != registry.transforms_[i - 1].in_dim())
            throw ParseError("transform chain dimensions broken in " + path.string());
    }
    std::uint32_t cache_count = r.read_u32();
    for (std::uint32_t i = 0; i < cache_count; ++i) {
        int j = static_cast<int>(r.read_u32());
        int k = static_cast<int>(r.read_u32());
        registry.composites_[{j, k}] = r.read_matrix();
    }
    // Every pair must be present, as eager registration would have built it.
    for (int k = 1; k <= registry.latest_version(); ++k)
        for (int j = 0; j < k; ++j)
            if (!registry.composites_.count({j, k}))
                throw ParseError("composite cache incomplete in " + path.string());
    return registry;
}

bool TransformRegistry::operator==(const TransformRegistry& other) const {
    if (transforms_.size() != other.transforms_.size() ||
        composites_.size() != other.composites_.size())
        return false;
    for (std::size_t i = 0; i < transforms_.size(); ++i)
        if (!(transforms_[i] == other.transforms_[i])) return false;
    for (const auto& [key, mat] : composites_) {
        auto it = other.composites_.find(key);
        if (it == other.composites_.end()) return false;
        if (mat.rows() != it->second.rows() || mat.cols() != it->second.cols()) return false;
        if (!(mat.array() == it->second.array()).all()) return false;
    }
    return true;
}

EmbeddingTable to_version(const TransformRegistry& registry, const EmbeddingTable& table,
                          int target_version) {
    int k = table.version();
    if (target_version >= k)
        throw RangeError("target version " + std::to_string(target_version) +
                         " is not older than table version " + std::to_string(k));
    if (target_version < 0) throw RangeError("target version must be >= 0");
    const Mat& w = registry.composite(target_version, k);
    if (w.cols() != table.dim())
        throw ShapeError("table dimension does not match transform chain");
    return EmbeddingTable(target_version, table.ids(NodeKind::user),
                          w * table.vectors(NodeKind::user), table.ids(NodeKind::item),
                          w * table.vectors(NodeKind::item));
}

Vec single_step_error(const BackwardTransform& transform, const EmbeddingTable& table_k,
                      const EmbeddingTable& table_prev, NodeKind kind, NodeId node) {
    Vec current = table_k.vector(kind, node);
    Vec previous = table_prev.vector(kind, node);
    if (previous.size() != transform.out_dim())
        throw ShapeError("previous table dimension does not match transform output");
    return transform.apply(current) - previous;
}

ErrorDecomposition error_decomposition(const TransformRegistry& registry,
                                       const std::vector<Vec>& single_step_errors, int j,
                                       int k) {
    if (j < 0 || j >= k) throw RangeError("decomposition requires 0 <= j < k");
    if (k > registry.latest_version())
        throw StateError("missing transform link for version " + std::to_string(k));
    if (single_step_errors.size() != static_cast<std::size_t>(k - j))
        throw ValidationError("need exactly " + std::to_string(k - j) +
                              " single-step errors for versions " + std::to_string(j + 1) +
                              ".." + std::to_string(k));
    ErrorDecomposition out;
    out.total = Vec::Zero(registry.dim(j));
    for (int i = j + 1; i <= k; ++i) {
        const Vec& delta = single_step_errors[static_cast<std::size_t>(i - j - 1)];
        if (delta.size() != registry.dim(i - 1))
            throw ValidationError("single-step error for version " + std::to_string(i) +
                                  " has wrong dimension");
        Vec term = i - 1 == j ? delta : Vec(registry.composite(j, i - 1) * delta);
        out.total += term;
        out.terms.push_back(std::move(term));
    }
    return out;
}

std::vector<AlignmentErrorRecord> error_growth_trace(const TransformRegistry& registry,
                                                     const std::vector<EmbeddingTable>& tables,
                                                     const std::vector<NodeId>& users,
                                                     const std::vector<NodeId>& items) {
    int latest = registry.latest_version();
    if (tables.size() != static_cast<std::size_t>(latest) + 1)
        throw StateError("need one table per version 0.." + std::to_string(latest));
    for (int v = 0; v <= latest; ++v)
        if (tables[static_cast<std::size_t>(v)].version() != v)
            throw StateError("table at position " + std::to_string(v) +
                             " has mismatched version");
    std::vector<AlignmentErrorRecord> records;
    for (int k = 1; k <= latest; ++k) {
        const EmbeddingTable& table_k = tables[static_cast<std::size_t>(k)];
        for (int j = 0; j < k; ++j) {
            const EmbeddingTable& table_j = tables[static_cast<std::size_t>(j)];
            const Mat& w = registry.composite(j, k);
            AlignmentErrorRecord rec;
            rec.j = j;
            rec.k = k;
            double sum = 0.0;
            auto accumulate = [&](NodeKind kind, const std::vector<NodeId>& nodes) {
                for (NodeId node : nodes) {
                    Vec err = w * table_k.vector(kind, node) - table_j.vector(kind, node);
                    double norm = err.norm();
                    rec.node_norms.push_back(norm);
                    sum += norm;
                }
            };
            accumulate(NodeKind::user, users);
            accumulate(NodeKind::item, items);
            if (rec.node_norms.empty())
                throw ValidationError("error growth trace needs at least one node");
            rec.mean_l2 = sum / static_cast<double>(rec.node_norms.size());
            records.push_back(std::move(rec));
        }
    }
    return records;
}

}  // namespace embver
