#include "embver/embedding_table.hpp"

#include <algorithm>
#include <utility>

#include "embver/io.hpp"

namespace embver {

namespace {

constexpr char kTableMagic[4] = {'E', 'V', 'T', 'B'};
constexpr std::uint32_t kTableFormatVersion = 1;

void check_side(const std::vector<NodeId>& ids, const Mat& vectors, const char* side) {
    if (static_cast<std::size_t>(vectors.cols()) != ids.size())
        throw ShapeError(std::string(side) + " vector count does not match id count");
    for (std::size_t i = 1; i < ids.size(); ++i)
        if (ids[i] <= ids[i - 1])
            throw ValidationError(std::string(side) + " ids must be sorted and unique");
    if (!vectors.allFinite())
        throw ValidationError(std::string(side) + " vectors contain non-finite entries");
}

}  // namespace

EmbeddingTable::EmbeddingTable(int version, std::vector<NodeId> user_ids, Mat user_vectors,
                               std::vector<NodeId> item_ids, Mat item_vectors)
    : version_(version),
      user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      user_vectors_(std::move(user_vectors)),
      item_vectors_(std::move(item_vectors)) {
    if (version_ < 0) throw ValidationError("table version must be non-negative");
    if (user_vectors_.rows() != item_vectors_.rows())
        throw ShapeError("user and item vectors must share one dimension");
    if (user_vectors_.rows() <= 0) throw ShapeError("embedding dimension must be positive");
    check_side(user_ids_, user_vectors_, "user");
    check_side(item_ids_, item_vectors_, "item");
}

const std::vector<NodeId>& EmbeddingTable::ids(NodeKind kind) const {
    return kind == NodeKind::user ? user_ids_ : item_ids_;
}

const Mat& EmbeddingTable::vectors(NodeKind kind) const {
    return kind == NodeKind::user ? user_vectors_ : item_vectors_;
}

Mat& EmbeddingTable::mutable_vectors(NodeKind kind) {
    return kind == NodeKind::user ? user_vectors_ : item_vectors_;
}

bool EmbeddingTable::has(NodeKind kind, NodeId id) const {
    const auto& v = ids(kind);
    return std::binary_search(v.begin(), v.end(), id);
}

Eigen::Index EmbeddingTable::col(NodeKind kind, NodeId id) const {
    const auto& v = ids(kind);
    auto it = std::lower_bound(v.begin(), v.end(), id);
    if (it == v.end() || *it != id)
        throw LookupError(std::string(kind == NodeKind::user ? "user" : "item") + " " +
                          std::to_string(id) + " not in version-" + std::to_string(version_) +
                          " table");
    return static_cast<Eigen::Index>(it - v.begin());
}

Vec EmbeddingTable::vector(NodeKind kind, NodeId id) const {
    return vectors(kind).col(col(kind, id));
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
    BinaryWriter w(path, kTableMagic, kTableFormatVersion);
    w.write_u32(static_cast<std::uint32_t>(version_));
    w.write_u64(user_ids_.size());
    for (NodeId id : user_ids_) w.write_u32(id);
    w.write_matrix(user_vectors_);
    w.write_u64(item_ids_.size());
    for (NodeId id : item_ids_) w.write_u32(id);
    w.write_matrix(item_vectors_);
    w.finish();
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
    BinaryReader r(path, kTableMagic, kTableFormatVersion);
    int version = static_cast<int>(r.read_u32());
    std::vector<NodeId> user_ids(r.read_u64());
    for (NodeId& id : user_ids) id = r.read_u32();
    Mat user_vectors = r.read_matrix();
    std::vector<NodeId> item_ids(r.read_u64());
    for (NodeId& id : item_ids) id = r.read_u32();
    Mat item_vectors = r.read_matrix();
    return EmbeddingTable(version, std::move(user_ids), std::move(user_vectors),
                          std::move(item_ids), std::move(item_vectors));
}

bool EmbeddingTable::operator==(const EmbeddingTable& other) const {
    return version_ == other.version_ && user_ids_ == other.user_ids_ &&
           item_ids_ == other.item_ids_ &&
           user_vectors_.rows() == other.user_vectors_.rows() &&
           user_vectors_.cols() == other.user_vectors_.cols() &&
           item_vectors_.cols() == other.item_vectors_.cols() &&
           (user_vectors_.array() == other.user_vectors_.array()).all() &&
           (item_vectors_.array() == other.item_vectors_.array()).all();
}

}  // namespace embver
