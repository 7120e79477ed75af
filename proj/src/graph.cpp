#include "embver/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "embver/io.hpp"

namespace embver {

namespace {

constexpr char kGraphMagic[4] = {'E', 'V', 'G', 'R'};
constexpr std::uint32_t kGraphFormatVersion = 1;

std::string at_line(const std::filesystem::path& path, std::size_t line_no) {
    std::ostringstream ss;
    ss << path.string() << ":" << line_no;
    return ss.str();
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',' || c == '\t' || c == ' ' || c == '\r') {
            if (!cur.empty()) fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) fields.push_back(std::move(cur));
    return fields;
}

template <typename T>
T parse_int(const std::string& field, const std::filesystem::path& path, std::size_t line_no,
            const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw ParseError("bad " + std::string(what) + " '" + field + "' at " +
                         at_line(path, line_no));
    return value;
}

}  // namespace

InteractionGraph::InteractionGraph(NodeId num_users, NodeId num_items, std::size_t feature_dim,
                                   std::vector<std::vector<std::uint32_t>> item_features,
                                   std::vector<Interaction> interactions)
    : num_users_(num_users),
      num_items_(num_items),
      feature_dim_(feature_dim),
      item_features_(std::move(item_features)),
      interactions_(std::move(interactions)) {
    if (num_users_ == 0 || num_items_ == 0)
        throw ValidationError("graph needs at least one user and one item");
    if (item_features_.size() != num_items_)
        throw ValidationError("expected one feature list per item");
    for (NodeId i = 0; i < num_items_; ++i) {
        const auto& f = item_features_[i];
        for (std::size_t j = 0; j < f.size(); ++j) {
            if (f[j] >= feature_dim_)
                throw ValidationError("feature index out of range for item " + std::to_string(i));
            if (j > 0 && f[j] <= f[j - 1])
                throw ValidationError("feature indices must be sorted and unique for item " +
                                      std::to_string(i));
        }
    }
    for (std::size_t e = 0; e < interactions_.size(); ++e) {
        const Interaction& x = interactions_[e];
        if (x.user_id >= num_users_)
            throw ValidationError("user id out of range at interaction " + std::to_string(e));
        if (x.item_id >= num_items_)
            throw ValidationError("item id out of range at interaction " + std::to_string(e));
        if (!(x.time > 0.0 && x.time <= 1.0))
            throw ValidationError("time outside (0, 1] at interaction " + std::to_string(e));
        if (x.rating < 1 || x.rating > 5)
            throw ValidationError("rating outside 1..5 at interaction " + std::to_string(e));
        if (e > 0 && interactions_[e - 1].time > x.time)
            throw ValidationError("interactions must be sorted by time (violated at " +
                                  std::to_string(e) + ")");
    }
    // Duplicate (user, item, time) triples can only sit inside a run of
    // equal timestamps, so check runs locally.
    std::size_t run_start = 0;
    std::vector<std::pair<NodeId, NodeId>> run_pairs;
    for (std::size_t e = 1; e <= interactions_.size(); ++e) {
        if (e == interactions_.size() || interactions_[e].time != interactions_[run_start].time) {
            if (e - run_start > 1) {
                run_pairs.clear();
                for (std::size_t r = run_start; r < e; ++r)
                    run_pairs.emplace_back(interactions_[r].user_id, interactions_[r].item_id);
                std::sort(run_pairs.begin(), run_pairs.end());
                if (std::adjacent_find(run_pairs.begin(), run_pairs.end()) != run_pairs.end())
                    throw ValidationError("duplicate (user, item, time) interaction");
            }
            run_start = e;
        }
    }
}

const std::vector<std::uint32_t>& InteractionGraph::item_features(NodeId item) const {
    if (item >= num_items_)
        throw LookupError("unknown item id " + std::to_string(item));
    return item_features_[item];
}

std::size_t InteractionGraph::prefix_count(double t) const {
    auto it = std::upper_bound(interactions_.begin(), interactions_.end(), t,
                               [](double lhs, const Interaction& x) { return lhs < x.time; });
    return static_cast<std::size_t>(it - interactions_.begin());
}

void InteractionGraph::save(const std::filesystem::path& path) const {
    BinaryWriter w(path, kGraphMagic, kGraphFormatVersion);
    w.write_u32(num_users_);
    w.write_u32(num_items_);
    w.write_u64(feature_dim_);
    for (const auto& f : item_features_) {
        w.write_u32(static_cast<std::uint32_t>(f.size()));
        for (std::uint32_t idx : f) w.write_u32(idx);
    }
    w.write_u64(interactions_.size());
    for (const Interaction& x : interactions_) {
        w.write_u32(x.user_id);
        w.write_u32(x.item_id);
        w.write_f64(x.time);
        w.write_u8(static_cast<std::uint8_t>(x.rating));
    }
    w.finish();
}

InteractionGraph InteractionGraph::load(const std::filesystem::path& path) {
    BinaryReader r(path, kGraphMagic, kGraphFormatVersion);
    NodeId num_users = r.read_u32();
    NodeId num_items = r.read_u32();
    std::size_t feature_dim = r.read_u64();
    std::vector<std::vector<std::uint32_t>> features(num_items);
    for (NodeId i = 0; i < num_items; ++i) {
        std::uint32_t n = r.read_u32();
        features[i].resize(n);
        for (std::uint32_t j = 0; j < n; ++j) features[i][j] = r.read_u32();
    }
    std::size_t num_edges = r.read_u64();
    std::vector<Interaction> interactions(num_edges);
    for (std::size_t e = 0; e < num_edges; ++e) {
        interactions[e].user_id = r.read_u32();
        interactions[e].item_id = r.read_u32();
        interactions[e].time = r.read_f64();
        interactions[e].rating = r.read_u8();
    }
    return InteractionGraph(num_users, num_items, feature_dim, std::move(features),
                            std::move(interactions));
}

VersionSchedule::VersionSchedule(std::vector<double> timestamps)
    : timestamps_(std::move(timestamps)) {
    if (timestamps_.size() < 2)
        throw ValidationError("schedule needs at least two timestamps");
    for (std::size_t k = 0; k < timestamps_.size(); ++k) {
        if (!(timestamps_[k] > 0.0 && timestamps_[k] < 1.0))
            throw ValidationError("schedule timestamps must lie strictly inside (0, 1)");
        if (k > 0 && timestamps_[k] <= timestamps_[k - 1])
            throw ValidationError("schedule timestamps must be strictly increasing");
    }
}

double VersionSchedule::t(int k) const {
    if (k < 0 || k > last_version() + 1)
        throw RangeError("schedule index " + std::to_string(k) + " out of range");
    if (k == last_version() + 1) return 1.0;
    return timestamps_[static_cast<std::size_t>(k)];
}

Snapshot::Snapshot(const InteractionGraph& graph, int version, std::size_t edge_count)
    : graph_(&graph), version_(version), edge_count_(edge_count) {
    if (edge_count_ > graph.num_interactions())
        throw RangeError("snapshot edge count exceeds interaction count");
    const auto& xs = graph.interactions();
    user_offsets_.assign(graph.num_users() + 1, 0);
    item_offsets_.assign(graph.num_items() + 1, 0);
    for (std::size_t e = 0; e < edge_count_; ++e) {
        ++user_offsets_[xs[e].user_id + 1];
        ++item_offsets_[xs[e].item_id + 1];
    }
    std::partial_sum(user_offsets_.begin(), user_offsets_.end(), user_offsets_.begin());
    std::partial_sum(item_offsets_.begin(), item_offsets_.end(), item_offsets_.begin());
    user_neighbors_.resize(edge_count_);
    item_neighbors_.resize(edge_count_);
    std::vector<std::size_t> user_cursor(user_offsets_.begin(), user_offsets_.end() - 1);
    std::vector<std::size_t> item_cursor(item_offsets_.begin(), item_offsets_.end() - 1);
    for (std::size_t e = 0; e < edge_count_; ++e) {
        user_neighbors_[user_cursor[xs[e].user_id]++] = xs[e].item_id;
        item_neighbors_[item_cursor[xs[e].item_id]++] = xs[e].user_id;
    }
    for (NodeId u = 0; u < graph.num_users(); ++u)
        if (user_offsets_[u + 1] > user_offsets_[u]) users_.push_back(u);
    for (NodeId i = 0; i < graph.num_items(); ++i)
        if (item_offsets_[i + 1] > item_offsets_[i]) items_.push_back(i);
}

bool Snapshot::has_user(NodeId u) const {
    return u < graph_->num_users() && user_offsets_[u + 1] > user_offsets_[u];
}

bool Snapshot::has_item(NodeId i) const {
    return i < graph_->num_items() && item_offsets_[i + 1] > item_offsets_[i];
}

std::span<const NodeId> Snapshot::items_of(NodeId user) const {
    if (user >= graph_->num_users())
        throw LookupError("unknown user id " + std::to_string(user));
    return {user_neighbors_.data() + user_offsets_[user],
            user_offsets_[user + 1] - user_offsets_[user]};
}

std::span<const NodeId> Snapshot::users_of(NodeId item) const {
    if (item >= graph_->num_items())
        throw LookupError("unknown item id " + std::to_string(item));
    return {item_neighbors_.data() + item_offsets_[item],
            item_offsets_[item + 1] - item_offsets_[item]};
}

Snapshot snapshot_at(const InteractionGraph& graph, const VersionSchedule& schedule, int k) {
    if (k < 0 || k > schedule.last_version())
        throw RangeError("snapshot version " + std::to_string(k) + " out of range");
    return Snapshot(graph, k, graph.prefix_count(schedule.t(k)));
}

EdgeRange delta_edges(const InteractionGraph& graph, const VersionSchedule& schedule, int k) {
    if (k < 0 || k > schedule.last_version())
        throw RangeError("delta version " + std::to_string(k) + " out of range");
    return {graph.prefix_count(schedule.t(k)), graph.prefix_count(schedule.t(k + 1))};
}

InteractionGraph ingest(const std::filesystem::path& edges_path,
                        const std::filesystem::path& features_path, IngestStats* stats) {
    std::ifstream edges_in(edges_path);
    if (!edges_in) throw ValidationError("cannot open edge list: " + edges_path.string());

    struct RawEdge {
        NodeId user;
        NodeId item;
        long long raw_time;
        int rating;
    };
    std::unordered_map<std::string, NodeId> user_ids;
    std::unordered_map<std::string, NodeId> item_ids;
    std::vector<RawEdge> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(edges_in, line)) {
        ++line_no;
        auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 4)
            throw ParseError("expected 4 fields (user, item, time, rating) at " +
                             at_line(edges_path, line_no));
        auto raw_time = parse_int<long long>(fields[2], edges_path, line_no, "timestamp");
        int rating = parse_int<int>(fields[3], edges_path, line_no, "rating");
        if (rating < 1 || rating > 5)
            throw ValidationError("rating outside 1..5 at " + at_line(edges_path, line_no));
        NodeId user = static_cast<NodeId>(
            user_ids.emplace(fields[0], static_cast<NodeId>(user_ids.size())).first->second);
        NodeId item = static_cast<NodeId>(
            item_ids.emplace(fields[1], static_cast<NodeId>(item_ids.size())).first->second);
        raw.push_back({user, item, raw_time, rating});
    }
    if (raw.empty()) throw ValidationError("edge list is empty: " + edges_path.string());

    std::ifstream feat_in(features_path);
    if (!feat_in) throw ValidationError("cannot open feature file: " + features_path.string());
    struct RawFeatures {
        NodeId item;
        std::uint32_t brand;
        std::vector<std::uint32_t> subcategories;
    };
    std::unordered_map<std::string, std::uint32_t> brand_ids;
    std::unordered_map<std::string, std::uint32_t> subcat_ids;
    std::vector<RawFeatures> feature_rows;
    std::vector<bool> seen_item(item_ids.size(), false);
    line_no = 0;
    while (std::getline(feat_in, line)) {
        ++line_no;
        auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() < 2)
            throw ParseError("expected at least item and brand tokens at " +
                             at_line(features_path, line_no));
        auto item_it = item_ids.find(fields[0]);
        if (item_it == item_ids.end()) continue;  // item never interacted with
        if (seen_item[item_it->second])
            throw ValidationError("duplicate feature row for item '" + fields[0] + "' at " +
                                  at_line(features_path, line_no));
        seen_item[item_it->second] = true;
        RawFeatures row;
        row.item = item_it->second;
        row.brand =
            brand_ids.emplace(fields[1], static_cast<std::uint32_t>(brand_ids.size()))
                .first->second;
        for (std::size_t f = 2; f < fields.size(); ++f)
            row.subcategories.push_back(
                subcat_ids.emplace(fields[f], static_cast<std::uint32_t>(subcat_ids.size()))
                    .first->second);
        feature_rows.push_back(std::move(row));
    }

    std::uint32_t num_brands = static_cast<std::uint32_t>(brand_ids.size());
    std::size_t feature_dim = brand_ids.size() + subcat_ids.size();
    if (stats != nullptr) *stats = {brand_ids.size(), subcat_ids.size()};
    std::vector<std::vector<std::uint32_t>> features(item_ids.size());
    for (const RawFeatures& row : feature_rows) {
        std::vector<std::uint32_t>& f = features[row.item];
        f.push_back(row.brand);
        for (std::uint32_t s : row.subcategories) f.push_back(num_brands + s);
        std::sort(f.begin(), f.end());
        f.erase(std::unique(f.begin(), f.end()), f.end());
    }

    std::stable_sort(raw.begin(), raw.end(),
                     [](const RawEdge& a, const RawEdge& b) { return a.raw_time < b.raw_time; });
    std::vector<Interaction> interactions(raw.size());
    const double inv_n = 1.0 / static_cast<double>(raw.size());
    for (std::size_t e = 0; e < raw.size(); ++e)
        interactions[e] = {raw[e].user, raw[e].item,
                           static_cast<double>(e + 1) * inv_n, raw[e].rating};

    return InteractionGraph(static_cast<NodeId>(user_ids.size()),
                            static_cast<NodeId>(item_ids.size()), feature_dim,
                            std::move(features), std::move(interactions));
}

InteractionGraph generate_synthetic(const SyntheticConfig& config) {
    if (config.num_users == 0 || config.num_items == 0 || config.num_interactions == 0 ||
        config.feature_dim == 0 || config.latent_dim == 0)
        throw ValidationError("synthetic config counts must all be positive");
    if (config.latent_dim > config.feature_dim)
        throw ValidationError("latent_dim must not exceed feature_dim");

    Rng root(config.seed);
    Rng factor_rng = root.fork(1);
    Rng proto_rng = root.fork(2);
    Rng draw_rng = root.fork(3);

    const std::size_t d = config.latent_dim;
    auto draw_factors = [&](std::size_t rows) {
        std::vector<std::vector<double>> m(rows, std::vector<double>(d));
        for (auto& row : m)
            for (double& v : row) v = factor_rng.normal();
        return m;
    };
    // Interests drift: each user's factor rotates smoothly from a base
    // direction at the start of the window toward an independent late
    // direction, so the affinity stays low-rank at every instant while the
    // preferences a model fits early in the window grow stale later on.
    // Item factors stay fixed, keeping the item features informative.
    std::vector<std::vector<double>> user_factors = draw_factors(config.num_users);
    std::vector<std::vector<double>> item_factors = draw_factors(config.num_items);
    std::vector<std::vector<double>> user_factors_late = draw_factors(config.num_users);
    constexpr double kDriftAngle = 1.5707963267948966;  // quarter turn over the window

    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += a[j] * b[j];
        return s;
    };
    auto drifted = [&](const std::vector<double>& base, const std::vector<double>& late,
                       double cos_t, double sin_t) {
        std::vector<double> v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = cos_t * base[j] + sin_t * late[j];
        return v;
    };

    // Brand/subcategory prototypes in latent space; each item takes the
    // nearest prototype of each kind, tying features to its latent factors.
    const std::uint32_t num_brands =
        static_cast<std::uint32_t>(std::max<std::size_t>(1, config.feature_dim / 2));
    const std::uint32_t num_subcats = static_cast<std::uint32_t>(config.feature_dim - num_brands);
    auto draw_prototypes = [&](std::uint32_t count) {
        std::vector<std::vector<double>> m(count, std::vector<double>(d));
        for (auto& row : m)
            for (double& v : row) v = proto_rng.normal();
        return m;
    };
    std::vector<std::vector<double>> brand_protos = draw_prototypes(num_brands);
    std::vector<std::vector<double>> subcat_protos = draw_prototypes(num_subcats);
    auto nearest = [&](const std::vector<std::vector<double>>& protos,
                       const std::vector<double>& v) {
        std::uint32_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::uint32_t p = 0; p < protos.size(); ++p) {
            double s = dot(protos[p], v);
            if (s > best_score) {
                best_score = s;
                best = p;
            }
        }
        return best;
    };
    std::vector<std::vector<std::uint32_t>> features(config.num_items);
    for (NodeId i = 0; i < config.num_items; ++i) {
        features[i].push_back(nearest(brand_protos, item_factors[i]));
        if (num_subcats > 0)
            features[i].push_back(num_brands + nearest(subcat_protos, item_factors[i]));
    }

    // Per-draw categorical over items: softmax of the planted affinity at the
    // interaction's own timestamp. Raw affinities have std ~ sqrt(latent_dim);
    // the normalized copy with O(1) spread drives the rating model.
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<Interaction> interactions(config.num_interactions);
    const double inv_n = 1.0 / static_cast<double>(config.num_interactions);
    std::vector<double> raw(config.num_items);
    std::vector<double> probs(config.num_items);
    for (std::size_t n = 0; n < config.num_interactions; ++n) {
        const double tau = static_cast<double>(n + 1) * inv_n;
        const double cos_t = std::cos(kDriftAngle * tau);
        const double sin_t = std::sin(kDriftAngle * tau);

        // Mild popularity skew on the user side.
        double r = draw_rng.uniform();
        NodeId u = static_cast<NodeId>(std::min<double>(
            config.num_users - 1, std::floor(static_cast<double>(config.num_users) *
                                             std::pow(r, 1.5))));
        const std::vector<double> uf = drifted(user_factors[u], user_factors_late[u], cos_t, sin_t);
        double max_raw = -std::numeric_limits<double>::infinity();
        for (NodeId i = 0; i < config.num_items; ++i) {
            raw[i] = dot(uf, item_factors[i]);
            max_raw = std::max(max_raw, raw[i]);
        }
        double z = 0.0;
        for (NodeId i = 0; i < config.num_items; ++i) {
            probs[i] = std::exp(raw[i] - max_raw);
            z += probs[i];
        }
        double pick = draw_rng.uniform() * z;
        NodeId item = config.num_items - 1;
        double acc = 0.0;
        for (NodeId i = 0; i < config.num_items; ++i) {
            acc += probs[i];
            if (pick < acc) {
                item = i;
                break;
            }
        }
        double affinity = raw[item] * inv_sqrt_d;
        double noise = draw_rng.normal();
        long long rating = std::llround(3.0 + 1.1 * (affinity - 1.0) + 0.7 * noise);
        rating = std::clamp<long long>(rating, 1, 5);
        interactions[n] = {u, item, static_cast<double>(n + 1) * inv_n,
                           static_cast<int>(rating)};
    }

    return InteractionGraph(config.num_users, config.num_items, config.feature_dim,
                            std::move(features), std::move(interactions));
}

}  // namespace embver
