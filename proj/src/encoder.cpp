#include "embver/encoder.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>
#include <utility>

#include "embver/io.hpp"

namespace embver {

namespace {

constexpr char kCheckpointMagic[4] = {'E', 'V', 'C', 'K'};
constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::string weight_name(int layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(int layer) { return "layer" + std::to_string(layer) + ".bias"; }

}  // namespace

void EncoderConfig::validate() const {
    if (version < 0) throw ValidationError("encoder version must be non-negative");
    if (num_layers < 1 || num_layers > 4)
        throw ValidationError("num_layers must be in 1..4");
    if (hidden_dim <= 0) throw ValidationError("hidden_dim must be positive");
    if (input_feature_dim <= 0)
        throw ValidationError("input_feature_dim must be positive");
}

EncoderConfig schedule_config(const EncoderConfig& base, const GrowthSchedule& schedule,
                              int k) {
    base.validate();
    if (k < 0) throw RangeError("version must be non-negative");
    if (schedule.dim_step < 0) throw ValidationError("dim_step must be non-negative");
    EncoderConfig cfg = base;
    cfg.version = k;
    int growth_steps = schedule.growth_stop >= 0 ? std::min(k, schedule.growth_stop) : k;
    cfg.hidden_dim = base.hidden_dim +
                     static_cast<Eigen::Index>(schedule.dim_step) * growth_steps;
    if (schedule.add_layer_at >= 0 && k >= schedule.add_layer_at)
        cfg.num_layers = base.num_layers + 1;
    cfg.validate();
    return cfg;
}

EncoderParams::EncoderParams(EncoderConfig config, ParamSet params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    const Eigen::Index h = config_.hidden_dim;
    auto expect_shape = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (!params_.has(name)) throw ValidationError("missing parameter " + name);
        const Mat& m = params_.at(name);
        if (m.rows() != rows || m.cols() != cols)
            throw ShapeError("parameter " + name + " has shape " + std::to_string(m.rows()) +
                             "x" + std::to_string(m.cols()) + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    };
    expect_shape("feature_proj", h, config_.input_feature_dim);
    for (int l = 1; l <= config_.num_layers; ++l) {
        expect_shape(weight_name(l), h, 2 * h);
        expect_shape(bias_name(l), h, 1);
    }
    if (params_.size() != static_cast<std::size_t>(1 + 2 * config_.num_layers))
        throw ValidationError("unexpected extra parameters");
    if (!params_.all_finite()) throw ValidationError("parameters contain non-finite entries");
}

const Mat& EncoderParams::layer_weight(int layer) const {
    if (layer < 1 || layer > config_.num_layers)
        throw RangeError("layer " + std::to_string(layer) + " out of range");
    return params_.at(weight_name(layer));
}

const Mat& EncoderParams::layer_bias(int layer) const {
    if (layer < 1 || layer > config_.num_layers)
        throw RangeError("layer " + std::to_string(layer) + " out of range");
    return params_.at(bias_name(layer));
}

void EncoderParams::save(const std::filesystem::path& path) const {
    BinaryWriter w(path, kCheckpointMagic, kCheckpointFormatVersion);
    w.write_u32(static_cast<std::uint32_t>(config_.version));
    w.write_u32(static_cast<std::uint32_t>(config_.num_layers));
    w.write_u64(static_cast<std::uint64_t>(config_.hidden_dim));
    w.write_u64(static_cast<std::uint64_t>(config_.input_feature_dim));
    w.write_param_set(params_);
    w.finish();
}

EncoderParams EncoderParams::load(const std::filesystem::path& path) {
    BinaryReader r(path, kCheckpointMagic, kCheckpointFormatVersion);
    EncoderConfig cfg;
    cfg.version = static_cast<int>(r.read_u32());
    cfg.num_layers = static_cast<int>(r.read_u32());
    cfg.hidden_dim = static_cast<Eigen::Index>(r.read_u64());
    cfg.input_feature_dim = static_cast<Eigen::Index>(r.read_u64());
    return EncoderParams(cfg, r.read_param_set());
}

bool EncoderParams::operator==(const EncoderParams& other) const {
    return config_ == other.config_ && params_ == other.params_;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
        double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        Mat m(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
        return m;
    };
    ParamSet p;
    p.add("feature_proj", glorot(config.hidden_dim, config.input_feature_dim));
    for (int l = 1; l <= config.num_layers; ++l) {
        p.add(weight_name(l), glorot(config.hidden_dim, 2 * config.hidden_dim));
        p.add(bias_name(l), Mat::Zero(config.hidden_dim, 1));
    }
    return EncoderParams(config, std::move(p));
}

ForwardTrace encode_forward(const EncoderParams& params, const Snapshot& snapshot) {
    const EncoderConfig& cfg = params.config();
    const InteractionGraph& g = snapshot.graph();
    if (g.feature_dim() != static_cast<std::size_t>(cfg.input_feature_dim))
        throw ShapeError("graph feature dimension does not match encoder config");
    const Eigen::Index h = cfg.hidden_dim;
    const NodeId n_users = g.num_users();
    const NodeId n_items = g.num_items();
    const Mat& proj = params.feature_proj();

    ForwardTrace trace;
    Mat item0 = Mat::Zero(h, n_items);
    for (NodeId i = 0; i < n_items; ++i)
        for (std::uint32_t f : g.item_features(i)) item0.col(i) += proj.col(f);
    Mat user0 = Mat::Zero(h, n_users);
    for (NodeId u = 0; u < n_users; ++u) {
        auto nbrs = snapshot.items_of(u);
        if (nbrs.empty()) continue;
        Vec acc = Vec::Zero(h);
        for (NodeId i : nbrs) acc += item0.col(i);
        user0.col(u) = acc / static_cast<double>(nbrs.size());
    }
    trace.item_h.push_back(std::move(item0));
    trace.user_h.push_back(std::move(user0));

    Vec concat(2 * h);
    for (int l = 1; l <= cfg.num_layers; ++l) {
        const Mat& w = params.layer_weight(l);
        const Vec b = params.layer_bias(l).col(0);
        const bool last = l == cfg.num_layers;
        const Mat& prev_user = trace.user_h.back();
        const Mat& prev_item = trace.item_h.back();

        Mat user_agg = Mat::Zero(h, n_users);
        Mat user_pre(h, n_users);
        for (NodeId u = 0; u < n_users; ++u) {
            auto nbrs = snapshot.items_of(u);
            if (!nbrs.empty()) {
                Vec acc = Vec::Zero(h);
                for (NodeId i : nbrs) acc += prev_item.col(i);
                user_agg.col(u) = acc / static_cast<double>(nbrs.size());
            }
            concat.head(h) = prev_user.col(u);
            concat.tail(h) = user_agg.col(u);
            Vec pre = w * concat + b;
            user_pre.col(u) = pre;
        }
        Mat item_agg = Mat::Zero(h, n_items);
        Mat item_pre(h, n_items);
        for (NodeId i = 0; i < n_items; ++i) {
            auto nbrs = snapshot.users_of(i);
            if (!nbrs.empty()) {
                Vec acc = Vec::Zero(h);
                for (NodeId u : nbrs) acc += prev_user.col(u);
                item_agg.col(i) = acc / static_cast<double>(nbrs.size());
            }
            concat.head(h) = prev_item.col(i);
            concat.tail(h) = item_agg.col(i);
            Vec pre = w * concat + b;
            item_pre.col(i) = pre;
        }
        trace.user_h.push_back(last ? user_pre : user_pre.cwiseMax(0.0));
        trace.item_h.push_back(last ? item_pre : item_pre.cwiseMax(0.0));
        trace.user_agg.push_back(std::move(user_agg));
        trace.item_agg.push_back(std::move(item_agg));
        trace.user_pre.push_back(std::move(user_pre));
        trace.item_pre.push_back(std::move(item_pre));
    }
    return trace;
}

ParamSet encode_backward(const EncoderParams& params, const Snapshot& snapshot,
                         const ForwardTrace& trace, const Mat& user_grad,
                         const Mat& item_grad) {
    const EncoderConfig& cfg = params.config();
    const InteractionGraph& g = snapshot.graph();
    const Eigen::Index h = cfg.hidden_dim;
    const NodeId n_users = g.num_users();
    const NodeId n_items = g.num_items();
    if (user_grad.rows() != h || user_grad.cols() != n_users || item_grad.rows() != h ||
        item_grad.cols() != n_items)
        throw ShapeError("gradient matrices must cover all nodes at hidden_dim rows");
    if (trace.user_h.size() != static_cast<std::size_t>(cfg.num_layers) + 1)
        throw ShapeError("trace does not match encoder depth");

    ParamSet grads = params.params().zeros_like();
    Mat g_user = user_grad;
    Mat g_item = item_grad;
    Vec concat(2 * h);
    for (int l = cfg.num_layers; l >= 1; --l) {
        const Mat& w = params.layer_weight(l);
        Mat& gw = grads.at(weight_name(l));
        Mat& gb = grads.at(bias_name(l));
        const bool last = l == cfg.num_layers;
        const Mat& prev_user = trace.user_h[static_cast<std::size_t>(l) - 1];
        const Mat& prev_item = trace.item_h[static_cast<std::size_t>(l) - 1];
        const Mat& user_agg = trace.user_agg[static_cast<std::size_t>(l) - 1];
        const Mat& item_agg = trace.item_agg[static_cast<std::size_t>(l) - 1];
        const Mat& user_pre = trace.user_pre[static_cast<std::size_t>(l) - 1];
        const Mat& item_pre = trace.item_pre[static_cast<std::size_t>(l) - 1];
        Mat next_g_user = Mat::Zero(h, n_users);
        Mat next_g_item = Mat::Zero(h, n_items);

        for (NodeId u = 0; u < n_users; ++u) {
            if (g_user.col(u).isZero(0.0)) continue;
            Vec g_pre = last
                            ? Vec(g_user.col(u))
                            : Vec(g_user.col(u).cwiseProduct(
                                  (user_pre.col(u).array() > 0.0).cast<double>().matrix()));
            gb.col(0) += g_pre;
            concat.head(h) = prev_user.col(u);
            concat.tail(h) = user_agg.col(u);
            gw.noalias() += g_pre * concat.transpose();
            Vec g_concat = w.transpose() * g_pre;
            next_g_user.col(u) += g_concat.head(h);
            auto nbrs = snapshot.items_of(u);
            if (!nbrs.empty()) {
                Vec share = g_concat.tail(h) / static_cast<double>(nbrs.size());
                for (NodeId i : nbrs) next_g_item.col(i) += share;
            }
        }
        for (NodeId i = 0; i < n_items; ++i) {
            if (g_item.col(i).isZero(0.0)) continue;
            Vec g_pre = last
                            ? Vec(g_item.col(i))
                            : Vec(g_item.col(i).cwiseProduct(
                                  (item_pre.col(i).array() > 0.0).cast<double>().matrix()));
            gb.col(0) += g_pre;
            concat.head(h) = prev_item.col(i);
            concat.tail(h) = item_agg.col(i);
            gw.noalias() += g_pre * concat.transpose();
            Vec g_concat = w.transpose() * g_pre;
            next_g_item.col(i) += g_concat.head(h);
            auto nbrs = snapshot.users_of(i);
            if (!nbrs.empty()) {
                Vec share = g_concat.tail(h) / static_cast<double>(nbrs.size());
                for (NodeId u : nbrs) next_g_user.col(u) += share;
            }
        }
        g_user = std::move(next_g_user);
        g_item = std::move(next_g_item);
    }

    // User inputs are neighbor means of projected item features; fold their
    // gradient into the item h^0 gradient before hitting the projection.
    Mat g_item0 = g_item;
    for (NodeId u = 0; u < n_users; ++u) {
        if (g_user.col(u).isZero(0.0)) continue;
        auto nbrs = snapshot.items_of(u);
        if (nbrs.empty()) continue;
        Vec share = g_user.col(u) / static_cast<double>(nbrs.size());
        for (NodeId i : nbrs) g_item0.col(i) += share;
    }
    Mat& gproj = grads.at("feature_proj");
    for (NodeId i = 0; i < n_items; ++i) {
        if (g_item0.col(i).isZero(0.0)) continue;
        for (std::uint32_t f : g.item_features(i)) gproj.col(f) += g_item0.col(i);
    }
    return grads;
}

Vec encode(const EncoderParams& params, const Snapshot& snapshot, NodeKind kind, NodeId node) {
    const EncoderConfig& cfg = params.config();
    const InteractionGraph& g = snapshot.graph();
    if (g.feature_dim() != static_cast<std::size_t>(cfg.input_feature_dim))
        throw ShapeError("graph feature dimension does not match encoder config");
    if (kind == NodeKind::user && node >= g.num_users())
        throw LookupError("unknown user id " + std::to_string(node));
    if (kind == NodeKind::item && node >= g.num_items())
        throw LookupError("unknown item id " + std::to_string(node));
    const Eigen::Index h = cfg.hidden_dim;
    const int depth = cfg.num_layers;
    // memo[l][side] caches h^(l) per node; side 0 = user, 1 = item.
    std::vector<std::array<std::unordered_map<NodeId, Vec>, 2>> memo(
        static_cast<std::size_t>(depth) + 1);

    auto eval = [&](auto&& self, int l, NodeKind k, NodeId v) -> const Vec& {
        auto& slot = memo[static_cast<std::size_t>(l)][k == NodeKind::user ? 0 : 1];
        auto it = slot.find(v);
        if (it != slot.end()) return it->second;
        Vec out;
        if (l == 0) {
            if (k == NodeKind::item) {
                out = Vec::Zero(h);
                for (std::uint32_t f : g.item_features(v))
                    out += params.feature_proj().col(f);
            } else {
                out = Vec::Zero(h);
                auto nbrs = snapshot.items_of(v);
                if (!nbrs.empty()) {
                    Vec acc = Vec::Zero(h);
                    for (NodeId i : nbrs) acc += self(self, 0, NodeKind::item, i);
                    out = acc / static_cast<double>(nbrs.size());
                }
            }
        } else {
            const Vec own = self(self, l - 1, k, v);
            auto nbrs = k == NodeKind::user ? snapshot.items_of(v) : snapshot.users_of(v);
            NodeKind other = k == NodeKind::user ? NodeKind::item : NodeKind::user;
            Vec agg = Vec::Zero(h);
            if (!nbrs.empty()) {
                Vec acc = Vec::Zero(h);
                for (NodeId n : nbrs) acc += self(self, l - 1, other, n);
                agg = acc / static_cast<double>(nbrs.size());
            }
            Vec concat(2 * h);
            concat.head(h) = own;
            concat.tail(h) = agg;
            const Vec b = params.layer_bias(l).col(0);
            Vec pre = params.layer_weight(l) * concat + b;
            out = l < depth ? Vec(pre.cwiseMax(0.0)) : pre;
        }
        return slot.emplace(v, std::move(out)).first->second;
    };
    return eval(eval, depth, kind, node);
}

EmbeddingTable encode_table(const EncoderParams& params, const Snapshot& snapshot,
                            std::vector<NodeId> user_ids, std::vector<NodeId> item_ids) {
    const InteractionGraph& g = snapshot.graph();
    auto canonicalize = [](std::vector<NodeId>& ids) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    };
    canonicalize(user_ids);
    canonicalize(item_ids);
    for (NodeId u : user_ids)
        if (u >= g.num_users()) throw LookupError("unknown user id " + std::to_string(u));
    for (NodeId i : item_ids)
        if (i >= g.num_items()) throw LookupError("unknown item id " + std::to_string(i));
    ForwardTrace trace = encode_forward(params, snapshot);
    const Eigen::Index h = params.config().hidden_dim;
    Mat users(h, static_cast<Eigen::Index>(user_ids.size()));
    for (std::size_t c = 0; c < user_ids.size(); ++c)
        users.col(static_cast<Eigen::Index>(c)) = trace.user_embeddings().col(user_ids[c]);
    Mat items(h, static_cast<Eigen::Index>(item_ids.size()));
    for (std::size_t c = 0; c < item_ids.size(); ++c)
        items.col(static_cast<Eigen::Index>(c)) = trace.item_embeddings().col(item_ids[c]);
    // The table lives in the encoder's output space, so it carries the
    // encoder's version even when encoding a later snapshot.
    return EmbeddingTable(params.version(), std::move(user_ids), std::move(users),
                          std::move(item_ids), std::move(items));
}

EmbeddingTable encode_all(const EncoderParams& params, const Snapshot& snapshot) {
    return encode_table(params, snapshot, snapshot.users(), snapshot.items());
}

}  // namespace embver
