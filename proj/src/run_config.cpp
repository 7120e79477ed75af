#include "embver/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <utility>

#include "embver/metrics.hpp"
#include "embver/trainer.hpp"

namespace embver {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ValidationError(path + ": " + message);
}

std::string join_path(const std::string& scope, const std::string& field) {
    return scope.empty() ? field : scope + "." + field;
}

const json& require_object(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
    return j;
}

// Rejects unrecognized keys so typos surface as field errors instead of
// silently falling back to defaults.
void check_keys(const json& obj, const std::string& scope,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* key) {
                return item.key() == key;
            }) == allowed.end()) {
            fail(join_path(scope, item.key()), "unknown field");
        }
    }
}

template <typename T>
T get_int(const json& obj, const std::string& scope, const char* field, T fallback) {
    if (!obj.contains(field)) return fallback;
    const json& v = obj.at(field);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        fail(join_path(scope, field), "expected an integer");
    return v.get<T>();
}

double get_real(const json& obj, const std::string& scope, const char* field, double fallback) {
    if (!obj.contains(field)) return fallback;
    const json& v = obj.at(field);
    if (!v.is_number()) fail(join_path(scope, field), "expected a number");
    return v.get<double>();
}

std::string get_string(const json& obj, const std::string& scope, const char* field,
                       const std::string& fallback) {
    if (!obj.contains(field)) return fallback;
    const json& v = obj.at(field);
    if (!v.is_string()) fail(join_path(scope, field), "expected a string");
    return v.get<std::string>();
}

std::uint64_t get_seed(const json& obj, const std::string& scope, const char* field,
                       std::uint64_t fallback) {
    if (!obj.contains(field)) return fallback;
    const json& v = obj.at(field);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const std::int64_t raw = v.get<std::int64_t>();
        if (raw < 0) fail(join_path(scope, field), "seed must be non-negative");
        return static_cast<std::uint64_t>(raw);
    }
    fail(join_path(scope, field), "expected a non-negative integer");
}

DatasetSpec parse_dataset(const json& j, std::uint64_t global_seed) {
    const std::string scope = "dataset";
    require_object(j, scope);
    const std::string kind = get_string(j, scope, "kind", "");
    DatasetSpec spec;
    if (kind == "synthetic") {
        check_keys(j, scope,
                   {"kind", "seed", "num_users", "num_items", "num_interactions",
                    "feature_dim", "latent_dim"});
        spec.kind = DatasetKind::synthetic;
        spec.synthetic.seed = get_seed(j, scope, "seed", global_seed);
        spec.synthetic.num_users = get_int<NodeId>(j, scope, "num_users", 200);
        spec.synthetic.num_items = get_int<NodeId>(j, scope, "num_items", 100);
        spec.synthetic.num_interactions =
            get_int<std::size_t>(j, scope, "num_interactions", 5000);
        spec.synthetic.feature_dim = get_int<std::size_t>(j, scope, "feature_dim", 32);
        spec.synthetic.latent_dim = get_int<std::size_t>(j, scope, "latent_dim", 8);
    } else if (kind == "files") {
        check_keys(j, scope, {"kind", "edges", "features"});
        spec.kind = DatasetKind::files;
        spec.edges = get_string(j, scope, "edges", "");
        spec.features = get_string(j, scope, "features", "");
        if (spec.edges.empty()) fail("dataset.edges", "required for kind \"files\"");
        if (spec.features.empty()) fail("dataset.features", "required for kind \"files\"");
    } else if (kind == "graph") {
        check_keys(j, scope, {"kind", "path"});
        spec.kind = DatasetKind::graph_file;
        spec.graph_path = get_string(j, scope, "path", "");
        if (spec.graph_path.empty()) fail("dataset.path", "required for kind \"graph\"");
    } else {
        fail("dataset.kind", "expected \"synthetic\", \"files\", or \"graph\"");
    }
    return spec;
}

std::string dataset_kind_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::synthetic: return "synthetic";
        case DatasetKind::files: return "files";
        case DatasetKind::graph_file: return "graph";
    }
    throw StateError("unhandled dataset kind");
}

// Canonical position of a method name; unknown names sort last.
std::size_t method_rank(const std::string& name) {
    const auto& names = MethodSpec::all_names();
    const auto it = std::find(names.begin(), names.end(), name);
    return static_cast<std::size_t>(it - names.begin());
}

double json_to_metric(const json& v, const std::string& path) {
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!v.is_number()) fail(path, "expected a number or null");
    return v.get<double>();
}

json metric_to_json(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    require_object(j, "config");
    check_keys(j, "",
               {"seed", "output_dir", "dataset", "schedule", "encoder", "growth", "train",
                "methods", "consumer", "recall_cutoff"});

    RunConfig config;
    config.seed = get_seed(j, "", "seed", 0);
    config.output_dir = get_string(j, "", "output_dir", "");

    if (!j.contains("dataset")) fail("dataset", "required field");
    config.dataset = parse_dataset(j.at("dataset"), config.seed);

    if (!j.contains("schedule")) fail("schedule", "required field");
    const json& sched = j.at("schedule");
    if (!sched.is_array() || sched.empty()) fail("schedule", "expected a non-empty array");
    for (std::size_t i = 0; i < sched.size(); ++i) {
        if (!sched[i].is_number())
            fail("schedule[" + std::to_string(i) + "]", "expected a number");
        config.schedule.push_back(sched[i].get<double>());
    }

    config.encoder_base.version = 0;
    config.encoder_base.input_feature_dim = 0;  // always taken from the graph
    if (j.contains("encoder")) {
        const json& enc = require_object(j.at("encoder"), "encoder");
        check_keys(enc, "encoder", {"num_layers", "hidden_dim"});
        config.encoder_base.num_layers = get_int<int>(enc, "encoder", "num_layers", 2);
        config.encoder_base.hidden_dim =
            get_int<Eigen::Index>(enc, "encoder", "hidden_dim", 256);
    }

    if (j.contains("growth")) {
        const json& g = require_object(j.at("growth"), "growth");
        check_keys(g, "growth", {"dim_step", "add_layer_at", "growth_stop"});
        config.growth.dim_step = get_int<int>(g, "growth", "dim_step", 64);
        config.growth.add_layer_at = get_int<int>(g, "growth", "add_layer_at", 2);
        config.growth.growth_stop = get_int<int>(g, "growth", "growth_stop", -1);
    }

    config.train.seed = config.seed;
    if (j.contains("train")) {
        const json& t = require_object(j.at("train"), "train");
        check_keys(t, "train",
                   {"epochs", "learning_rate", "weight_decay", "lambda", "batch_size",
                    "negatives_per_positive"});
        config.train.epochs = get_int<int>(t, "train", "epochs", config.train.epochs);
        config.train.learning_rate =
            get_real(t, "train", "learning_rate", config.train.learning_rate);
        config.train.weight_decay =
            get_real(t, "train", "weight_decay", config.train.weight_decay);
        config.train.lambda = get_real(t, "train", "lambda", config.train.lambda);
        config.train.batch_size = get_int<int>(t, "train", "batch_size", config.train.batch_size);
        config.train.negatives_per_positive = get_int<int>(
            t, "train", "negatives_per_positive", config.train.negatives_per_positive);
    }

    if (j.contains("methods")) {
        const json& m = j.at("methods");
        if (!m.is_array() || m.empty()) fail("methods", "expected a non-empty array");
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!m[i].is_string())
                fail("methods[" + std::to_string(i) + "]", "expected a method name");
            config.methods.push_back(m[i].get<std::string>());
        }
    } else {
        config.methods = MethodSpec::all_names();
    }

    if (j.contains("consumer")) {
        const json& c = require_object(j.at("consumer"), "consumer");
        check_keys(c, "consumer",
                   {"hidden_dims", "dropout_rates", "seeds", "max_epochs", "patience",
                    "learning_rate", "weight_decay"});
        if (c.contains("hidden_dims")) {
            const json& dims = c.at("hidden_dims");
            if (!dims.is_array() || dims.empty())
                fail("consumer.hidden_dims", "expected a non-empty array");
            config.consumer_grid.hidden_dims.clear();
            for (std::size_t i = 0; i < dims.size(); ++i) {
                if (!dims[i].is_number_integer() && !dims[i].is_number_unsigned())
                    fail("consumer.hidden_dims[" + std::to_string(i) + "]",
                         "expected an integer");
                config.consumer_grid.hidden_dims.push_back(dims[i].get<int>());
            }
        }
        if (c.contains("dropout_rates")) {
            const json& rates = c.at("dropout_rates");
            if (!rates.is_array() || rates.empty())
                fail("consumer.dropout_rates", "expected a non-empty array");
            config.consumer_grid.dropout_rates.clear();
            for (std::size_t i = 0; i < rates.size(); ++i) {
                if (!rates[i].is_number())
                    fail("consumer.dropout_rates[" + std::to_string(i) + "]",
                         "expected a number");
                config.consumer_grid.dropout_rates.push_back(rates[i].get<double>());
            }
        }
        config.consumer_seeds = get_int<int>(c, "consumer", "seeds", config.consumer_seeds);
        config.consumer_train.max_epochs =
            get_int<int>(c, "consumer", "max_epochs", config.consumer_train.max_epochs);
        config.consumer_train.patience =
            get_int<int>(c, "consumer", "patience", config.consumer_train.patience);
        config.consumer_train.learning_rate =
            get_real(c, "consumer", "learning_rate", config.consumer_train.learning_rate);
        config.consumer_train.weight_decay =
            get_real(c, "consumer", "weight_decay", config.consumer_train.weight_decay);
    }

    config.recall_cutoff = get_int<int>(j, "", "recall_cutoff", 50);
    config.validate();
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config file " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

void RunConfig::validate() const {
    if (schedule.size() < 2) fail("schedule", "needs at least two timestamps");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const std::string path = "schedule[" + std::to_string(i) + "]";
        if (!(schedule[i] > 0.0 && schedule[i] < 1.0)) fail(path, "must lie strictly in (0,1)");
        if (i > 0 && !(schedule[i] > schedule[i - 1])) fail(path, "must be strictly increasing");
    }
    if (encoder_base.num_layers < 1 || encoder_base.num_layers > 3)
        fail("encoder.num_layers", "must lie in 1..3");
    if (encoder_base.hidden_dim < 1) fail("encoder.hidden_dim", "must be positive");
    if (growth.dim_step < 0) fail("growth.dim_step", "must be non-negative");
    try {
        train.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("train: ") + e.what());
    }
    if (methods.empty()) fail("methods", "expected a non-empty array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const std::string path = "methods[" + std::to_string(i) + "]";
        try {
            MethodSpec::parse(methods[i]);
        } catch (const ValidationError& e) {
            fail(path, e.what());
        }
        if (!seen.insert(methods[i]).second) fail(path, "duplicate method " + methods[i]);
    }
    if (consumer_grid.hidden_dims.empty()) fail("consumer.hidden_dims", "must be non-empty");
    if (consumer_grid.dropout_rates.empty()) fail("consumer.dropout_rates", "must be non-empty");
    for (int h : consumer_grid.hidden_dims)
        if (h < 1) fail("consumer.hidden_dims", "entries must be positive");
    for (double r : consumer_grid.dropout_rates)
        if (!(r >= 0.0 && r < 1.0)) fail("consumer.dropout_rates", "entries must lie in [0,1)");
    if (consumer_seeds < 1) fail("consumer.seeds", "must be positive");
    try {
        consumer_train.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("consumer: ") + e.what());
    }
    if (recall_cutoff < 1) fail("recall_cutoff", "must be positive");

    if (dataset.kind == DatasetKind::files) {
        if (!std::filesystem::exists(dataset.edges))
            fail("dataset.edges", "file not found: " + dataset.edges.string());
        if (!std::filesystem::exists(dataset.features))
            fail("dataset.features", "file not found: " + dataset.features.string());
    } else if (dataset.kind == DatasetKind::graph_file) {
        if (!std::filesystem::exists(dataset.graph_path))
            fail("dataset.path", "file not found: " + dataset.graph_path.string());
    } else {
        if (dataset.synthetic.num_users == 0) fail("dataset.num_users", "must be positive");
        if (dataset.synthetic.num_items == 0) fail("dataset.num_items", "must be positive");
        if (dataset.synthetic.num_interactions == 0)
            fail("dataset.num_interactions", "must be positive");
        if (dataset.synthetic.latent_dim == 0) fail("dataset.latent_dim", "must be positive");
        if (dataset.synthetic.latent_dim > dataset.synthetic.feature_dim)
            fail("dataset.latent_dim", "must not exceed feature_dim");
    }
}

BenchmarkConfig RunConfig::to_benchmark_config(std::size_t input_feature_dim) const {
    BenchmarkConfig bench;
    bench.encoder_base = encoder_base;
    bench.encoder_base.version = 0;
    bench.encoder_base.input_feature_dim = static_cast<Eigen::Index>(input_feature_dim);
    bench.growth = growth;
    bench.train = train;
    bench.train.seed = seed;
    bench.recall_cutoff = recall_cutoff;
    bench.consumer_grid = consumer_grid;
    bench.consumer_train = consumer_train;
    bench.consumer_seeds = consumer_seeds;
    bench.validate();
    return bench;
}

InteractionGraph RunConfig::load_graph() const {
    switch (dataset.kind) {
        case DatasetKind::synthetic: return generate_synthetic(dataset.synthetic);
        case DatasetKind::files: return ingest(dataset.edges, dataset.features);
        case DatasetKind::graph_file: return InteractionGraph::load(dataset.graph_path);
    }
    throw StateError("unhandled dataset kind");
}

VersionSchedule RunConfig::make_schedule() const { return VersionSchedule(schedule); }

nlohmann::json run_config_to_json(const RunConfig& config) {
    json j;
    j["seed"] = config.seed;
    if (!config.output_dir.empty()) j["output_dir"] = config.output_dir;
    json dataset;
    dataset["kind"] = dataset_kind_name(config.dataset.kind);
    switch (config.dataset.kind) {
        case DatasetKind::synthetic:
            dataset["seed"] = config.dataset.synthetic.seed;
            dataset["num_users"] = config.dataset.synthetic.num_users;
            dataset["num_items"] = config.dataset.synthetic.num_items;
            dataset["num_interactions"] = config.dataset.synthetic.num_interactions;
            dataset["feature_dim"] = config.dataset.synthetic.feature_dim;
            dataset["latent_dim"] = config.dataset.synthetic.latent_dim;
            break;
        case DatasetKind::files:
            dataset["edges"] = config.dataset.edges.string();
            dataset["features"] = config.dataset.features.string();
            break;
        case DatasetKind::graph_file:
            dataset["path"] = config.dataset.graph_path.string();
            break;
    }
    j["dataset"] = std::move(dataset);
    j["schedule"] = config.schedule;
    j["encoder"] = {{"num_layers", config.encoder_base.num_layers},
                    {"hidden_dim", config.encoder_base.hidden_dim}};
    j["growth"] = {{"dim_step", config.growth.dim_step},
                   {"add_layer_at", config.growth.add_layer_at},
                   {"growth_stop", config.growth.growth_stop}};
    j["train"] = {{"epochs", config.train.epochs},
                  {"learning_rate", config.train.learning_rate},
                  {"weight_decay", config.train.weight_decay},
                  {"lambda", config.train.lambda},
                  {"batch_size", config.train.batch_size},
                  {"negatives_per_positive", config.train.negatives_per_positive}};
    j["methods"] = config.methods;
    j["consumer"] = {{"hidden_dims", config.consumer_grid.hidden_dims},
                     {"dropout_rates", config.consumer_grid.dropout_rates},
                     {"seeds", config.consumer_seeds},
                     {"max_epochs", config.consumer_train.max_epochs},
                     {"patience", config.consumer_train.patience},
                     {"learning_rate", config.consumer_train.learning_rate},
                     {"weight_decay", config.consumer_train.weight_decay}};
    j["recall_cutoff"] = config.recall_cutoff;
    return j;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("override must look like path.to.field=value: " + assignment);
    const std::string dotted = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    std::vector<std::string> keys;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        if (dot == std::string::npos) {
            keys.push_back(dotted.substr(start));
            break;
        }
        keys.push_back(dotted.substr(start, dot - start));
        start = dot + 1;
    }
    for (const std::string& key : keys)
        if (key.empty()) throw ValidationError("override has an empty path segment: " + dotted);

    json* node = &j;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->is_object())
            throw ValidationError("override path " + dotted + " crosses a non-object");
        node = &(*node)[keys[i]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object())
        throw ValidationError("override path " + dotted + " crosses a non-object");
    json& leaf = (*node)[keys.back()];
    if (leaf.is_object() || leaf.is_array())
        throw ValidationError("override target " + dotted + " is not a scalar field");

    if (value == "true") {
        leaf = true;
    } else if (value == "false") {
        leaf = false;
    } else {
        bool numeric = !value.empty();
        bool integral = true;
        for (std::size_t i = 0; i < value.size() && numeric; ++i) {
            const char c = value[i];
            if (c == '+' || c == '-') {
                // A sign may open the number or follow a exponent marker.
                const bool after_exponent =
                    i > 0 && (value[i - 1] == 'e' || value[i - 1] == 'E');
                numeric = (i == 0 || after_exponent) && i + 1 < value.size();
            } else if (c == '.' || c == 'e' || c == 'E') {
                integral = false;
            } else if (!std::isdigit(static_cast<unsigned char>(c))) {
                numeric = false;
            }
        }
        if (numeric && integral) {
            leaf = std::stoll(value);
        } else if (numeric) {
            try {
                leaf = std::stod(value);
            } catch (const std::exception&) {
                leaf = value;
            }
        } else {
            leaf = value;
        }
    }
}

nlohmann::json report_to_json(const MetricsReport& report) {
    json j;
    j["method"] = report.method;
    json versions = json::array();
    for (const VersionMetrics& vm : report.per_version) {
        versions.push_back({{"version", vm.version},
                            {"recall", metric_to_json(vm.recall)},
                            {"alignment", metric_to_json(vm.alignment)}});
    }
    j["per_version"] = std::move(versions);
    json tasks = json::array();
    for (const TaskSeries& series : report.tasks) {
        json auc = json::array();
        for (double v : series.auc) auc.push_back(metric_to_json(v));
        tasks.push_back({{"task", TaskSpec{series.task}.name()}, {"auc", std::move(auc)}});
    }
    j["tasks"] = std::move(tasks);
    j["averages"] = {{"recall", metric_to_json(report.avg_recall)},
                     {"task_auc", metric_to_json(report.avg_task_auc)},
                     {"alignment", metric_to_json(report.avg_alignment)}};
    j["degradation"] = {{"intended", metric_to_json(report.intended_degradation)},
                        {"unintended", metric_to_json(report.unintended_degradation)},
                        {"combined", metric_to_json(report.combined_degradation)}};
    return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
    require_object(j, "report");
    MetricsReport report;
    report.method = get_string(j, "report", "method", "");
    if (report.method.empty()) fail("report.method", "required field");
    if (!j.contains("per_version") || !j.at("per_version").is_array())
        fail("report.per_version", "expected an array");
    for (const json& vj : j.at("per_version")) {
        require_object(vj, "report.per_version[]");
        VersionMetrics vm;
        vm.version = get_int<int>(vj, "report.per_version[]", "version", 0);
        vm.recall = json_to_metric(vj.at("recall"), "report.per_version[].recall");
        vm.alignment = json_to_metric(vj.at("alignment"), "report.per_version[].alignment");
        report.per_version.push_back(vm);
    }
    if (!j.contains("tasks") || !j.at("tasks").is_array()) fail("report.tasks", "expected an array");
    for (const json& tj : j.at("tasks")) {
        require_object(tj, "report.tasks[]");
        TaskSeries series;
        series.task = TaskSpec::parse(get_string(tj, "report.tasks[]", "task", "")).task;
        if (!tj.contains("auc") || !tj.at("auc").is_array())
            fail("report.tasks[].auc", "expected an array");
        for (const json& v : tj.at("auc"))
            series.auc.push_back(json_to_metric(v, "report.tasks[].auc[]"));
        report.tasks.push_back(std::move(series));
    }
    const json& avg = require_object(j.at("averages"), "report.averages");
    report.avg_recall = json_to_metric(avg.at("recall"), "report.averages.recall");
    report.avg_task_auc = json_to_metric(avg.at("task_auc"), "report.averages.task_auc");
    report.avg_alignment = json_to_metric(avg.at("alignment"), "report.averages.alignment");
    const json& deg = require_object(j.at("degradation"), "report.degradation");
    report.intended_degradation =
        json_to_metric(deg.at("intended"), "report.degradation.intended");
    report.unintended_degradation =
        json_to_metric(deg.at("unintended"), "report.degradation.unintended");
    report.combined_degradation =
        json_to_metric(deg.at("combined"), "report.degradation.combined");
    return report;
}

void recompute_degradations(MetricsReport& report, const MetricsReport& baseline) {
    if (baseline.method != MethodSpec{Method::keep_all}.name())
        throw StateError("degradations must be computed against the Keep-All baseline, got " +
                         baseline.method);
    report.intended_degradation = relative_degradation(report.avg_recall, baseline.avg_recall);
    report.unintended_degradation =
        relative_degradation(report.avg_task_auc, baseline.avg_task_auc);
    report.combined_degradation = report.intended_degradation + report.unintended_degradation;
}

std::vector<MetricsReport> order_reports(std::vector<MetricsReport> reports) {
    const std::string baseline = MethodSpec{Method::keep_all}.name();
    std::stable_sort(reports.begin(), reports.end(),
                     [&](const MetricsReport& a, const MetricsReport& b) {
                         const bool a_base = a.method == baseline;
                         const bool b_base = b.method == baseline;
                         if (a_base != b_base) return a_base;
                         if (a.combined_degradation != b.combined_degradation)
                             return a.combined_degradation > b.combined_degradation;
                         return method_rank(a.method) < method_rank(b.method);
                     });
    return reports;
}

std::string summary_table(const std::vector<MetricsReport>& reports) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-14s %12s %10s %12s %12s %12s %12s\n", "method",
                  "recall x100", "task auc", "intended %", "unintended %", "combined %",
                  "alignment");
    out += line;
    out += std::string(89, '-') + "\n";
    for (const MetricsReport& r : reports) {
        std::snprintf(line, sizeof(line), "%-14s %12.4f %10.4f %+12.2f %+12.2f %+12.2f %12.6f\n",
                      r.method.c_str(), 100.0 * r.avg_recall, r.avg_task_auc,
                      r.intended_degradation, r.unintended_degradation, r.combined_degradation,
                      r.avg_alignment);
        out += line;
    }
    return out;
}

}  // namespace embver
