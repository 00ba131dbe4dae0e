#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/embedding.hpp"
#include "gcnlab/error.hpp"
#include "gcnlab/io.hpp"
#include "gcnlab/model.hpp"
#include "gcnlab/sbm.hpp"
#include "gcnlab/train.hpp"
#include "gcnlab/tricks.hpp"

namespace gcnlab {

// ---------------------------------------------------------------------------
// Flat `key = value` file with [section] headers. Hand-rolled on purpose:
// no serialization dependency, trivially parseable from any language.
// ---------------------------------------------------------------------------

struct ConfigFile {
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> entries;

        const std::string* find(const std::string& key) const {
            for (const auto& [k, v] : entries)
                if (k == key) return &v;
            return nullptr;
        }
    };
    std::vector<Section> sections;

    const Section* find(const std::string& name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }

    static ConfigFile parse(const std::string& text) {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        auto trim = [](std::string s) {
            const char* ws = " \t\r";
            s.erase(0, s.find_first_not_of(ws));
            auto end = s.find_last_not_of(ws);
            s.erase(end == std::string::npos ? 0 : end + 1);
            return s;
        };
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3)
                    throw ValueError("config line " + std::to_string(lineno) +
                                     ": malformed section header '" + t + "'");
                std::string name = trim(t.substr(1, t.size() - 2));
                if (cfg.find(name))
                    throw ValueError("config line " + std::to_string(lineno) +
                                     ": duplicate section [" + name + "]");
                cfg.sections.push_back({name, {}});
                continue;
            }
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ValueError("config line " + std::to_string(lineno) +
                                 ": expected 'key = value', got '" + t + "'");
            if (cfg.sections.empty())
                throw ValueError("config line " + std::to_string(lineno) +
                                 ": entry before any [section] header");
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ValueError("config line " + std::to_string(lineno) + ": empty key");
            if (cfg.sections.back().find(key))
                throw ValueError("config line " + std::to_string(lineno) +
                                 ": duplicate key '" + key + "' in [" +
                                 cfg.sections.back().name + "]");
            cfg.sections.back().entries.emplace_back(std::move(key), std::move(value));
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    std::string serialize() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < sections.size(); ++i) {
            if (i) out << "\n";
            out << "[" << sections[i].name << "]\n";
            for (const auto& [k, v] : sections[i].entries)
                out << k << " = " << v << "\n";
        }
        return out.str();
    }
};

// --- value parsing ---------------------------------------------------------

namespace cfgval {

inline std::string ctx(const std::string& section, const std::string& key) {
    return "[" + section + "] " + key;
}

inline double to_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValueError(where + ": '" + s + "' is not a number");
    }
}

inline std::uint64_t to_u64(const std::string& s, const std::string& where) {
    // stoull silently wraps negative input, so reject a sign up front
    if (s.empty() || s[0] == '-' || s[0] == '+')
        throw ValueError(where + ": '" + s + "' is not a non-negative integer");
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValueError(where + ": '" + s + "' is not a non-negative integer");
    }
}

inline std::size_t to_size(const std::string& s, const std::string& where) {
    return static_cast<std::size_t>(to_u64(s, where));
}

inline bool to_bool(const std::string& s, const std::string& where) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ValueError(where + ": '" + s + "' is not true/false");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            parts.push_back(cur);
            cur.clear();
        } else if (ch != ' ' && ch != '\t') {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    while (!parts.empty() && parts.back().empty()) parts.pop_back();
    for (const auto& p : parts)
        if (p.empty()) throw ValueError("empty element in list '" + s + "'");
    return parts;
}

// "0..9" or "3,7,11"
inline std::vector<std::uint64_t> parse_seed_list(const std::string& s,
                                                  const std::string& where) {
    std::vector<std::uint64_t> seeds;
    auto range = s.find("..");
    if (range != std::string::npos) {
        std::uint64_t lo = to_u64(s.substr(0, range), where);
        std::uint64_t hi = to_u64(s.substr(range + 2), where);
        if (hi < lo) throw ValueError(where + ": descending seed range '" + s + "'");
        for (std::uint64_t v = lo; v <= hi; ++v) seeds.push_back(v);
        return seeds;
    }
    for (const auto& part : split_list(s)) seeds.push_back(to_u64(part, where));
    if (seeds.empty()) throw ValueError(where + ": empty seed list");
    return seeds;
}

// Rejects any entry key outside the allowlist.
inline void check_keys(const ConfigFile::Section& s,
                       std::initializer_list<const char*> allowed) {
    for (const auto& [k, v] : s.entries) {
        bool ok = false;
        for (const char* a : allowed)
            if (k == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw ValueError("unknown key '" + k + "' in section [" + s.name + "]");
    }
}

inline void require_file(const std::string& path, const std::string& where) {
    if (!std::filesystem::exists(path))
        throw ValueError(where + ": referenced file '" + path + "' does not exist");
}

} // namespace cfgval

// --- typed experiment description ------------------------------------------

enum class DatasetKind { sbm, gcnt, edge_list };
enum class ModelType { gcn_res, plain_gcn };

struct SbmSpec {
    std::vector<std::size_t> blocks{200, 200};
    double p_in = 0.1;
    double p_out = 0.01;
    std::size_t feature_dim = 16;
    double feature_signal = 0.5;
    std::uint64_t seed = 7;
};

struct EdgeListSpec {
    std::string edges;
    std::size_t num_nodes = 0;
    std::string labels;
    std::size_t num_classes = 0;
    std::string train, valid, test;
    std::string features;      // text matrix; empty = zero features
    std::size_t feature_dim = 0;
};

struct DatasetSpec {
    DatasetKind kind = DatasetKind::sbm;
    SbmSpec sbm;
    std::string path; // gcnt container
    EdgeListSpec edge_list;
};

struct ModelSpec {
    ModelType type = ModelType::gcn_res;
    std::size_t layers = 3;
    std::size_t hidden_dim = 64;
    double alpha = 0.2;
    double beta = 0.7;
    double dropout = 0.5;
    NormKind norm = NormKind::batch;
    bool pre_activated = false;
    Aggregation aggregation = Aggregation::softmax_layer;
    bool per_feature_aggregation = false;
    bool learnable_residual = false;
};

struct TricksSpec {
    std::string embedding_file;
    MergeMode merge = MergeMode::concat;
    int cs_version = 0; // 0 = off, 2 = v2, 3 = v3
    CorrectSmoothConfig cs;
    FlagConfig flag;
    LabelUsageConfig label_usage;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSpec dataset;
    ModelSpec model;
    TrainConfig training;
    TricksSpec tricks;
    WalkConfig walk;
    SkipGramConfig skipgram;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<std::string> ablate_rows;

    static ExperimentConfig from_config(const ConfigFile& cfg);
    static ExperimentConfig from_file(const std::string& path) {
        return from_config(ConfigFile::load(path));
    }
};

// --- section loaders -------------------------------------------------------

namespace detail {

inline void load_dataset_section(const ConfigFile::Section& s, DatasetSpec& out) {
    using namespace cfgval;
    check_keys(s, {"kind", "blocks", "p_in", "p_out", "feature_dim", "feature_signal",
                   "seed", "path", "edges", "num_nodes", "labels", "num_classes",
                   "train", "valid", "test", "features"});
    const std::string* kind = s.find("kind");
    if (!kind) throw ValueError("[dataset] requires a 'kind' key");
    auto str = [&](const char* key) -> std::string {
        const std::string* v = s.find(key);
        if (!v)
            throw ValueError("[dataset] kind=" + *kind + " requires key '" + key + "'");
        return *v;
    };
    if (*kind == "sbm") {
        out.kind = DatasetKind::sbm;
        if (const auto* v = s.find("blocks")) {
            out.sbm.blocks.clear();
            for (const auto& b : split_list(*v))
                out.sbm.blocks.push_back(to_size(b, ctx(s.name, "blocks")));
        }
        if (const auto* v = s.find("p_in")) out.sbm.p_in = to_double(*v, ctx(s.name, "p_in"));
        if (const auto* v = s.find("p_out")) out.sbm.p_out = to_double(*v, ctx(s.name, "p_out"));
        if (const auto* v = s.find("feature_dim"))
            out.sbm.feature_dim = to_size(*v, ctx(s.name, "feature_dim"));
        if (const auto* v = s.find("feature_signal"))
            out.sbm.feature_signal = to_double(*v, ctx(s.name, "feature_signal"));
        if (const auto* v = s.find("seed")) out.sbm.seed = to_u64(*v, ctx(s.name, "seed"));
    } else if (*kind == "gcnt") {
        out.kind = DatasetKind::gcnt;
        out.path = str("path");
        require_file(out.path, ctx(s.name, "path"));
    } else if (*kind == "edge_list") {
        out.kind = DatasetKind::edge_list;
        out.edge_list.edges = str("edges");
        out.edge_list.num_nodes = to_size(str("num_nodes"), ctx(s.name, "num_nodes"));
        out.edge_list.labels = str("labels");
        out.edge_list.num_classes = to_size(str("num_classes"), ctx(s.name, "num_classes"));
        out.edge_list.train = str("train");
        out.edge_list.valid = str("valid");
        out.edge_list.test = str("test");
        for (const std::string& p : {out.edge_list.edges, out.edge_list.labels,
                                     out.edge_list.train, out.edge_list.valid,
                                     out.edge_list.test})
            require_file(p, "[dataset]");
        if (const auto* v = s.find("features")) {
            out.edge_list.features = *v;
            require_file(*v, ctx(s.name, "features"));
        } else {
            out.edge_list.feature_dim =
                to_size(str("feature_dim"), ctx(s.name, "feature_dim"));
        }
    } else {
        throw ValueError("[dataset] kind must be sbm, gcnt or edge_list, got '" +
                         *kind + "'");
    }
}

inline void load_model_section(const ConfigFile::Section& s, ModelSpec& out) {
    using namespace cfgval;
    check_keys(s, {"type", "layers", "hidden_dim", "alpha", "beta", "dropout", "norm",
                   "pre_activated", "aggregation", "per_feature_aggregation",
                   "learnable_residual"});
    if (const auto* v = s.find("type")) {
        if (*v == "gcn_res") out.type = ModelType::gcn_res;
        else if (*v == "plain_gcn") out.type = ModelType::plain_gcn;
        else throw ValueError("[model] type must be gcn_res or plain_gcn, got '" + *v + "'");
    }
    if (const auto* v = s.find("layers")) out.layers = to_size(*v, ctx(s.name, "layers"));
    if (const auto* v = s.find("hidden_dim"))
        out.hidden_dim = to_size(*v, ctx(s.name, "hidden_dim"));
    if (const auto* v = s.find("alpha")) out.alpha = to_double(*v, ctx(s.name, "alpha"));
    if (const auto* v = s.find("beta")) out.beta = to_double(*v, ctx(s.name, "beta"));
    if (const auto* v = s.find("dropout")) out.dropout = to_double(*v, ctx(s.name, "dropout"));
    if (const auto* v = s.find("norm")) out.norm = norm_from_string(*v);
    if (const auto* v = s.find("pre_activated"))
        out.pre_activated = to_bool(*v, ctx(s.name, "pre_activated"));
    if (const auto* v = s.find("aggregation")) {
        if (*v == "softmax") out.aggregation = Aggregation::softmax_layer;
        else if (*v == "last_layer") out.aggregation = Aggregation::last_layer;
        else throw ValueError("[model] aggregation must be softmax or last_layer");
    }
    if (const auto* v = s.find("per_feature_aggregation"))
        out.per_feature_aggregation = to_bool(*v, ctx(s.name, "per_feature_aggregation"));
    if (const auto* v = s.find("learnable_residual"))
        out.learnable_residual = to_bool(*v, ctx(s.name, "learnable_residual"));
}

inline void load_training_section(const ConfigFile::Section& s, TrainConfig& out) {
    using namespace cfgval;
    check_keys(s, {"epochs", "lr", "weight_decay", "sampler", "batch_nodes",
                   "batch_size", "fanouts", "walk_length", "patience", "metric"});
    if (const auto* v = s.find("epochs")) out.epochs = to_size(*v, ctx(s.name, "epochs"));
    if (const auto* v = s.find("lr")) out.lr = to_double(*v, ctx(s.name, "lr"));
    if (const auto* v = s.find("weight_decay"))
        out.weight_decay = to_double(*v, ctx(s.name, "weight_decay"));
    if (const auto* v = s.find("sampler")) out.sampler.kind = sampler_from_string(*v);
    if (const auto* v = s.find("batch_nodes"))
        out.sampler.batch_nodes = to_size(*v, ctx(s.name, "batch_nodes"));
    if (const auto* v = s.find("batch_size"))
        out.sampler.batch_size = to_size(*v, ctx(s.name, "batch_size"));
    if (const auto* v = s.find("fanouts")) {
        out.sampler.fanouts.clear();
        for (const auto& f : split_list(*v))
            out.sampler.fanouts.push_back(to_size(f, ctx(s.name, "fanouts")));
    }
    if (const auto* v = s.find("walk_length"))
        out.sampler.walk_length = to_size(*v, ctx(s.name, "walk_length"));
    if (const auto* v = s.find("patience"))
        out.early_stop_patience = to_size(*v, ctx(s.name, "patience"));
    if (const auto* v = s.find("metric")) out.metric = metric_from_string(*v);
}

inline void load_tricks_section(const ConfigFile::Section& s, TricksSpec& out) {
    using namespace cfgval;
    check_keys(s, {"embedding_file", "merge", "cs", "cs_alpha1", "cs_iters1", "cs_scale",
                   "cs_alpha2", "cs_iters2", "flag", "flag_steps", "flag_step_size",
                   "flag_raw_columns", "label_usage", "label_recycle"});
    if (const auto* v = s.find("embedding_file")) {
        out.embedding_file = *v;
        require_file(*v, ctx(s.name, "embedding_file"));
    }
    if (const auto* v = s.find("merge")) out.merge = merge_from_string(*v);
    if (const auto* v = s.find("cs")) {
        if (*v == "off") out.cs_version = 0;
        else if (*v == "v2") out.cs_version = 2;
        else if (*v == "v3") out.cs_version = 3;
        else throw ValueError("[tricks] cs must be off, v2 or v3, got '" + *v + "'");
        out.cs.label_set = out.cs_version == 3 ? CsLabelSet::v3 : CsLabelSet::v2;
    }
    if (const auto* v = s.find("cs_alpha1")) out.cs.alpha1 = to_double(*v, ctx(s.name, "cs_alpha1"));
    if (const auto* v = s.find("cs_iters1")) out.cs.iters1 = to_size(*v, ctx(s.name, "cs_iters1"));
    if (const auto* v = s.find("cs_scale")) {
        if (*v == "autoscale") {
            out.cs.scale = CsScale::autoscale;
        } else {
            out.cs.scale = CsScale::fixed;
            out.cs.fixed_scale = to_double(*v, ctx(s.name, "cs_scale"));
        }
    }
    if (const auto* v = s.find("cs_alpha2")) out.cs.alpha2 = to_double(*v, ctx(s.name, "cs_alpha2"));
    if (const auto* v = s.find("cs_iters2")) out.cs.iters2 = to_size(*v, ctx(s.name, "cs_iters2"));
    if (const auto* v = s.find("flag")) out.flag.enabled = to_bool(*v, ctx(s.name, "flag"));
    if (const auto* v = s.find("flag_steps")) out.flag.steps = to_size(*v, ctx(s.name, "flag_steps"));
    if (const auto* v = s.find("flag_step_size"))
        out.flag.step_size = to_double(*v, ctx(s.name, "flag_step_size"));
    if (const auto* v = s.find("flag_raw_columns"))
        out.flag.raw_columns = to_size(*v, ctx(s.name, "flag_raw_columns"));
    if (const auto* v = s.find("label_usage"))
        out.label_usage.enabled = to_bool(*v, ctx(s.name, "label_usage"));
    if (const auto* v = s.find("label_recycle"))
        out.label_usage.recycle_rounds = to_size(*v, ctx(s.name, "label_recycle"));
}

inline void load_embedding_section(const ConfigFile::Section& s, WalkConfig& walk,
                                   SkipGramConfig& sg) {
    using namespace cfgval;
    check_keys(s, {"p", "q", "walk_length", "walks_per_node", "dim", "window",
                   "negatives", "epochs", "lr", "seed"});
    if (const auto* v = s.find("p")) walk.p = to_double(*v, ctx(s.name, "p"));
    if (const auto* v = s.find("q")) walk.q = to_double(*v, ctx(s.name, "q"));
    if (const auto* v = s.find("walk_length"))
        walk.walk_length = to_size(*v, ctx(s.name, "walk_length"));
    if (const auto* v = s.find("walks_per_node"))
        walk.walks_per_node = to_size(*v, ctx(s.name, "walks_per_node"));
    if (const auto* v = s.find("seed")) walk.seed = to_u64(*v, ctx(s.name, "seed"));
    if (const auto* v = s.find("dim")) sg.dim = to_size(*v, ctx(s.name, "dim"));
    if (const auto* v = s.find("window")) sg.window = to_size(*v, ctx(s.name, "window"));
    if (const auto* v = s.find("negatives"))
        sg.negatives = to_size(*v, ctx(s.name, "negatives"));
    if (const auto* v = s.find("epochs")) sg.epochs = to_size(*v, ctx(s.name, "epochs"));
    if (const auto* v = s.find("lr")) sg.lr = to_double(*v, ctx(s.name, "lr"));
}

inline void load_experiment_section(const ConfigFile::Section& s, ExperimentConfig& out) {
    using namespace cfgval;
    check_keys(s, {"name", "seeds"});
    if (const auto* v = s.find("name")) out.name = *v;
    if (const auto* v = s.find("seeds"))
        out.seeds = parse_seed_list(*v, ctx(s.name, "seeds"));
}

inline void load_ablate_section(const ConfigFile::Section& s, ExperimentConfig& out) {
    using namespace cfgval;
    check_keys(s, {"rows"});
    if (const auto* v = s.find("rows")) out.ablate_rows = split_list(*v);
}

} // namespace detail

inline ExperimentConfig ExperimentConfig::from_config(const ConfigFile& cfg) {
    ExperimentConfig out;
    for (const auto& section : cfg.sections) {
        if (section.name == "dataset") detail::load_dataset_section(section, out.dataset);
        else if (section.name == "model") detail::load_model_section(section, out.model);
        else if (section.name == "training") detail::load_training_section(section, out.training);
        else if (section.name == "tricks") detail::load_tricks_section(section, out.tricks);
        else if (section.name == "embedding")
            detail::load_embedding_section(section, out.walk, out.skipgram);
        else if (section.name == "experiment") detail::load_experiment_section(section, out);
        else if (section.name == "ablate") detail::load_ablate_section(section, out);
        else throw ValueError("unknown config section [" + section.name + "]");
    }
    out.training.flag = out.tricks.flag;
    out.training.label_usage = out.tricks.label_usage;
    return out;
}

// Whitespace-separated text matrix, one row per line.
inline Tensor load_text_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature file " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof())
            throw IoError("feature file " + path + " line " + std::to_string(lineno) +
                          ": malformed number");
        if (!rows.empty() && row.size() != rows[0].size())
            throw IoError("feature file " + path + " line " + std::to_string(lineno) +
                          ": inconsistent column count");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("feature file " + path + " is empty");
    Tensor t(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < t.rows; ++i)
        for (std::size_t j = 0; j < t.cols; ++j) t(i, j) = rows[i][j];
    return t;
}

inline Dataset build_dataset(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetKind::sbm:
            return generate_sbm(spec.sbm.blocks, spec.sbm.p_in, spec.sbm.p_out,
                                spec.sbm.feature_dim, spec.sbm.feature_signal,
                                spec.sbm.seed);
        case DatasetKind::gcnt:
            return io::load_dataset(spec.path);
        case DatasetKind::edge_list: {
            const EdgeListSpec& e = spec.edge_list;
            Dataset d;
            d.graph = load_edge_list(e.edges, e.num_nodes);
            d.num_classes = e.num_classes;
            d.labels.reserve(e.num_nodes);
            {
                std::ifstream in(e.labels);
                if (!in) throw IoError("cannot open label file " + e.labels);
                std::string line;
                std::size_t lineno = 0;
                while (std::getline(in, line)) {
                    ++lineno;
                    if (line.empty()) continue;
                    try {
                        d.labels.push_back(std::stoll(line));
                    } catch (const std::exception&) {
                        throw IoError("label file " + e.labels + " line " +
                                      std::to_string(lineno) + ": malformed label");
                    }
                }
            }
            if (d.labels.size() != e.num_nodes)
                throw ValueError("label file " + e.labels + " holds " +
                                 std::to_string(d.labels.size()) + " labels for " +
                                 std::to_string(e.num_nodes) + " nodes");
            d.features = e.features.empty() ? Tensor(e.num_nodes, e.feature_dim)
                                            : load_text_matrix(e.features);
            load_splits_from_files(d, e.train, e.valid, e.test);
            d.validate();
            return d;
        }
    }
    throw ValueError("unreachable dataset kind");
}

} // namespace gcnlab
