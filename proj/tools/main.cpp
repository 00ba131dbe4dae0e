// Experiment front end: dataset generation, embedding pre-training,
// training with trick combinations, C&S post-processing and ablation grids.
//
// Exit codes: 0 success, 1 usage/config error, 2 output conflict (rerun
// with --force), 3 numerical failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gcnlab/config.hpp"
#include "gcnlab/dataset.hpp"
#include "gcnlab/embedding.hpp"
#include "gcnlab/graph.hpp"
#include "gcnlab/io.hpp"
#include "gcnlab/metrics.hpp"
#include "gcnlab/model.hpp"
#include "gcnlab/train.hpp"
#include "gcnlab/tricks.hpp"

namespace fs = std::filesystem;
using namespace gcnlab;

namespace {

struct ConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::string seeds;
    bool force = false;
    bool probe = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_seeds = false,
                bool with_probe = false) {
    cmd->add_option("--config", o.config_path, "experiment config file")
        ->required();
    cmd->add_option("--out", o.out_dir, "output directory (default: out)");
    cmd->add_flag("--force", o.force, "overwrite existing outputs");
    if (with_seeds)
        cmd->add_option("--seeds", o.seeds, "seed list, e.g. 0..9 or 1,2,5");
    if (with_probe)
        cmd->add_flag("--probe", o.probe, "report linear-probe accuracy");
}

fs::path prepare_output(const CommonOpts& o, std::initializer_list<const char*> files) {
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    if (!o.force)
        for (const char* f : files)
            if (fs::exists(dir / f))
                throw ConflictError("output file " + (dir / f).string() +
                                    " exists (use --force to overwrite)");
    return dir;
}

std::vector<std::uint64_t> effective_seeds(const ExperimentConfig& cfg,
                                           const CommonOpts& o) {
    if (o.seeds.empty()) return cfg.seeds;
    return cfgval::parse_seed_list(o.seeds, "--seeds");
}

Tensor probabilities_from_logp(const Tensor& logp) {
    Tensor p = logp;
    for (auto& v : p.data) v = std::exp(v);
    return p;
}

std::string tricks_label(const TricksSpec& t) {
    std::vector<std::string> parts;
    if (!t.embedding_file.empty()) parts.push_back("embedding");
    if (t.cs_version == 2) parts.push_back("cs_v2");
    if (t.cs_version == 3) parts.push_back("cs_v3");
    if (t.flag.enabled) parts.push_back("flag");
    if (t.label_usage.enabled) parts.push_back("label_usage");
    if (parts.empty()) return "none";
    std::string s = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) s += "+" + parts[i];
    return s;
}

// ---------------------------------------------------------------------------
// Shared training driver: applies the embedding/label-usage tricks, runs the
// seed protocol, and (optionally) replaces the reported metrics with
// C&S-corrected ones. `on_first` receives the first seed's trained model.
// ---------------------------------------------------------------------------

struct RowSummary {
    SeedSummary runs;     // raw model metrics
    double test_mean = 0.0, test_std = 0.0;   // after post-processing, if any
    double valid_mean = 0.0, valid_std = 0.0;
};

template <class SaveFirst>
RowSummary run_experiment_row(Dataset d, const ModelSpec& ms, TrainConfig tcfg,
                              const TricksSpec& tricks,
                              const std::vector<std::uint64_t>& seeds,
                              SaveFirst&& on_first) {
    if (!tricks.embedding_file.empty()) {
        io::MatrixFile emb = io::load_embedding(tricks.embedding_file);
        d.features = embedding_merge(d.features, emb.matrix, tricks.merge);
        std::cout << "merged embeddings from " << tricks.embedding_file
                  << ": input width now " << d.features.cols << "\n";
    }
    tcfg.flag = tricks.flag;
    tcfg.label_usage = tricks.label_usage;
    std::size_t input_dim = d.features.cols;
    if (tcfg.label_usage.enabled) input_dim += d.num_classes;

    NormalizedAdjacency full_adj = symmetric_normalize(d.graph);
    std::vector<double> cs_tests, cs_valids;
    auto per_run = [&](std::size_t i, auto& model, const RunResult& r) {
        if (tricks.cs_version != 0) {
            Tensor probs = probabilities_from_logp(
                predict_full(model, d, full_adj, tcfg.label_usage));
            Tensor corrected = correct_and_smooth(probs, d, full_adj, tricks.cs);
            cs_valids.push_back(
                evaluate_metric(tcfg.metric, corrected, d.labels, d.valid_idx));
            cs_tests.push_back(
                evaluate_metric(tcfg.metric, corrected, d.labels, d.test_idx));
        }
        if (i == 0) on_first(model, r, d, full_adj);
    };

    RowSummary row;
    if (ms.type == ModelType::gcn_res) {
        GcnResConfig mc;
        mc.layers = ms.layers;
        mc.input_dim = input_dim;
        mc.hidden_dim = ms.hidden_dim;
        mc.num_classes = d.num_classes;
        mc.alpha = ms.alpha;
        mc.beta = ms.beta;
        mc.dropout_rate = ms.dropout;
        mc.norm = ms.norm;
        mc.pre_activated = ms.pre_activated;
        mc.aggregation = ms.aggregation;
        mc.per_feature_aggregation = ms.per_feature_aggregation;
        mc.learnable_residual = ms.learnable_residual;
        row.runs = run_seeds(
            [&](std::uint64_t seed) {
                GcnResModel m(mc);
                Rng rng = Rng::derive(seed, stream::init);
                m.init(rng);
                return m;
            },
            d, tcfg, seeds, per_run);
    } else {
        PlainGcnConfig mc;
        mc.layers = ms.layers;
        mc.input_dim = input_dim;
        mc.hidden_dim = ms.hidden_dim;
        mc.num_classes = d.num_classes;
        mc.dropout_rate = ms.dropout;
        mc.norm = ms.norm;
        row.runs = run_seeds(
            [&](std::uint64_t seed) {
                PlainGcnModel m(mc);
                Rng rng = Rng::derive(seed, stream::init);
                m.init(rng);
                return m;
            },
            d, tcfg, seeds, per_run);
    }

    if (tricks.cs_version != 0) {
        std::tie(row.test_mean, row.test_std) = mean_unbiased_std(cs_tests);
        std::tie(row.valid_mean, row.valid_std) = mean_unbiased_std(cs_valids);
    } else {
        row.test_mean = row.runs.test_mean;
        row.test_std = row.runs.test_std;
        row.valid_mean = row.runs.valid_mean;
        row.valid_std = row.runs.valid_std;
    }
    return row;
}

// --- commands --------------------------------------------------------------

int cmd_gen_data(const CommonOpts& o) {
    ExperimentConfig cfg = ExperimentConfig::from_file(o.config_path);
    fs::path dir = prepare_output(o, {"dataset.gcnt", "dataset_summary.txt"});
    Dataset d = build_dataset(cfg.dataset);
    io::save_dataset(d, (dir / "dataset.gcnt").string());
    std::ofstream summary(dir / "dataset_summary.txt");
    summary << "Nodes Edges Classes Metric\n"
            << d.graph.num_nodes << " " << d.graph.num_edges() / 2 << " "
            << d.num_classes << " " << to_string(cfg.training.metric) << "\n";
    std::cout << "wrote " << (dir / "dataset.gcnt").string() << " ("
              << d.graph.num_nodes << " nodes, " << d.graph.num_edges() / 2
              << " edges, " << d.num_classes << " classes)\n";
    return 0;
}

int cmd_pretrain(const CommonOpts& o) {
    ExperimentConfig cfg = ExperimentConfig::from_file(o.config_path);
    fs::path dir = prepare_output(o, {"embeddings.gcne"});
    Dataset d = build_dataset(cfg.dataset);
    io::MatrixFile emb = pretrain_embeddings(d, cfg.walk, cfg.skipgram);
    io::save_embedding(emb, (dir / "embeddings.gcne").string());
    std::cout << "wrote " << (dir / "embeddings.gcne").string() << "\n"
              << emb.provenance << "\n";
    if (o.probe) {
        double acc = linear_probe(emb.matrix, d);
        char buf[64];
        std::snprintf(buf, sizeof buf, "probe accuracy: %.4f\n", acc);
        std::cout << buf;
    }
    return 0;
}

int cmd_train(const CommonOpts& o) {
    ExperimentConfig cfg = ExperimentConfig::from_file(o.config_path);
    std::vector<std::uint64_t> seeds = effective_seeds(cfg, o);
    std::vector<std::string> outputs{"summary.csv", "checkpoint.gcnw",
                                     "predictions.gcnp"};
    for (std::uint64_t s : seeds)
        outputs.push_back("metrics_seed" + std::to_string(s) + ".csv");
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    if (!o.force)
        for (const auto& f : outputs)
            if (fs::exists(dir / f))
                throw ConflictError("output file " + (dir / f).string() +
                                    " exists (use --force to overwrite)");

    Dataset d = build_dataset(cfg.dataset);
    std::string model_name = cfg.model.type == ModelType::gcn_res ? "gcn_res" : "plain_gcn";
    RowSummary row = run_experiment_row(
        d, cfg.model, cfg.training, cfg.tricks, seeds,
        [&](auto& model, const RunResult& r, const Dataset& full,
            const NormalizedAdjacency& adj) {
            model.save((dir / "checkpoint.gcnw").string());
            io::MatrixFile pred;
            pred.matrix = probabilities_from_logp(
                predict_full(model, full, adj, cfg.tricks.label_usage));
            pred.provenance = "model=" + model_name + " seed=" + std::to_string(seeds[0]) +
                              " best_epoch=" + std::to_string(r.best_epoch);
            io::save_predictions(pred, (dir / "predictions.gcnp").string());
        });

    for (std::size_t i = 0; i < seeds.size(); ++i) {
        std::ofstream csv(dir / ("metrics_seed" + std::to_string(seeds[i]) + ".csv"));
        write_metrics_csv(csv, row.runs.runs[i], cfg.training.metric);
    }
    SeedSummary reported = row.runs;
    reported.test_mean = row.test_mean;
    reported.test_std = row.test_std;
    reported.valid_mean = row.valid_mean;
    reported.valid_std = row.valid_std;
    std::ofstream summary(dir / "summary.csv");
    write_summary_csv(summary, model_name, tricks_label(cfg.tricks), reported);

    std::cout << "test: " << fmt_percent_pm(row.test_mean, row.test_std)
              << ", valid: " << fmt_percent_pm(row.valid_mean, row.valid_std) << "\n";
    return 0;
}

int cmd_postprocess(const CommonOpts& o, const std::string& predictions_path) {
    ExperimentConfig cfg = ExperimentConfig::from_file(o.config_path);
    if (cfg.tricks.cs_version == 0)
        throw ValueError("postprocess: config [tricks] must set cs = v2 or v3");
    fs::path dir = prepare_output(o, {"corrected.gcnp"});
    Dataset d = build_dataset(cfg.dataset);
    std::string pred_path = predictions_path.empty()
                                ? (dir / "predictions.gcnp").string()
                                : predictions_path;
    io::MatrixFile pred = io::load_predictions(pred_path);
    if (pred.matrix.rows != d.graph.num_nodes)
        throw ValueError("postprocess: predictions hold " +
                         std::to_string(pred.matrix.rows) + " rows for " +
                         std::to_string(d.graph.num_nodes) + " nodes");

    NormalizedAdjacency adj = symmetric_normalize(d.graph);
    Metric metric = cfg.training.metric;
    auto report = [&](const char* tag, const Tensor& p) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s: valid %.4f, test %.4f\n", tag,
                      evaluate_metric(metric, p, d.labels, d.valid_idx),
                      evaluate_metric(metric, p, d.labels, d.test_idx));
        std::cout << buf;
    };
    report("before", pred.matrix);
    Tensor corrected = correct_and_smooth(pred.matrix, d, adj, cfg.tricks.cs);
    report("after", corrected);
    std::cout << "label set: " << cs_label_nodes(d, cfg.tricks.cs.label_set).size()
              << " nodes (" << (cfg.tricks.cs_version == 3 ? "v3" : "v2") << ")\n";

    io::MatrixFile out;
    out.matrix = corrected;
    out.provenance = pred.provenance + " +cs_" +
                     (cfg.tricks.cs_version == 3 ? std::string("v3") : std::string("v2"));
    io::save_predictions(out, (dir / "corrected.gcnp").string());
    return 0;
}

// Row token: model name optionally followed by +trick suffixes, e.g.
// "gcn_res+cs_v2+flag". Tricks not named in the token are switched off.
TricksSpec row_tricks(const TricksSpec& base, const std::vector<std::string>& mods) {
    TricksSpec t = base;
    t.embedding_file.clear();
    t.cs_version = 0;
    t.flag.enabled = false;
    t.label_usage.enabled = false;
    for (const auto& m : mods) {
        if (m == "cs_v2") {
            t.cs_version = 2;
            t.cs.label_set = CsLabelSet::v2;
        } else if (m == "cs_v3") {
            t.cs_version = 3;
            t.cs.label_set = CsLabelSet::v3;
        } else if (m == "flag") {
            t.flag = base.flag;
            t.flag.enabled = true;
        } else if (m == "label_usage") {
            t.label_usage = base.label_usage;
            t.label_usage.enabled = true;
        } else if (m == "embedding") {
            if (base.embedding_file.empty())
                throw ValueError("ablate row needs [tricks] embedding_file for '+embedding'");
            t.embedding_file = base.embedding_file;
        } else {
            throw ValueError("unknown trick '" + m + "' in ablate row");
        }
    }
    return t;
}

int cmd_ablate(const CommonOpts& o) {
    ExperimentConfig cfg = ExperimentConfig::from_file(o.config_path);
    if (cfg.ablate_rows.empty())
        throw ValueError("ablate: config needs an [ablate] section with a rows list");
    std::vector<std::uint64_t> seeds = effective_seeds(cfg, o);
    fs::path dir = prepare_output(o, {"ablation.csv", "ablation.md"});
    Dataset d = build_dataset(cfg.dataset);

    std::ofstream csv(dir / "ablation.csv");
    csv << "model,tricks,test_mean,test_std,valid_mean,valid_std\n";
    std::ofstream md(dir / "ablation.md");
    md << "| model | tricks | test | valid |\n|---|---|---|---|\n";

    int failures = 0;
    for (const std::string& token : cfg.ablate_rows) {
        std::vector<std::string> parts;
        std::string cur;
        for (char ch : token + "+") {
            if (ch == '+') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        try {
            if (parts.empty() || parts[0].empty())
                throw ValueError("empty ablate row token");
            ModelSpec ms = cfg.model;
            if (parts[0] == "gcn_res") ms.type = ModelType::gcn_res;
            else if (parts[0] == "plain_gcn") ms.type = ModelType::plain_gcn;
            else throw ValueError("ablate row '" + token + "' must start with gcn_res or plain_gcn");
            TricksSpec tricks =
                row_tricks(cfg.tricks, {parts.begin() + 1, parts.end()});

            RowSummary row = run_experiment_row(
                d, ms, cfg.training, tricks, seeds,
                [](auto&, const RunResult&, const Dataset&, const NormalizedAdjacency&) {});
            std::string label = tricks_label(tricks);
            csv << parts[0] << "," << label << "," << fmt_g17(row.test_mean) << ","
                << fmt_g17(row.test_std) << "," << fmt_g17(row.valid_mean) << ","
                << fmt_g17(row.valid_std) << "\n";
            md << "| " << parts[0] << " | " << label << " | "
               << fmt_percent_pm(row.test_mean, row.test_std) << " | "
               << fmt_percent_pm(row.valid_mean, row.valid_std) << " |\n";
            std::cout << token << ": test " << fmt_percent_pm(row.test_mean, row.test_std)
                      << ", valid " << fmt_percent_pm(row.valid_mean, row.valid_std)
                      << "\n";
        } catch (const NumericError& e) {
            ++failures;
            csv << token << ",FAILED," << e.what() << ",,,\n";
            md << "| " << token << " | FAILED | " << e.what() << " | |\n";
            std::cout << token << ": FAILED (" << e.what() << ")\n";
        } catch (const ValueError& e) {
            ++failures;
            csv << token << ",FAILED," << e.what() << ",,,\n";
            md << "| " << token << " | FAILED | " << e.what() << " | |\n";
            std::cout << token << ": FAILED (" << e.what() << ")\n";
        }
    }
    return failures == 0 ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gcnlab: residual-GCN node classification experiments"};
    app.require_subcommand(1);

    CommonOpts gen_o, pre_o, train_o, post_o, abl_o;
    std::string predictions_path;

    add_common(app.add_subcommand("gen-data", "generate or ingest a dataset"), gen_o);
    add_common(app.add_subcommand("pretrain", "pre-train structural embeddings"),
               pre_o, false, true);
    add_common(app.add_subcommand("train", "train over the seed protocol"), train_o, true);
    CLI::App* post = app.add_subcommand("postprocess", "apply Correct & Smooth");
    add_common(post, post_o);
    post->add_option("predictions", predictions_path,
                     "GCNP prediction file (default: OUT/predictions.gcnp)");
    add_common(app.add_subcommand("ablate", "run a trick-combination grid"), abl_o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_o);
        if (app.got_subcommand("pretrain")) return cmd_pretrain(pre_o);
        if (app.got_subcommand("train")) return cmd_train(train_o);
        if (app.got_subcommand("postprocess")) return cmd_postprocess(post_o, predictions_path);
        if (app.got_subcommand("ablate")) return cmd_ablate(abl_o);
    } catch (const ConflictError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
