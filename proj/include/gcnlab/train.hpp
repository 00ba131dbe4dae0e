#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/metrics.hpp"
#include "gcnlab/model.hpp"
#include "gcnlab/sampler.hpp"
#include "gcnlab/tricks.hpp"

namespace gcnlab {

struct TrainConfig {
    std::size_t epochs = 200;
    double lr = 0.01;
    double weight_decay = 0.0;
    SamplerConfig sampler;
    std::size_t early_stop_patience = 0; // 0 = disabled
    std::uint64_t seed = 0;
    Metric metric = Metric::accuracy;
    FlagConfig flag;
    LabelUsageConfig label_usage;
};

struct RunResult {
    std::vector<double> train_loss;
    std::vector<double> valid_metric;
    std::vector<double> test_metric;
    std::size_t best_epoch = 0;
    double best_valid = 0.0;
    double test_at_best = 0.0;
    double wall_time_sec = 0.0;
};

namespace detail {

template <class Model>
struct ModelSnapshot {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> running_mean;
    std::vector<std::vector<double>> running_var;

    static ModelSnapshot take(Model& m) {
        ModelSnapshot s;
        for (Parameter* p : m.parameters()) s.values.push_back(p->value.data);
        for (NormParams* n : m.norm_params()) {
            s.running_mean.push_back(n->running_mean);
            s.running_var.push_back(n->running_var);
        }
        return s;
    }

    void restore(Model& m) const {
        auto params = m.parameters();
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i]->value.data = values[i];
        auto norms = m.norm_params();
        for (std::size_t i = 0; i < norms.size(); ++i) {
            norms[i]->running_mean = running_mean[i];
            norms[i]->running_var = running_var[i];
        }
    }
};

} // namespace detail

// Full-graph log-probabilities in inference mode. With Label Usage the
// label channel exposes all train labels; recycle rounds re-run inference
// with predicted labels filled in for the remaining nodes.
template <class Model>
Tensor predict_full(Model& model, const Dataset& d, const NormalizedAdjacency& adj,
                    const LabelUsageConfig& lu = {}) {
    Rng unused(0); // inference mode draws nothing
    if (!lu.enabled)
        return model.forward(nullptr, d.features, adj, false, unused).logp;

    std::vector<char> in_train(d.graph.num_nodes, 0);
    for (NodeId i : d.train_idx) in_train[i] = 1;
    Tensor feats = with_label_channel(d.features, d.labels, d.num_classes, d.train_idx);
    Tensor logp = model.forward(nullptr, feats, adj, false, unused).logp;
    for (std::size_t round = 0; round < lu.recycle_rounds; ++round) {
        std::vector<std::int64_t> filled(d.graph.num_nodes);
        std::vector<NodeId> expose(d.graph.num_nodes);
        for (NodeId i = 0; i < d.graph.num_nodes; ++i) {
            expose[i] = i;
            if (in_train[i]) {
                filled[i] = d.labels[i];
            } else {
                std::size_t best = 0;
                for (std::size_t j = 1; j < logp.cols; ++j)
                    if (logp(i, j) > logp(i, best)) best = j;
                filled[i] = static_cast<std::int64_t>(best);
            }
        }
        feats = with_label_channel(d.features, filled, d.num_classes, expose);
        logp = model.forward(nullptr, feats, adj, false, unused).logp;
    }
    return logp;
}

template <class Model>
double evaluate(Model& model, const Dataset& d, const NormalizedAdjacency& adj,
                const std::vector<NodeId>& split, Metric metric,
                const LabelUsageConfig& lu = {}) {
    if (split.empty()) throw ValueError("evaluate: empty split");
    Tensor logp = predict_full(model, d, adj, lu);
    return evaluate_metric(metric, logp, d.labels, split);
}

// Algorithm: per epoch, sample batches, take one optimizer step per batch,
// then evaluate valid/test on the full graph in inference mode. The model
// is left holding the parameters of the best-valid epoch.
template <class Model>
RunResult train(Model& model, const Dataset& d, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ValueError("train: epochs must be >= 1");
    if (cfg.lr <= 0.0) throw ValueError("train: lr must be > 0");
    if (cfg.sampler.kind == SamplerKind::neighbor &&
        cfg.sampler.fanouts.size() != model.cfg.layers)
        throw ValueError("train: neighbor sampling needs one fanout per layer, got " +
                         std::to_string(cfg.sampler.fanouts.size()) + " for depth " +
                         std::to_string(model.cfg.layers));
    cfg.flag.validate();
    d.validate();

    const auto t0 = std::chrono::steady_clock::now();
    NormalizedAdjacency full_adj = symmetric_normalize(d.graph);
    AdamConfig adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;
    auto params = model.parameters();

    RunResult r;
    double best_valid = -1.0;
    detail::ModelSnapshot<Model> best;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Dataset* view = &d;
        Dataset augmented;
        if (cfg.label_usage.enabled) {
            LabelUsageEpoch lue = label_usage_prepare(d, cfg.seed, epoch);
            augmented = d;
            augmented.features = std::move(lue.features);
            augmented.train_idx = std::move(lue.targets);
            view = &augmented;
        }
        std::vector<Batch> batches = build_batches(*view, cfg.sampler, cfg.seed, epoch);

        double loss_sum = 0.0;
        std::size_t target_count = 0;
        double single_loss = 0.0;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            const Batch& batch = batches[i];
            Rng dropout_rng = Rng::derive(cfg.seed, stream::dropout, epoch, i);
            double loss;
            if (cfg.flag.enabled) {
                Rng flag_rng = Rng::derive(cfg.seed, stream::flag, epoch, i);
                loss = flag_train_step(model, batch, cfg.flag, adam, dropout_rng, flag_rng);
            } else {
                zero_grad(params);
                Tape tape;
                auto out = model.forward(&tape, batch.features, batch.adj, true, dropout_rng);
                Tensor l = nll_loss(&tape, out.logp, batch.labels, batch.targets);
                tape.backward(l);
                adam_step(params, adam);
                loss = l.data[0];
            }
            if (!std::isfinite(loss))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(i));
            loss_sum += loss * static_cast<double>(batch.targets.size());
            target_count += batch.targets.size();
            single_loss = loss;
        }
        r.train_loss.push_back(batches.size() == 1
                                   ? single_loss
                                   : loss_sum / static_cast<double>(target_count));

        double vm = evaluate(model, d, full_adj, d.valid_idx, cfg.metric, cfg.label_usage);
        double tm = evaluate(model, d, full_adj, d.test_idx, cfg.metric, cfg.label_usage);
        r.valid_metric.push_back(vm);
        r.test_metric.push_back(tm);
        if (vm > best_valid) {
            best_valid = vm;
            r.best_epoch = epoch;
            r.best_valid = vm;
            r.test_at_best = tm;
            best = detail::ModelSnapshot<Model>::take(model);
        }
        if (cfg.early_stop_patience > 0 &&
            epoch - r.best_epoch >= cfg.early_stop_patience)
            break;
    }

    best.restore(model);
    r.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

struct SeedSummary {
    std::vector<std::uint64_t> seeds;
    std::vector<RunResult> runs;
    double test_mean = 0.0, test_std = 0.0;
    double valid_mean = 0.0, valid_std = 0.0;
};

// Mean and the n-1-denominator standard deviation; std is 0 for n = 1.
inline std::pair<double, double> mean_unbiased_std(const std::vector<double>& v) {
    if (v.empty()) throw ValueError("mean_unbiased_std: empty sample");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

// The 10-seed protocol: a fresh model per seed, test metric taken at each
// run's best-valid epoch. `on_run(index, model, result)` sees every trained
// model (with its best-valid parameters restored) before it is discarded.
template <class ModelFactory, class OnRun>
SeedSummary run_seeds(ModelFactory&& make_model, const Dataset& d, TrainConfig cfg,
                      const std::vector<std::uint64_t>& seeds, OnRun&& on_run) {
    if (seeds.empty()) throw ValueError("run_seeds: empty seed list");
    SeedSummary s;
    s.seeds = seeds;
    std::vector<double> tests, valids;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        cfg.seed = seeds[i];
        auto model = make_model(seeds[i]);
        RunResult r = train(model, d, cfg);
        tests.push_back(r.test_at_best);
        valids.push_back(r.best_valid);
        on_run(i, model, r);
        s.runs.push_back(std::move(r));
    }
    std::tie(s.test_mean, s.test_std) = mean_unbiased_std(tests);
    std::tie(s.valid_mean, s.valid_std) = mean_unbiased_std(valids);
    return s;
}

template <class ModelFactory>
SeedSummary run_seeds(ModelFactory&& make_model, const Dataset& d, TrainConfig cfg,
                      const std::vector<std::uint64_t>& seeds) {
    return run_seeds(std::forward<ModelFactory>(make_model), d, cfg, seeds,
                     [](std::size_t, auto&, const RunResult&) {});
}

// --- reporting -------------------------------------------------------------

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Percent with two decimals, the shape used by the summary tables.
inline std::string fmt_percent_pm(double mean, double std_dev) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * mean, 100.0 * std_dev);
    return buf;
}

inline void write_metrics_csv(std::ostream& os, const RunResult& r, Metric metric) {
    os << "epoch,split,metric_name,value\n";
    const std::string m = to_string(metric);
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
        os << e << ",train,loss," << fmt_g17(r.train_loss[e]) << "\n";
        os << e << ",valid," << m << "," << fmt_g17(r.valid_metric[e]) << "\n";
        os << e << ",test," << m << "," << fmt_g17(r.test_metric[e]) << "\n";
    }
}

inline void write_summary_csv(std::ostream& os, const std::string& model,
                              const std::string& tricks, const SeedSummary& s,
                              bool header = true) {
    if (header) os << "model,tricks,test_mean,test_std,valid_mean,valid_std\n";
    os << model << "," << tricks << "," << fmt_g17(s.test_mean) << ","
       << fmt_g17(s.test_std) << "," << fmt_g17(s.valid_mean) << ","
       << fmt_g17(s.valid_std) << "\n";
}

} // namespace gcnlab
