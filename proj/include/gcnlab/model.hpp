#pragma once

#include <string>
#include <vector>

#include "gcnlab/graph.hpp"
#include "gcnlab/io.hpp"
#include "gcnlab/ops.hpp"
#include "gcnlab/optim.hpp"
#include "gcnlab/rng.hpp"
#include "gcnlab/tape.hpp"

namespace gcnlab {

enum class NormKind { batch, layer, none };
enum class Aggregation { softmax_layer, last_layer };

inline NormKind norm_from_string(const std::string& s) {
    if (s == "batch") return NormKind::batch;
    if (s == "layer") return NormKind::layer;
    if (s == "none") return NormKind::none;
    throw ValueError("unknown norm '" + s + "' (expected batch, layer or none)");
}

inline std::string to_string(NormKind n) {
    switch (n) {
        case NormKind::batch: return "batch";
        case NormKind::layer: return "layer";
        default: return "none";
    }
}

// out = spmm(adj, x @ w); no bias term.
inline Tensor gcn_conv(Tape* tape, const Tensor& x, const NormalizedAdjacency& adj,
                       const Tensor& w) {
    return spmm(tape, adj, matmul(tape, x, w));
}

struct ForwardOutput {
    Tensor logp;                // (n × num_classes) log-probabilities
    std::vector<Tensor> states; // X^(0), X^(1), ..., X^(K)
};

namespace detail {

inline Tensor use(Tape* tape, Parameter& p) {
    return tape ? tape->watch(p) : p.value;
}

inline Tensor apply_norm(Tape* tape, const Tensor& x, NormKind kind,
                         NormParams& p, bool training) {
    switch (kind) {
        case NormKind::batch: return batch_norm(tape, x, p, training);
        case NormKind::layer: return layer_norm(tape, x, p);
        default: return x;
    }
}

inline void save_model_records(const std::string& path,
                               const std::vector<Parameter*>& params,
                               const std::vector<NormParams*>& norms) {
    std::vector<io::NamedTensor> records;
    for (const Parameter* p : params) records.push_back({p->name, p->value});
    for (const NormParams* n : norms) {
        Tensor mean(1, n->dim()), var(1, n->dim());
        mean.data = n->running_mean;
        var.data = n->running_var;
        std::string prefix = n->gamma.name.substr(0, n->gamma.name.size() - 6);
        records.push_back({prefix + ".running_mean", mean});
        records.push_back({prefix + ".running_var", var});
    }
    io::save_checkpoint(records, path);
}

inline void load_model_records(const std::string& path,
                               const std::vector<Parameter*>& params,
                               const std::vector<NormParams*>& norms) {
    auto records = io::load_checkpoint(path);
    auto take = [&](const std::string& name) -> const Tensor& {
        for (const auto& r : records)
            if (r.name == name) return r.value;
        throw IoError("checkpoint " + path + " is missing record '" + name + "'");
    };
    std::size_t expected = params.size() + 2 * norms.size();
    if (records.size() != expected)
        throw IoError("checkpoint " + path + " holds " + std::to_string(records.size()) +
                      " records, expected " + std::to_string(expected));
    for (Parameter* p : params) {
        const Tensor& t = take(p->name);
        if (t.rows != p->value.rows || t.cols != p->value.cols)
            throw IoError("checkpoint record '" + p->name + "' has shape " +
                          shape_str(t) + ", expected " + shape_str(p->value));
        p->value.data = t.data;
    }
    for (NormParams* n : norms) {
        std::string prefix = n->gamma.name.substr(0, n->gamma.name.size() - 6);
        const Tensor& mean = take(prefix + ".running_mean");
        const Tensor& var = take(prefix + ".running_var");
        if (mean.cols != n->dim() || var.cols != n->dim())
            throw IoError("checkpoint running stats for '" + prefix + "' have wrong shape");
        n->running_mean = mean.data;
        n->running_var = var.data;
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// GCN_res: residual GCN with softmax layer-aggregation.
//
// Forward pass per layer k = 1..K:
//     H = GCNsConv(X^(k-1)) -> Norm -> Relu -> Dropout     (post-activated)
//     H = Norm -> Relu -> Dropout -> GCNsConv(X^(k-1))     (pre-activated)
//     X^(k) = H + alpha * X^(0) + beta * X^(k-1)
// followed by Z = sum_k softmax(w)_k * X^(k), an output Linear layer and
// LogSoftmax.
// ---------------------------------------------------------------------------

struct GcnResConfig {
    std::size_t layers = 3; // K
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 64;
    std::size_t num_classes = 0;
    double alpha = 0.2;
    double beta = 0.7;
    double dropout_rate = 0.5;
    NormKind norm = NormKind::batch;
    bool pre_activated = false;
    Aggregation aggregation = Aggregation::softmax_layer;
    bool per_feature_aggregation = false;
    bool learnable_residual = false;

    void validate() const {
        if (layers < 1) throw ValueError("gcn_res: layers must be >= 1");
        if (input_dim == 0 || hidden_dim == 0 || num_classes == 0)
            throw ValueError("gcn_res: input_dim, hidden_dim and num_classes must be set");
        if (alpha < 0.0 || beta < 0.0)
            throw ValueError("gcn_res: alpha and beta must be non-negative");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ValueError("gcn_res: dropout_rate must be in [0,1)");
    }
};

class GcnResModel {
public:
    GcnResConfig cfg;
    Parameter in_w, in_b;
    std::vector<Parameter> conv_w;
    std::vector<NormParams> norms;
    Parameter agg_w;
    Parameter res_alpha, res_beta;
    Parameter out_w, out_b;

    explicit GcnResModel(const GcnResConfig& c) : cfg(c) {
        cfg.validate();
        in_w = Parameter("in.W", cfg.input_dim, cfg.hidden_dim);
        in_b = Parameter("in.b", 1, cfg.hidden_dim);
        for (std::size_t k = 1; k <= cfg.layers; ++k)
            conv_w.emplace_back("conv." + std::to_string(k) + ".W",
                                cfg.hidden_dim, cfg.hidden_dim);
        if (cfg.norm != NormKind::none)
            for (std::size_t k = 1; k <= cfg.layers; ++k)
                norms.emplace_back("norm." + std::to_string(k), cfg.hidden_dim);
        agg_w = cfg.per_feature_aggregation
                    ? Parameter("agg.W", cfg.layers, cfg.hidden_dim)
                    : Parameter("agg.W", 1, cfg.layers);
        if (cfg.learnable_residual) {
            res_alpha = Parameter("res.alpha", 1, 1);
            res_alpha.value.data[0] = cfg.alpha;
            res_beta = Parameter("res.beta", 1, 1);
            res_beta.value.data[0] = cfg.beta;
        }
        out_w = Parameter("out.W", cfg.hidden_dim, cfg.num_classes);
        out_b = Parameter("out.b", 1, cfg.num_classes);
    }

    void init(Rng& rng) {
        glorot_uniform(in_w, rng);
        for (auto& w : conv_w) glorot_uniform(w, rng);
        glorot_uniform(out_w, rng);
        // biases and aggregation logits stay zero: uniform softmax start
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps{&in_w, &in_b};
        for (auto& w : conv_w) ps.push_back(&w);
        for (auto& n : norms) {
            ps.push_back(&n.gamma);
            ps.push_back(&n.beta);
        }
        if (cfg.aggregation == Aggregation::softmax_layer) ps.push_back(&agg_w);
        if (cfg.learnable_residual) {
            ps.push_back(&res_alpha);
            ps.push_back(&res_beta);
        }
        ps.push_back(&out_w);
        ps.push_back(&out_b);
        return ps;
    }

    ForwardOutput forward(Tape* tape, const Tensor& x, const NormalizedAdjacency& adj,
                          bool training, Rng& dropout_rng) {
        if (x.cols != cfg.input_dim)
            throw ValueError("gcn_res forward: input has " + std::to_string(x.cols) +
                             " columns, model expects " + std::to_string(cfg.input_dim));
        ForwardOutput out;
        Tensor x0 = add_row_broadcast(tape, matmul(tape, x, detail::use(tape, in_w)),
                                      detail::use(tape, in_b));
        out.states.push_back(x0);
        Tensor prev = x0;
        for (std::size_t k = 0; k < cfg.layers; ++k) {
            Tensor h = prev;
            if (cfg.pre_activated) {
                if (cfg.norm != NormKind::none)
                    h = detail::apply_norm(tape, h, cfg.norm, norms[k], training);
                h = relu(tape, h);
                h = dropout(tape, h, cfg.dropout_rate, training, dropout_rng);
                h = gcn_conv(tape, h, adj, detail::use(tape, conv_w[k]));
            } else {
                h = gcn_conv(tape, h, adj, detail::use(tape, conv_w[k]));
                if (cfg.norm != NormKind::none)
                    h = detail::apply_norm(tape, h, cfg.norm, norms[k], training);
                h = relu(tape, h);
                h = dropout(tape, h, cfg.dropout_rate, training, dropout_rng);
            }
            if (cfg.learnable_residual) {
                h = add(tape, h, scale_by_entry(tape, x0, detail::use(tape, res_alpha), 0));
                h = add(tape, h, scale_by_entry(tape, prev, detail::use(tape, res_beta), 0));
            } else {
                h = add_scaled(tape, h, x0, cfg.alpha);
                h = add_scaled(tape, h, prev, cfg.beta);
            }
            out.states.push_back(h);
            prev = h;
        }

        Tensor z = aggregate(tape, out.states);
        z = add_row_broadcast(tape, matmul(tape, z, detail::use(tape, out_w)),
                              detail::use(tape, out_b));
        out.logp = log_softmax_rows(tape, z);
        return out;
    }

    // Z = sum_k softmax(W)^(k) * X^(k) over the K layer outputs (X^(0)
    // excluded). The softmax runs across the layer axis.
    Tensor aggregate(Tape* tape, const std::vector<Tensor>& states) {
        if (states.size() != cfg.layers + 1)
            throw ValueError("layer_aggregate: expected " + std::to_string(cfg.layers) +
                             " layer states");
        if (cfg.aggregation == Aggregation::last_layer) return states.back();
        if (cfg.per_feature_aggregation) {
            Tensor s = softmax_cols(tape, detail::use(tape, agg_w));
            Tensor z = mul_row_broadcast(tape, states[1], row(tape, s, 0));
            for (std::size_t k = 2; k <= cfg.layers; ++k)
                z = add(tape, z, mul_row_broadcast(tape, states[k], row(tape, s, k - 1)));
            return z;
        }
        Tensor w = softmax_vec(tape, detail::use(tape, agg_w));
        Tensor z = scale_by_entry(tape, states[1], w, 0);
        for (std::size_t k = 2; k <= cfg.layers; ++k)
            z = add(tape, z, scale_by_entry(tape, states[k], w, k - 1));
        return z;
    }

    std::vector<NormParams*> norm_params() {
        std::vector<NormParams*> ns;
        for (auto& n : norms) ns.push_back(&n);
        return ns;
    }

    void save(const std::string& path) {
        detail::save_model_records(path, all_records(), norm_params());
    }

    void load(const std::string& path) {
        detail::load_model_records(path, all_records(), norm_params());
    }

private:
    // Every parameter, including aggregation weights when the aggregation
    // mode keeps them out of the trainable set.
    std::vector<Parameter*> all_records() {
        std::vector<Parameter*> ps = parameters();
        if (cfg.aggregation != Aggregation::softmax_layer) ps.push_back(&agg_w);
        return ps;
    }
};

// ---------------------------------------------------------------------------
// Plain GCN baseline: stacked conv -> norm -> relu -> dropout without
// residuals or layer aggregation. Deliberately its own loop rather than a
// GCN_res special case, so reduction tests compare two real code paths.
// ---------------------------------------------------------------------------

struct PlainGcnConfig {
    std::size_t layers = 2;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 64;
    std::size_t num_classes = 0;
    double dropout_rate = 0.5;
    NormKind norm = NormKind::batch;

    void validate() const {
        if (layers < 1) throw ValueError("plain_gcn: layers must be >= 1");
        if (input_dim == 0 || hidden_dim == 0 || num_classes == 0)
            throw ValueError("plain_gcn: input_dim, hidden_dim and num_classes must be set");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ValueError("plain_gcn: dropout_rate must be in [0,1)");
    }
};

class PlainGcnModel {
public:
    PlainGcnConfig cfg;
    Parameter in_w, in_b;
    std::vector<Parameter> conv_w;
    std::vector<NormParams> norms;
    Parameter out_w, out_b;

    explicit PlainGcnModel(const PlainGcnConfig& c) : cfg(c) {
        cfg.validate();
        in_w = Parameter("in.W", cfg.input_dim, cfg.hidden_dim);
        in_b = Parameter("in.b", 1, cfg.hidden_dim);
        for (std::size_t k = 1; k <= cfg.layers; ++k)
            conv_w.emplace_back("conv." + std::to_string(k) + ".W",
                                cfg.hidden_dim, cfg.hidden_dim);
        if (cfg.norm != NormKind::none)
            for (std::size_t k = 1; k <= cfg.layers; ++k)
                norms.emplace_back("norm." + std::to_string(k), cfg.hidden_dim);
        out_w = Parameter("out.W", cfg.hidden_dim, cfg.num_classes);
        out_b = Parameter("out.b", 1, cfg.num_classes);
    }

    void init(Rng& rng) {
        glorot_uniform(in_w, rng);
        for (auto& w : conv_w) glorot_uniform(w, rng);
        glorot_uniform(out_w, rng);
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps{&in_w, &in_b};
        for (auto& w : conv_w) ps.push_back(&w);
        for (auto& n : norms) {
            ps.push_back(&n.gamma);
            ps.push_back(&n.beta);
        }
        ps.push_back(&out_w);
        ps.push_back(&out_b);
        return ps;
    }

    ForwardOutput forward(Tape* tape, const Tensor& x, const NormalizedAdjacency& adj,
                          bool training, Rng& dropout_rng) {
        if (x.cols != cfg.input_dim)
            throw ValueError("plain_gcn forward: input has " + std::to_string(x.cols) +
                             " columns, model expects " + std::to_string(cfg.input_dim));
        ForwardOutput out;
        Tensor h = add_row_broadcast(tape, matmul(tape, x, detail::use(tape, in_w)),
                                     detail::use(tape, in_b));
        out.states.push_back(h);
        for (std::size_t k = 0; k < cfg.layers; ++k) {
            h = gcn_conv(tape, h, adj, detail::use(tape, conv_w[k]));
            if (cfg.norm != NormKind::none)
                h = detail::apply_norm(tape, h, cfg.norm, norms[k], training);
            h = relu(tape, h);
            h = dropout(tape, h, cfg.dropout_rate, training, dropout_rng);
            out.states.push_back(h);
        }
        Tensor z = add_row_broadcast(tape, matmul(tape, h, detail::use(tape, out_w)),
                                     detail::use(tape, out_b));
        out.logp = log_softmax_rows(tape, z);
        return out;
    }

    std::vector<NormParams*> norm_params() {
        std::vector<NormParams*> ns;
        for (auto& n : norms) ns.push_back(&n);
        return ns;
    }

    void save(const std::string& path) {
        detail::save_model_records(path, parameters(), norm_params());
    }

    void load(const std::string& path) {
        detail::load_model_records(path, parameters(), norm_params());
    }
};

} // namespace gcnlab
