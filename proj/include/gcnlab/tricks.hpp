#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/graph.hpp"
#include "gcnlab/ops.hpp"
#include "gcnlab/optim.hpp"
#include "gcnlab/rng.hpp"
#include "gcnlab/sampler.hpp"

namespace gcnlab {

enum class MergeMode { concat, sum };

inline MergeMode merge_from_string(const std::string& s) {
    if (s == "concat") return MergeMode::concat;
    if (s == "sum") return MergeMode::sum;
    throw ValueError("unknown merge mode '" + s + "' (expected concat or sum)");
}

// Merge pre-trained embeddings into the node features: X' = [X | E] or X + E.
inline Tensor embedding_merge(const Tensor& x, const Tensor& e, MergeMode mode) {
    if (x.rows != e.rows)
        throw ValueError("embedding_merge: row mismatch " + shape_str(x) + " vs " +
                         shape_str(e));
    if (mode == MergeMode::sum) {
        if (x.cols != e.cols)
            throw ValueError("embedding_merge: sum mode needs equal widths, got " +
                             shape_str(x) + " vs " + shape_str(e));
        return add(nullptr, x, e);
    }
    Tensor out(x.rows, x.cols + e.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        std::copy_n(&x.data[i * x.cols], x.cols, &out.data[i * out.cols]);
        std::copy_n(&e.data[i * e.cols], e.cols, &out.data[i * out.cols + x.cols]);
    }
    return out;
}

// y^(t+1) = (1 - alpha) * y^(0) + alpha * A_hat * y^(t), iterated `iters`
// times from y^(0) = y.
inline Tensor label_propagate(const Tensor& y, const NormalizedAdjacency& adj,
                              double alpha, std::size_t iters) {
    if (alpha < 0.0 || alpha >= 1.0)
        throw ValueError("label_propagate: alpha must be in [0,1)");
    if (y.rows != adj.graph.num_nodes)
        throw ValueError("label_propagate: " + std::to_string(y.rows) +
                         " rows vs " + std::to_string(adj.graph.num_nodes) + " nodes");
    Tensor cur = y;
    for (std::size_t t = 0; t < iters; ++t) {
        Tensor ay = spmm(nullptr, adj, cur);
        for (std::size_t i = 0; i < cur.data.size(); ++i)
            cur.data[i] = (1.0 - alpha) * y.data[i] + alpha * ay.data[i];
    }
    return cur;
}

enum class CsLabelSet { v2, v3 }; // v2 = train labels, v3 = train + valid
enum class CsScale { autoscale, fixed };

struct CorrectSmoothConfig {
    double alpha1 = 0.8;
    std::size_t iters1 = 50;
    CsScale scale = CsScale::autoscale;
    double fixed_scale = 1.0;
    double alpha2 = 0.8;
    std::size_t iters2 = 50;
    CsLabelSet label_set = CsLabelSet::v2;

    void validate() const {
        if (alpha1 <= 0.0 || alpha1 >= 1.0 || alpha2 <= 0.0 || alpha2 >= 1.0)
            throw ValueError("correct_and_smooth: alphas must be in (0,1)");
    }
};

inline std::vector<NodeId> cs_label_nodes(const Dataset& d, CsLabelSet set) {
    std::vector<NodeId> nodes = d.train_idx;
    if (set == CsLabelSet::v3)
        nodes.insert(nodes.end(), d.valid_idx.begin(), d.valid_idx.end());
    std::sort(nodes.begin(), nodes.end());
    return nodes;
}

// Correct & Smooth post-processing. CORRECT propagates the residual between
// one-hot labels and the base prediction over the label-set nodes, scales
// it and adds it back; SMOOTH clamps label-set rows to one-hot and
// propagates once more. Rows are re-clamped to >= 0 and renormalized.
inline Tensor correct_and_smooth(const Tensor& base_pred, const Dataset& d,
                                 const NormalizedAdjacency& adj,
                                 const CorrectSmoothConfig& cfg) {
    cfg.validate();
    const std::size_t n = base_pred.rows, c = base_pred.cols;
    if (n != d.graph.num_nodes || c != d.num_classes)
        throw ValueError("correct_and_smooth: prediction shape " + shape_str(base_pred) +
                         " does not match dataset");
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += base_pred(i, j);
        if (std::abs(s - 1.0) > 1e-6)
            throw ValueError("correct_and_smooth: prediction row " + std::to_string(i) +
                             " sums to " + std::to_string(s) + ", expected 1");
    }
    std::vector<NodeId> label_nodes = cs_label_nodes(d, cfg.label_set);
    if (label_nodes.empty()) throw ValueError("correct_and_smooth: empty label set");
    std::vector<char> is_labeled(n, 0);
    for (NodeId i : label_nodes) {
        if (d.labels[i] < 0)
            throw ValueError("correct_and_smooth: node " + std::to_string(i) +
                             " in the label set has no label");
        is_labeled[i] = 1;
    }

    // CORRECT
    Tensor residual(n, c);
    for (NodeId i : label_nodes) {
        for (std::size_t j = 0; j < c; ++j) residual(i, j) = -base_pred(i, j);
        residual(i, static_cast<std::size_t>(d.labels[i])) += 1.0;
    }
    Tensor propagated = label_propagate(residual, adj, cfg.alpha1, cfg.iters1);

    double s = cfg.fixed_scale;
    if (cfg.scale == CsScale::autoscale) {
        double known = 0.0, unknown = 0.0;
        std::size_t unknown_rows = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double l1 = 0.0;
            if (is_labeled[i]) {
                for (std::size_t j = 0; j < c; ++j) l1 += std::abs(residual(i, j));
                known += l1;
            } else {
                for (std::size_t j = 0; j < c; ++j) l1 += std::abs(propagated(i, j));
                unknown += l1;
                ++unknown_rows;
            }
        }
        known /= static_cast<double>(label_nodes.size());
        // all nodes labeled, or propagation wiped the residual: no rescale
        if (unknown_rows == 0 || unknown <= 0.0) {
            s = 0.0;
        } else {
            s = known / (unknown / static_cast<double>(unknown_rows));
        }
    }

    Tensor corrected = base_pred;
    for (std::size_t i = 0; i < corrected.data.size(); ++i)
        corrected.data[i] += s * propagated.data[i];

    // SMOOTH
    for (NodeId i : label_nodes) {
        for (std::size_t j = 0; j < c; ++j) corrected(i, j) = 0.0;
        corrected(i, static_cast<std::size_t>(d.labels[i])) = 1.0;
    }
    Tensor smoothed = label_propagate(corrected, adj, cfg.alpha2, cfg.iters2);

    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double v = std::max(0.0, smoothed(i, j));
            smoothed(i, j) = v;
            total += v;
        }
        if (total > 0.0) {
            for (std::size_t j = 0; j < c; ++j) smoothed(i, j) /= total;
        } else {
            for (std::size_t j = 0; j < c; ++j)
                smoothed(i, j) = 1.0 / static_cast<double>(c);
        }
    }
    return smoothed;
}

// ---------------------------------------------------------------------------
// FLAG: gradient-based adversarial perturbation of the input features.
// ---------------------------------------------------------------------------

struct FlagConfig {
    bool enabled = false;
    std::size_t steps = 3;      // M
    double step_size = 1e-3;
    // perturb only the first raw_columns feature columns (0 = every column)
    std::size_t raw_columns = 0;

    void validate() const {
        if (steps < 1) throw ValueError("flag: steps must be >= 1");
        if (step_size < 0.0) throw ValueError("flag: step_size must be >= 0");
    }
};

// One FLAG training step on a batch: M ascent steps on the perturbation,
// parameter gradients averaged over the M losses, then one Adam update.
// Returns the mean (unperturbed-scale) loss over the M inner steps.
template <class Model>
double flag_train_step(Model& model, const Batch& batch, const FlagConfig& fc,
                       const AdamConfig& ac, Rng& dropout_rng, Rng& flag_rng) {
    fc.validate();
    auto params = model.parameters();
    zero_grad(params);

    const std::size_t cols = batch.features.cols;
    const std::size_t perturb_cols = fc.raw_columns == 0 ? cols : fc.raw_columns;
    Tensor delta(batch.features.rows, cols);
    for (std::size_t i = 0; i < batch.features.rows; ++i)
        for (std::size_t j = 0; j < perturb_cols; ++j)
            delta(i, j) = flag_rng.uniform(-fc.step_size, fc.step_size);

    const double inv_m = 1.0 / static_cast<double>(fc.steps);
    double loss_total = 0.0;
    for (std::size_t t = 0; t < fc.steps; ++t) {
        Tape tape;
        Tensor x = tape.watch_input(add(nullptr, batch.features, delta));
        auto out = model.forward(&tape, x, batch.adj, true, dropout_rng);
        Tensor loss = nll_loss(&tape, out.logp, batch.labels, batch.targets);
        loss_total += loss.data[0];
        tape.backward(scale(&tape, loss, inv_m));
        const auto& dx = tape.grad_buf(x.node);
        for (std::size_t i = 0; i < batch.features.rows; ++i)
            for (std::size_t j = 0; j < perturb_cols; ++j) {
                double g = dx[i * cols + j];
                if (g > 0.0) delta(i, j) += fc.step_size;
                else if (g < 0.0) delta(i, j) -= fc.step_size;
            }
    }
    adam_step(params, ac);
    return loss_total * inv_m;
}

// ---------------------------------------------------------------------------
// Label Usage: append a one-hot label channel to the features. Each epoch
// half of the train split exposes its true labels while the other half
// (plus valid/test, all zero in the channel) forms the loss targets.
// ---------------------------------------------------------------------------

struct LabelUsageConfig {
    bool enabled = false;
    std::size_t recycle_rounds = 0;
};

inline Tensor with_label_channel(const Tensor& x, const std::vector<std::int64_t>& labels,
                                 std::size_t num_classes,
                                 const std::vector<NodeId>& expose) {
    Tensor out(x.rows, x.cols + num_classes);
    for (std::size_t i = 0; i < x.rows; ++i)
        std::copy_n(&x.data[i * x.cols], x.cols, &out.data[i * out.cols]);
    for (NodeId i : expose) {
        if (labels[i] < 0)
            throw ValueError("label channel: node " + std::to_string(i) + " is unlabeled");
        out(i, x.cols + static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

struct LabelUsageEpoch {
    Tensor features;              // [X | label channel]
    std::vector<NodeId> exposed;  // train half with labels visible
    std::vector<NodeId> targets;  // train half forming the loss targets
};

inline LabelUsageEpoch label_usage_prepare(const Dataset& d, std::uint64_t seed,
                                           std::uint64_t epoch) {
    if (d.train_idx.empty()) throw ValueError("label_usage: empty train split");
    std::vector<NodeId> order = d.train_idx;
    Rng rng = Rng::derive(seed, stream::label_use, epoch);
    rng.shuffle(order);
    std::size_t half = order.size() / 2;
    LabelUsageEpoch out;
    out.exposed.assign(order.begin(), order.begin() + half);
    out.targets.assign(order.begin() + half, order.end());
    std::sort(out.exposed.begin(), out.exposed.end());
    std::sort(out.targets.begin(), out.targets.end());
    out.features = with_label_channel(d.features, d.labels, d.num_classes, out.exposed);
    return out;
}

} // namespace gcnlab
