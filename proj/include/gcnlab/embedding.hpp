#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/graph.hpp"
#include "gcnlab/io.hpp"
#include "gcnlab/metrics.hpp"
#include "gcnlab/ops.hpp"
#include "gcnlab/optim.hpp"
#include "gcnlab/rng.hpp"

namespace gcnlab {

struct WalkConfig {
    double p = 1.0; // return parameter
    double q = 1.0; // in-out parameter
    std::size_t walk_length = 40;
    std::size_t walks_per_node = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (p <= 0.0 || q <= 0.0) throw ValueError("walks: p and q must be > 0");
        if (walk_length < 2) throw ValueError("walks: walk_length must be >= 2");
        if (walks_per_node < 1) throw ValueError("walks: walks_per_node must be >= 1");
    }
};

// Second-order biased walks: from (prev -> cur), candidate x is weighted
// 1/p if x = prev, 1 if x neighbors prev, 1/q otherwise. Each (node, walk)
// pair draws from its own derived stream, so generation order is free.
inline std::vector<std::vector<NodeId>> random_walks(const CsrGraph& g,
                                                     const WalkConfig& cfg) {
    cfg.validate();
    if (g.num_nodes == 0) throw ValueError("walks: empty graph");
    std::vector<std::vector<NodeId>> walks;
    walks.reserve(g.num_nodes * cfg.walks_per_node);
    std::vector<double> weights;
    for (NodeId start = 0; start < g.num_nodes; ++start) {
        for (std::size_t w = 0; w < cfg.walks_per_node; ++w) {
            Rng rng = Rng::derive(cfg.seed, stream::walk, start, w);
            std::vector<NodeId> walk{start};
            if (g.degree(start) == 0) {
                walks.push_back(std::move(walk));
                continue;
            }
            NodeId cur = g.col_indices[g.row_offsets[start] +
                                       rng.uniform_int(g.degree(start))];
            walk.push_back(cur);
            NodeId prev = start;
            while (walk.size() < cfg.walk_length) {
                const std::size_t begin = g.row_offsets[cur], deg = g.degree(cur);
                if (deg == 0) break;
                weights.resize(deg);
                double total = 0.0;
                for (std::size_t e = 0; e < deg; ++e) {
                    NodeId x = g.col_indices[begin + e];
                    double wt;
                    if (x == prev) wt = 1.0 / cfg.p;
                    else if (g.has_edge(prev, x)) wt = 1.0;
                    else wt = 1.0 / cfg.q;
                    total += wt;
                    weights[e] = total;
                }
                const double draw = rng.uniform01() * total;
                std::size_t pick = 0;
                while (pick + 1 < deg && weights[pick] <= draw) ++pick;
                prev = cur;
                cur = g.col_indices[begin + pick];
                walk.push_back(cur);
            }
            walks.push_back(std::move(walk));
        }
    }
    return walks;
}

struct SkipGramConfig {
    std::size_t dim = 16;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 3;
    double lr = 0.025;

    void validate() const {
        if (dim < 1) throw ValueError("skipgram: dim must be >= 1");
        if (window < 1) throw ValueError("skipgram: window must be >= 1");
    }
};

// Skip-gram with negative sampling over the walk corpus. Negatives are
// drawn from the corpus unigram distribution raised to 0.75. Center
// vectors are returned; context vectors are discarded.
inline Tensor train_skipgram(const std::vector<std::vector<NodeId>>& walks,
                             std::size_t num_nodes, const SkipGramConfig& cfg,
                             Rng& rng) {
    cfg.validate();
    std::vector<double> counts(num_nodes, 0.0);
    bool has_pair = false;
    for (const auto& walk : walks) {
        for (NodeId v : walk) counts[v] += 1.0;
        if (walk.size() >= 2) has_pair = true;
    }
    if (!has_pair)
        throw ValueError("skipgram: no (center, context) pairs in the walk corpus");

    std::vector<double> cumulative(num_nodes);
    double total = 0.0;
    for (std::size_t v = 0; v < num_nodes; ++v) {
        if (counts[v] > 0.0) total += std::pow(counts[v], 0.75);
        cumulative[v] = total;
    }
    auto draw_negative = [&]() {
        const double r = rng.uniform01() * total;
        std::size_t lo = 0, hi = num_nodes - 1;
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (cumulative[mid] <= r) lo = mid + 1;
            else hi = mid;
        }
        return static_cast<NodeId>(lo);
    };

    const std::size_t dim = cfg.dim;
    Tensor center(num_nodes, dim);
    std::vector<double> context(num_nodes * dim, 0.0);
    const double span = 1.0 / static_cast<double>(dim);
    for (auto& v : center.data) v = rng.uniform(-0.5 * span, 0.5 * span);

    auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    std::vector<double> accum(dim);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& walk : walks) {
            for (std::size_t i = 0; i < walk.size(); ++i) {
                const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
                const std::size_t hi = std::min(walk.size(), i + cfg.window + 1);
                double* vc = &center.data[walk[i] * dim];
                for (std::size_t j = lo; j < hi; ++j) {
                    if (j == i) continue;
                    std::fill(accum.begin(), accum.end(), 0.0);
                    for (std::size_t neg = 0; neg <= cfg.negatives; ++neg) {
                        const bool positive = neg == 0;
                        const NodeId target = positive ? walk[j] : draw_negative();
                        if (!positive && target == walk[j]) continue;
                        double* u = &context[target * dim];
                        double dot = 0.0;
                        for (std::size_t k = 0; k < dim; ++k) dot += vc[k] * u[k];
                        const double grad =
                            cfg.lr * ((positive ? 1.0 : 0.0) - sigmoid(dot));
                        for (std::size_t k = 0; k < dim; ++k) {
                            accum[k] += grad * u[k];
                            u[k] += grad * vc[k];
                        }
                    }
                    for (std::size_t k = 0; k < dim; ++k) vc[k] += accum[k];
                }
            }
        }
    }
    check_finite(center, "train_skipgram");
    return center;
}

// Walks + skip-gram, packaged with a provenance line for the GCNE container.
inline io::MatrixFile pretrain_embeddings(const Dataset& d, const WalkConfig& wc,
                                          const SkipGramConfig& sc) {
    auto walks = random_walks(d.graph, wc);
    Rng rng = Rng::derive(wc.seed, stream::skipgram);
    io::MatrixFile out;
    out.matrix = train_skipgram(walks, d.graph.num_nodes, sc, rng);
    std::ostringstream prov;
    prov << "node2vec p=" << wc.p << " q=" << wc.q << " walk_length=" << wc.walk_length
         << " walks_per_node=" << wc.walks_per_node << " dim=" << sc.dim
         << " window=" << sc.window << " negatives=" << sc.negatives
         << " epochs=" << sc.epochs << " lr=" << sc.lr << " seed=" << wc.seed;
    out.provenance = prov.str();
    return out;
}

// Softmax-regression probe on fixed inputs; returns test accuracy at the
// best-valid epoch. Measures how much label signal the inputs carry.
inline double linear_probe(const Tensor& inputs, const Dataset& d,
                           std::size_t epochs = 100, double lr = 0.05,
                           std::uint64_t seed = 0) {
    if (inputs.rows != d.graph.num_nodes)
        throw ValueError("linear_probe: input rows must match node count");
    Parameter w("probe.W", inputs.cols, d.num_classes);
    Parameter b("probe.b", 1, d.num_classes);
    Rng rng = Rng::derive(seed, stream::init);
    glorot_uniform(w, rng);
    AdamConfig adam;
    adam.lr = lr;
    double best_valid = -1.0, test_at_best = 0.0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        zero_grad({&w, &b});
        Tape tape;
        Tensor logits = add_row_broadcast(&tape, matmul(&tape, inputs, tape.watch(w)),
                                          tape.watch(b));
        Tensor logp = log_softmax_rows(&tape, logits);
        Tensor loss = nll_loss(&tape, logp, d.labels, d.train_idx);
        tape.backward(loss);
        adam_step({&w, &b}, adam);

        Tensor eval = log_softmax_rows(
            nullptr, add_row_broadcast(nullptr, matmul(nullptr, inputs, w.value), b.value));
        double vm = accuracy(eval, d.labels, d.valid_idx);
        if (vm > best_valid) {
            best_valid = vm;
            test_at_best = accuracy(eval, d.labels, d.test_idx);
        }
    }
    return test_at_best;
}

} // namespace gcnlab
