#pragma once

#include <algorithm>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/graph.hpp"
#include "gcnlab/rng.hpp"

namespace gcnlab {

enum class SamplerKind { full_batch, random_subgraph, neighbor, saint_rw };

inline SamplerKind sampler_from_string(const std::string& s) {
    if (s == "full_batch") return SamplerKind::full_batch;
    if (s == "random_subgraph") return SamplerKind::random_subgraph;
    if (s == "neighbor") return SamplerKind::neighbor;
    if (s == "saint_rw") return SamplerKind::saint_rw;
    throw ValueError("unknown sampler '" + s + "'");
}

inline std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::full_batch: return "full_batch";
        case SamplerKind::random_subgraph: return "random_subgraph";
        case SamplerKind::neighbor: return "neighbor";
        default: return "saint_rw";
    }
}

struct SamplerConfig {
    SamplerKind kind = SamplerKind::full_batch;
    std::size_t batch_nodes = 0;          // random_subgraph: train nodes per chunk
    std::size_t batch_size = 0;           // neighbor / saint_rw: targets per batch
    std::vector<std::size_t> fanouts;     // neighbor: per-hop cap
    std::size_t walk_length = 2;          // saint_rw roots walk this many steps
};

// One training unit: an induced, renormalized subgraph plus the local
// positions whose loss counts.
struct Batch {
    NormalizedAdjacency adj;
    Tensor features;
    std::vector<std::int64_t> labels;
    std::vector<NodeId> targets;          // local ids, sorted
    std::vector<NodeId> global_of_local;
};

namespace detail {

inline Batch batch_from_selection(const Dataset& d, std::vector<NodeId> selection,
                                  const std::vector<NodeId>& global_targets) {
    std::sort(selection.begin(), selection.end());
    Subgraph sub = induced_subgraph(d.graph, selection);
    Batch b;
    b.adj = symmetric_normalize(sub.graph);
    b.global_of_local = sub.old_id_of_new;
    b.features = Tensor(selection.size(), d.features.cols);
    b.labels.resize(selection.size());
    for (std::size_t i = 0; i < selection.size(); ++i) {
        NodeId g = sub.old_id_of_new[i];
        std::copy_n(&d.features.data[g * d.features.cols], d.features.cols,
                    &b.features.data[i * d.features.cols]);
        b.labels[i] = d.labels[g];
    }
    for (NodeId g : global_targets)
        b.targets.push_back(static_cast<NodeId>(sub.new_id_of_old[g]));
    std::sort(b.targets.begin(), b.targets.end());
    return b;
}

// Shuffled copy of the train split cut into chunks of `size` (0 = one chunk).
inline std::vector<std::vector<NodeId>> train_chunks(const Dataset& d,
                                                     std::size_t size, Rng& rng) {
    std::vector<NodeId> order = d.train_idx;
    if (size > order.size())
        throw ValueError("sampler: batch size " + std::to_string(size) +
                         " exceeds train split of " + std::to_string(order.size()));
    rng.shuffle(order);
    if (size == 0) size = order.size();
    std::vector<std::vector<NodeId>> chunks;
    for (std::size_t i = 0; i < order.size(); i += size) {
        std::size_t end = std::min(order.size(), i + size);
        std::vector<NodeId> chunk(order.begin() + i, order.begin() + end);
        std::sort(chunk.begin(), chunk.end());
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

inline std::vector<NodeId> one_hop_closure(const CsrGraph& g,
                                           const std::vector<NodeId>& chunk) {
    std::vector<char> in_set(g.num_nodes, 0);
    for (NodeId u : chunk) in_set[u] = 1;
    for (NodeId u : chunk)
        for (std::size_t e = g.row_offsets[u]; e < g.row_offsets[u + 1]; ++e)
            in_set[g.col_indices[e]] = 1;
    std::vector<NodeId> selection;
    for (NodeId v = 0; v < g.num_nodes; ++v)
        if (in_set[v]) selection.push_back(v);
    return selection;
}

} // namespace detail

// GraphSAGE-style layered sampling: hop l keeps at most fanouts[l] uniformly
// chosen neighbors per frontier node, without replacement. The batch
// propagates only over the sampled edges, renormalized symmetrically.
inline Batch neighbor_sample(const Dataset& d, const std::vector<NodeId>& targets,
                             const std::vector<std::size_t>& fanouts, Rng& rng) {
    if (targets.empty()) throw ValueError("neighbor_sample: empty target set");
    for (std::size_t f : fanouts)
        if (f == 0) throw ValueError("neighbor_sample: fanouts must be positive");
    const CsrGraph& g = d.graph;
    std::vector<char> seen(g.num_nodes, 0);
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::vector<NodeId> frontier = targets;
    for (NodeId u : frontier) seen[u] = 1;
    for (std::size_t fanout : fanouts) {
        std::vector<NodeId> next;
        for (NodeId u : frontier) {
            std::size_t deg = g.degree(u);
            std::vector<NodeId> nbrs(g.col_indices.begin() + g.row_offsets[u],
                                     g.col_indices.begin() + g.row_offsets[u + 1]);
            std::size_t keep = std::min(fanout, deg);
            for (std::size_t i = 0; i < keep; ++i) {
                std::size_t j = i + rng.uniform_int(deg - i);
                std::swap(nbrs[i], nbrs[j]);
            }
            for (std::size_t i = 0; i < keep; ++i) {
                NodeId v = nbrs[i];
                edges.emplace_back(u, v);
                edges.emplace_back(v, u);
                if (!seen[v]) {
                    seen[v] = 1;
                    next.push_back(v);
                }
            }
        }
        frontier = std::move(next);
    }

    std::vector<NodeId> selection;
    for (NodeId v = 0; v < g.num_nodes; ++v)
        if (seen[v]) selection.push_back(v);
    Subgraph sub{CsrGraph{}, std::vector<std::int64_t>(g.num_nodes, -1), selection};
    for (std::size_t i = 0; i < selection.size(); ++i)
        sub.new_id_of_old[selection[i]] = static_cast<std::int64_t>(i);
    std::vector<std::pair<NodeId, NodeId>> local_edges;
    local_edges.reserve(edges.size());
    for (auto [u, v] : edges)
        local_edges.emplace_back(static_cast<NodeId>(sub.new_id_of_old[u]),
                                 static_cast<NodeId>(sub.new_id_of_old[v]));
    sub.graph = build_csr(selection.size(), local_edges);

    Batch b;
    b.adj = symmetric_normalize(sub.graph);
    b.global_of_local = selection;
    b.features = Tensor(selection.size(), d.features.cols);
    b.labels.resize(selection.size());
    for (std::size_t i = 0; i < selection.size(); ++i) {
        NodeId gid = selection[i];
        std::copy_n(&d.features.data[gid * d.features.cols], d.features.cols,
                    &b.features.data[i * d.features.cols]);
        b.labels[i] = d.labels[gid];
    }
    for (NodeId t : targets)
        b.targets.push_back(static_cast<NodeId>(sub.new_id_of_old[t]));
    std::sort(b.targets.begin(), b.targets.end());
    return b;
}

// Batches for one epoch. Deterministic in (seed, epoch): the partition draws
// from sub-stream (epoch, 0) and batch i from (epoch, i+1).
inline std::vector<Batch> build_batches(const Dataset& d, const SamplerConfig& cfg,
                                        std::uint64_t seed, std::uint64_t epoch) {
    std::vector<Batch> batches;
    switch (cfg.kind) {
        case SamplerKind::full_batch: {
            Batch b;
            b.adj = symmetric_normalize(d.graph);
            b.features = d.features;
            b.labels = d.labels;
            b.targets = d.train_idx;
            b.global_of_local.resize(d.graph.num_nodes);
            for (NodeId v = 0; v < d.graph.num_nodes; ++v) b.global_of_local[v] = v;
            batches.push_back(std::move(b));
            break;
        }
        case SamplerKind::random_subgraph: {
            Rng part = Rng::derive(seed, stream::sampler, epoch, 0);
            auto chunks = detail::train_chunks(d, cfg.batch_nodes, part);
            for (const auto& chunk : chunks)
                batches.push_back(detail::batch_from_selection(
                    d, detail::one_hop_closure(d.graph, chunk), chunk));
            break;
        }
        case SamplerKind::neighbor: {
            Rng part = Rng::derive(seed, stream::sampler, epoch, 0);
            auto chunks = detail::train_chunks(d, cfg.batch_size, part);
            for (std::size_t i = 0; i < chunks.size(); ++i) {
                Rng rng = Rng::derive(seed, stream::sampler, epoch, i + 1);
                batches.push_back(neighbor_sample(d, chunks[i], cfg.fanouts, rng));
            }
            break;
        }
        case SamplerKind::saint_rw: {
            Rng part = Rng::derive(seed, stream::sampler, epoch, 0);
            auto chunks = detail::train_chunks(d, cfg.batch_size, part);
            for (std::size_t i = 0; i < chunks.size(); ++i) {
                Rng rng = Rng::derive(seed, stream::sampler, epoch, i + 1);
                std::vector<char> in_set(d.graph.num_nodes, 0);
                for (NodeId u : chunks[i]) in_set[u] = 1;
                for (NodeId root : chunks[i]) {
                    NodeId cur = root;
                    for (std::size_t step = 0; step < cfg.walk_length; ++step) {
                        std::size_t deg = d.graph.degree(cur);
                        if (deg == 0) break;
                        cur = d.graph.col_indices[d.graph.row_offsets[cur] +
                                                  rng.uniform_int(deg)];
                        in_set[cur] = 1;
                    }
                }
                std::vector<NodeId> selection;
                for (NodeId v = 0; v < d.graph.num_nodes; ++v)
                    if (in_set[v]) selection.push_back(v);
                batches.push_back(detail::batch_from_selection(d, selection, chunks[i]));
            }
            break;
        }
    }
    return batches;
}

} // namespace gcnlab
