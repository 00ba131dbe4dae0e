#pragma once

// Shared graph fixtures for unit and acceptance tests. Everything here is
// deterministic; the fixture set is the collection the propagation oracles
// run against.

#include <cstdint>
#include <utility>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/graph.hpp"
#include "gcnlab/rng.hpp"
#include "gcnlab/sbm.hpp"

namespace fixtures {

using gcnlab::CsrGraph;
using gcnlab::NodeId;

inline CsrGraph from_undirected(std::size_t n,
                                const std::vector<std::pair<NodeId, NodeId>>& und) {
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (auto [u, v] : und) {
        edges.emplace_back(u, v);
        edges.emplace_back(v, u);
    }
    return gcnlab::build_csr(n, std::move(edges));
}

inline CsrGraph path_graph(std::size_t n) {
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return from_undirected(n, e);
}

inline CsrGraph cycle_graph(std::size_t n) {
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId i = 0; i < n; ++i) e.emplace_back(i, static_cast<NodeId>((i + 1) % n));
    return from_undirected(n, e);
}

inline CsrGraph complete_graph(std::size_t n) {
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j) e.emplace_back(i, j);
    return from_undirected(n, e);
}

inline CsrGraph star_graph(std::size_t n) {
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId i = 1; i < n; ++i) e.emplace_back(0, i);
    return from_undirected(n, e);
}

inline CsrGraph triangle() { return cycle_graph(3); }

inline CsrGraph isolated_nodes(std::size_t n) { return from_undirected(n, {}); }

// Erdos-Renyi draw, symmetrized, deterministic.
inline CsrGraph random_graph(std::size_t n, double p, std::uint64_t seed) {
    gcnlab::Rng rng(seed);
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j)
            if (rng.uniform01() < p) e.emplace_back(i, j);
    return from_undirected(n, e);
}

// The fixed 20-node connected non-bipartite instance used by the
// over-smoothing probe: a 20-cycle plus the chord (0,2) forming a triangle.
// Wheel: hub 0 plus a 19-node rim cycle. Connected, fast-mixing, so deep
// plain-GCN propagation visibly flattens node representations.
inline CsrGraph probe_graph_20() {
    std::vector<std::pair<NodeId, NodeId>> e;
    for (NodeId i = 1; i < 20; ++i) {
        e.emplace_back(0, i);
        e.emplace_back(i, static_cast<NodeId>(i == 19 ? 1 : i + 1));
    }
    return from_undirected(20, e);
}

// All graphs (<= 50 nodes) the dense propagation oracles must agree on.
inline std::vector<CsrGraph> oracle_fixture_set() {
    std::vector<CsrGraph> set;
    set.push_back(path_graph(2));
    set.push_back(path_graph(5));
    set.push_back(triangle());
    set.push_back(cycle_graph(6));
    set.push_back(star_graph(7));
    set.push_back(complete_graph(5));
    set.push_back(isolated_nodes(4));
    set.push_back(probe_graph_20());
    set.push_back(random_graph(12, 0.3, 11));
    set.push_back(random_graph(30, 0.15, 22));
    set.push_back(random_graph(50, 0.08, 33));
    // a graph with isolated nodes mixed in
    set.push_back(from_undirected(8, {{0, 1}, {1, 2}, {4, 5}}));
    return set;
}

// Reference desk-scale dataset used across training tests.
inline gcnlab::Dataset reference_sbm(double feature_signal = 0.5,
                                     std::uint64_t seed = 7,
                                     std::size_t feature_dim = 16) {
    return gcnlab::generate_sbm({200, 200}, 0.1, 0.01, feature_dim, feature_signal, seed);
}

// Small labeled dataset over an arbitrary fixture graph (for C&S oracles).
inline gcnlab::Dataset toy_dataset(const CsrGraph& g, std::size_t num_classes,
                                   std::uint64_t seed) {
    gcnlab::Dataset d;
    d.graph = g;
    d.num_classes = num_classes;
    std::size_t n = g.num_nodes;
    gcnlab::Rng rng(seed);
    d.labels.resize(n);
    for (auto& y : d.labels)
        y = static_cast<std::int64_t>(rng.uniform_int(num_classes));
    d.features = gcnlab::Tensor(n, 4);
    for (auto& v : d.features.data) v = rng.normal();
    for (NodeId i = 0; i < n; ++i) {
        switch (i % 3) {
            case 0: d.train_idx.push_back(i); break;
            case 1: d.valid_idx.push_back(i); break;
            default: d.test_idx.push_back(i); break;
        }
    }
    d.validate();
    return d;
}

} // namespace fixtures
