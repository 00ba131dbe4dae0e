#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gcnlab/error.hpp"
#include "gcnlab/tensor.hpp"

namespace gcnlab {

using NodeId = std::uint32_t;

// Compressed sparse row adjacency. Rows are sorted and duplicate-free;
// optional per-edge weights and features are aligned with col_indices.
// Undirected graphs are stored with both directions present.
struct CsrGraph {
    std::size_t num_nodes = 0;
    std::vector<std::size_t> row_offsets; // length num_nodes + 1
    std::vector<NodeId> col_indices;
    std::vector<double> edge_weights;          // empty or one per edge
    std::vector<double> edge_features;         // empty or num_edges * edge_feature_dim
    std::size_t edge_feature_dim = 0;

    std::size_t num_edges() const { return col_indices.size(); }
    std::size_t degree(NodeId u) const { return row_offsets[u + 1] - row_offsets[u]; }

    const NodeId* neighbors_begin(NodeId u) const { return col_indices.data() + row_offsets[u]; }
    const NodeId* neighbors_end(NodeId u) const { return col_indices.data() + row_offsets[u + 1]; }

    bool has_edge(NodeId u, NodeId v) const {
        return std::binary_search(neighbors_begin(u), neighbors_end(u), v);
    }

    // Enforces the structural invariants; throws ValueError on violation.
    void validate() const {
        if (row_offsets.size() != num_nodes + 1)
            throw ValueError("CsrGraph: row_offsets length must be num_nodes + 1");
        if (row_offsets.front() != 0)
            throw ValueError("CsrGraph: row_offsets[0] must be 0");
        if (row_offsets.back() != col_indices.size())
            throw ValueError("CsrGraph: row_offsets back must equal edge count");
        for (std::size_t i = 0; i + 1 < row_offsets.size(); ++i)
            if (row_offsets[i] > row_offsets[i + 1])
                throw ValueError("CsrGraph: row_offsets must be non-decreasing");
        for (std::size_t u = 0; u < num_nodes; ++u) {
            for (std::size_t e = row_offsets[u]; e < row_offsets[u + 1]; ++e) {
                if (col_indices[e] >= num_nodes)
                    throw ValueError("CsrGraph: column index out of range");
                if (e > row_offsets[u] && col_indices[e] <= col_indices[e - 1])
                    throw ValueError("CsrGraph: row columns must be strictly increasing");
            }
        }
        if (!edge_weights.empty() && edge_weights.size() != col_indices.size())
            throw ValueError("CsrGraph: edge_weights must have one entry per edge");
        if (edge_feature_dim > 0 &&
            edge_features.size() != col_indices.size() * edge_feature_dim)
            throw ValueError("CsrGraph: edge_features must have one row per edge");
        if (edge_feature_dim == 0 && !edge_features.empty())
            throw ValueError("CsrGraph: edge_features present but edge_feature_dim is 0");
    }

    bool is_symmetric() const {
        for (NodeId u = 0; u < num_nodes; ++u)
            for (std::size_t e = row_offsets[u]; e < row_offsets[u + 1]; ++e)
                if (!has_edge(col_indices[e], u)) return false;
        return true;
    }

    bool has_self_loops() const {
        for (NodeId u = 0; u < num_nodes; ++u)
            if (has_edge(u, u)) return true;
        return false;
    }
};

// Builds a CSR graph from directed (src, dst) pairs. Sorts rows, drops
// duplicates (first occurrence wins, so its weight/features survive).
inline CsrGraph build_csr(std::size_t num_nodes,
                          std::vector<std::pair<NodeId, NodeId>> edges,
                          const std::vector<double>* weights = nullptr,
                          const std::vector<double>* features = nullptr,
                          std::size_t feature_dim = 0) {
    for (auto [u, v] : edges)
        if (u >= num_nodes || v >= num_nodes)
            throw ValueError("build_csr: edge endpoint out of range");

    std::vector<std::size_t> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return edges[a] < edges[b];
    });

    CsrGraph g;
    g.num_nodes = num_nodes;
    g.row_offsets.assign(num_nodes + 1, 0);
    g.edge_feature_dim = features ? feature_dim : 0;
    for (std::size_t idx : order) {
        auto [u, v] = edges[idx];
        if (!g.col_indices.empty() && g.row_offsets[u + 1] > g.row_offsets[u]) {
            // skip duplicate of the previous edge within the same row
            std::size_t last = g.col_indices.size() - 1;
            if (g.row_offsets[u + 1] == last + 1 && g.col_indices[last] == v) continue;
        }
        g.col_indices.push_back(v);
        if (weights) g.edge_weights.push_back((*weights)[idx]);
        if (features)
            g.edge_features.insert(g.edge_features.end(),
                                   features->begin() + static_cast<std::ptrdiff_t>(idx * feature_dim),
                                   features->begin() + static_cast<std::ptrdiff_t>((idx + 1) * feature_dim));
        g.row_offsets[u + 1] = g.col_indices.size();
    }
    // turn per-row end positions into offsets
    for (std::size_t i = 1; i <= num_nodes; ++i)
        g.row_offsets[i] = std::max(g.row_offsets[i], g.row_offsets[i - 1]);
    g.validate();
    return g;
}

// Reads "src dst" pairs (0-based) and returns the symmetrized graph:
// each input edge is stored in both directions, duplicates removed.
inline CsrGraph load_edge_list(const std::string& path, std::size_t num_nodes) {
    std::ifstream in(path);
    if (!in) throw IoError("load_edge_list: cannot open " + path);

    std::vector<std::pair<NodeId, NodeId>> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        long long a = -1, b = -1;
        std::string extra;
        if (!(ls >> a >> b) || (ls >> extra))
            throw IoError("load_edge_list: malformed line " + std::to_string(line_no) +
                          " in " + path);
        if (a < 0 || b < 0 ||
            static_cast<std::size_t>(a) >= num_nodes ||
            static_cast<std::size_t>(b) >= num_nodes)
            throw ValueError("load_edge_list: node index out of range on line " +
                             std::to_string(line_no));
        edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
        edges.emplace_back(static_cast<NodeId>(b), static_cast<NodeId>(a));
    }
    return build_csr(num_nodes, std::move(edges));
}

// Adjacency with self-loops added and edges weighted 1/sqrt(d^_i d^_j),
// d^ = degree + 1. This is the propagation operator used by every conv.
struct NormalizedAdjacency {
    CsrGraph graph; // edge_weights always present

    std::size_t num_nodes() const { return graph.num_nodes; }
};

// Symmetric normalization of (A + I). Input must be symmetric and loop-free.
inline NormalizedAdjacency symmetric_normalize(const CsrGraph& g) {
    g.validate();
    if (g.has_self_loops())
        throw ValueError("symmetric_normalize: input must not contain self-loops");
    if (!g.is_symmetric())
        throw ValueError("symmetric_normalize: input graph must be symmetric");

    std::vector<double> inv_sqrt(g.num_nodes);
    for (NodeId u = 0; u < g.num_nodes; ++u)
        inv_sqrt[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u)) + 1.0);

    CsrGraph out;
    out.num_nodes = g.num_nodes;
    out.row_offsets.assign(g.num_nodes + 1, 0);
    out.col_indices.reserve(g.num_edges() + g.num_nodes);
    out.edge_weights.reserve(g.num_edges() + g.num_nodes);
    for (NodeId u = 0; u < g.num_nodes; ++u) {
        bool loop_placed = false;
        for (std::size_t e = g.row_offsets[u]; e < g.row_offsets[u + 1]; ++e) {
            NodeId v = g.col_indices[e];
            if (!loop_placed && v > u) {
                out.col_indices.push_back(u);
                out.edge_weights.push_back(inv_sqrt[u] * inv_sqrt[u]);
                loop_placed = true;
            }
            out.col_indices.push_back(v);
            out.edge_weights.push_back(inv_sqrt[u] * inv_sqrt[v]);
        }
        if (!loop_placed) {
            out.col_indices.push_back(u);
            out.edge_weights.push_back(inv_sqrt[u] * inv_sqrt[u]);
        }
        out.row_offsets[u + 1] = out.col_indices.size();
    }
    out.validate();
    return NormalizedAdjacency{std::move(out)};
}

// Result of extracting a node-induced subgraph. `new_id_of_old` maps global
// node ids to local ids (-1 when absent); `old_id_of_new` is its inverse.
struct Subgraph {
    CsrGraph graph;
    std::vector<std::int64_t> new_id_of_old;
    std::vector<NodeId> old_id_of_new;
};

// Keeps exactly the edges with both endpoints in `nodes`. Local ids follow
// the order of `nodes`; edge weights/features carry over.
inline Subgraph induced_subgraph(const CsrGraph& g, const std::vector<NodeId>& nodes) {
    Subgraph s;
    s.new_id_of_old.assign(g.num_nodes, -1);
    s.old_id_of_new = nodes;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i] >= g.num_nodes)
            throw ValueError("induced_subgraph: node out of range");
        if (s.new_id_of_old[nodes[i]] != -1)
            throw ValueError("induced_subgraph: duplicate node in selection");
        s.new_id_of_old[nodes[i]] = static_cast<std::int64_t>(i);
    }

    std::vector<std::pair<NodeId, NodeId>> edges;
    std::vector<double> weights;
    std::vector<double> features;
    bool has_w = !g.edge_weights.empty();
    std::size_t fd = g.edge_feature_dim;
    for (NodeId u : nodes) {
        std::int64_t lu = s.new_id_of_old[u];
        for (std::size_t e = g.row_offsets[u]; e < g.row_offsets[u + 1]; ++e) {
            std::int64_t lv = s.new_id_of_old[g.col_indices[e]];
            if (lv < 0) continue;
            edges.emplace_back(static_cast<NodeId>(lu), static_cast<NodeId>(lv));
            if (has_w) weights.push_back(g.edge_weights[e]);
            if (fd > 0)
                features.insert(features.end(),
                                g.edge_features.begin() + static_cast<std::ptrdiff_t>(e * fd),
                                g.edge_features.begin() + static_cast<std::ptrdiff_t>((e + 1) * fd));
        }
    }
    s.graph = build_csr(nodes.size(), std::move(edges),
                        has_w ? &weights : nullptr,
                        fd > 0 ? &features : nullptr, fd);
    return s;
}

// Node features from edge features: row i is the sum over edges incident
// to i (i.e. the out-entries of CSR row i; symmetric storage makes that
// every incident edge once).
inline Tensor aggregate_edge_features(const CsrGraph& g) {
    if (g.edge_feature_dim == 0)
        throw ValueError("aggregate_edge_features: graph has no edge features");
    Tensor out(g.num_nodes, g.edge_feature_dim, 0.0);
    for (NodeId u = 0; u < g.num_nodes; ++u)
        for (std::size_t e = g.row_offsets[u]; e < g.row_offsets[u + 1]; ++e)
            for (std::size_t d = 0; d < g.edge_feature_dim; ++d)
                out(u, d) += g.edge_features[e * g.edge_feature_dim + d];
    return out;
}

} // namespace gcnlab
