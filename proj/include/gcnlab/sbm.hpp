#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gcnlab/dataset.hpp"
#include "gcnlab/rng.hpp"

namespace gcnlab {

// Planted-partition benchmark generator. Labels are block ids; features are
// feature_signal * (orthogonal unit class mean) + (1 - feature_signal) * N(0,1)
// noise, so feature_signal dials how much the features alone reveal.
// Splits are 60/20/20, stratified per class. Deterministic given seed.
inline Dataset generate_sbm(const std::vector<std::size_t>& block_sizes,
                            double p_in, double p_out,
                            std::size_t feature_dim, double feature_signal,
                            std::uint64_t seed) {
    if (block_sizes.empty())
        throw ValueError("generate_sbm: need at least one block");
    for (std::size_t b : block_sizes)
        if (b == 0) throw ValueError("generate_sbm: blocks must be non-empty");
    if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
        throw ValueError("generate_sbm: probabilities must lie in [0,1]");
    if (feature_signal < 0.0 || feature_signal > 1.0)
        throw ValueError("generate_sbm: feature_signal must lie in [0,1]");
    if (feature_dim < block_sizes.size())
        throw ValueError("generate_sbm: feature_dim must be >= number of blocks "
                         "(orthogonal class means)");

    std::size_t n = std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
    std::vector<std::int64_t> labels(n);
    {
        std::size_t at = 0;
        for (std::size_t c = 0; c < block_sizes.size(); ++c)
            for (std::size_t k = 0; k < block_sizes[c]; ++k)
                labels[at++] = static_cast<std::int64_t>(c);
    }

    // Edges: one Bernoulli draw per unordered pair, stored both ways.
    Rng edge_rng = Rng::derive(seed, stream::sbm, 1);
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double p = (labels[i] == labels[j]) ? p_in : p_out;
            if (edge_rng.uniform01() < p) {
                edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
                edges.emplace_back(static_cast<NodeId>(j), static_cast<NodeId>(i));
            }
        }
    }

    Dataset d;
    d.graph = build_csr(n, std::move(edges));
    d.num_classes = block_sizes.size();
    d.labels = std::move(labels);

    // Class means are the first num_classes basis vectors (orthonormal).
    Rng feat_rng = Rng::derive(seed, stream::sbm, 2);
    d.features = Tensor(n, feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = static_cast<std::size_t>(d.labels[i]);
        for (std::size_t k = 0; k < feature_dim; ++k) {
            double noise = feat_rng.normal();
            double mean = (k == c) ? 1.0 : 0.0;
            d.features(i, k) = feature_signal * mean + (1.0 - feature_signal) * noise;
        }
    }

    // Stratified 60/20/20 split.
    Rng split_rng = Rng::derive(seed, stream::split);
    for (std::size_t c = 0; c < d.num_classes; ++c) {
        std::vector<NodeId> members;
        for (std::size_t i = 0; i < n; ++i)
            if (d.labels[i] == static_cast<std::int64_t>(c))
                members.push_back(static_cast<NodeId>(i));
        split_rng.shuffle(members);
        std::size_t n_train = (members.size() * 6) / 10;
        std::size_t n_valid = (members.size() * 2) / 10;
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (k < n_train) d.train_idx.push_back(members[k]);
            else if (k < n_train + n_valid) d.valid_idx.push_back(members[k]);
            else d.test_idx.push_back(members[k]);
        }
    }
    std::sort(d.train_idx.begin(), d.train_idx.end());
    std::sort(d.valid_idx.begin(), d.valid_idx.end());
    std::sort(d.test_idx.begin(), d.test_idx.end());

    d.validate();
    return d;
}

} // namespace gcnlab
