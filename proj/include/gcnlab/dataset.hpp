#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gcnlab/error.hpp"
#include "gcnlab/graph.hpp"
#include "gcnlab/tensor.hpp"

namespace gcnlab {

// Node-classification task bundle: graph + features X + integer labels
// (-1 = unlabeled) + disjoint train/valid/test index sets.
struct Dataset {
    CsrGraph graph;
    Tensor features;                 // num_nodes x d
    std::vector<std::int64_t> labels; // length num_nodes, values in [-1, num_classes)
    std::size_t num_classes = 0;
    std::vector<NodeId> train_idx;
    std::vector<NodeId> valid_idx;
    std::vector<NodeId> test_idx;

    std::size_t num_nodes() const { return graph.num_nodes; }
    std::size_t feature_dim() const { return features.cols; }

    void validate() const {
        graph.validate();
        if (features.rows != graph.num_nodes)
            throw ValueError("Dataset: feature row count must equal num_nodes");
        if (labels.size() != graph.num_nodes)
            throw ValueError("Dataset: one label per node required");
        for (std::int64_t y : labels)
            if (y < -1 || y >= static_cast<std::int64_t>(num_classes))
                throw ValueError("Dataset: label out of range for num_classes");
        std::vector<std::uint8_t> seen(graph.num_nodes, 0);
        auto check_split = [&](const std::vector<NodeId>& split, const char* name) {
            for (NodeId i : split) {
                if (i >= graph.num_nodes)
                    throw ValueError(std::string("Dataset: ") + name + " index out of range");
                if (seen[i]++)
                    throw ValueError(std::string("Dataset: splits overlap at node ") +
                                     std::to_string(i));
            }
        };
        check_split(train_idx, "train");
        check_split(valid_idx, "valid");
        check_split(test_idx, "test");
        for (NodeId i : train_idx)
            if (labels[i] == -1)
                throw ValueError("Dataset: train node " + std::to_string(i) + " is unlabeled");
    }
};

namespace detail {
inline std::vector<NodeId> read_index_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_index_file: cannot open " + path);
    std::vector<NodeId> idx;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue; // blank line
        const std::size_t b = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(a, b - a + 1);
        const std::string where = path + " line " + std::to_string(lineno);
        long long v = 0;
        std::size_t used = 0;
        try {
            v = std::stoll(tok, &used);
        } catch (const std::exception&) {
            throw ValueError("read_index_file: malformed index '" + tok + "' at " + where);
        }
        if (used != tok.size())
            throw ValueError("read_index_file: malformed index '" + tok + "' at " + where);
        if (v < 0) throw ValueError("read_index_file: negative index at " + where);
        idx.push_back(static_cast<NodeId>(v));
    }
    return idx;
}
} // namespace detail

// Alternative split source: three text files with one node index per line.
inline void load_splits_from_files(Dataset& d, const std::string& train_path,
                                   const std::string& valid_path,
                                   const std::string& test_path) {
    d.train_idx = detail::read_index_file(train_path);
    d.valid_idx = detail::read_index_file(valid_path);
    d.test_idx = detail::read_index_file(test_path);
    d.validate();
}

} // namespace gcnlab
