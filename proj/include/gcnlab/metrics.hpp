#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gcnlab/error.hpp"
#include "gcnlab/graph.hpp"
#include "gcnlab/tensor.hpp"

namespace gcnlab {

enum class Metric { accuracy, rocauc };

inline Metric metric_from_string(const std::string& s) {
    if (s == "accuracy") return Metric::accuracy;
    if (s == "rocauc") return Metric::rocauc;
    throw ValueError("unknown metric '" + s + "' (expected accuracy or rocauc)");
}

inline std::string to_string(Metric m) {
    return m == Metric::accuracy ? "accuracy" : "rocauc";
}

// Fraction of split rows whose argmax column equals the label. Ties go to
// the lowest column index.
inline double accuracy(const Tensor& pred, const std::vector<std::int64_t>& labels,
                       const std::vector<NodeId>& split) {
    if (split.empty()) throw ValueError("accuracy: empty split");
    std::size_t correct = 0;
    for (NodeId i : split) {
        if (i >= pred.rows) throw ValueError("accuracy: split index out of range");
        std::size_t best = 0;
        for (std::size_t j = 1; j < pred.cols; ++j)
            if (pred(i, j) > pred(i, best)) best = j;
        if (static_cast<std::int64_t>(best) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

// Rank-based binary ROC-AUC with midranks for ties. Equals the fraction of
// (positive, negative) pairs ordered correctly, ties counting 1/2. The
// numerator below is a half-integer computed exactly in doubles (all
// intermediate values are far below 2^53), so the result is the correctly
// rounded value of the underlying rational number.
inline double roc_auc_binary(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    if (labels.size() != n) throw ValueError("roc_auc: scores/labels length mismatch");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double rank_sum_pos = 0.0;
    std::uint64_t n1 = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k] != 0) {
            rank_sum_pos += rank[k];
            ++n1;
        }
    const std::uint64_t n0 = n - n1;
    if (n1 == 0 || n0 == 0)
        throw ValueError("roc_auc: split contains a single class");
    const double numerator =
        rank_sum_pos - static_cast<double>(n1 * (n1 + 1) / 2);
    return numerator / (static_cast<double>(n1) * static_cast<double>(n0));
}

// One-vs-rest AUC per class column averaged over columns. Rankings are
// invariant under the monotone map from log-probabilities to probabilities,
// so either may be passed.
inline double roc_auc(const Tensor& pred, const std::vector<std::int64_t>& labels,
                      const std::vector<NodeId>& split) {
    if (split.empty()) throw ValueError("roc_auc: empty split");
    double total = 0.0;
    for (std::size_t c = 0; c < pred.cols; ++c) {
        std::vector<double> scores;
        std::vector<int> bin;
        scores.reserve(split.size());
        bin.reserve(split.size());
        for (NodeId i : split) {
            scores.push_back(pred(i, c));
            bin.push_back(labels[i] == static_cast<std::int64_t>(c) ? 1 : 0);
        }
        total += roc_auc_binary(scores, bin);
    }
    return total / static_cast<double>(pred.cols);
}

inline double evaluate_metric(Metric m, const Tensor& pred,
                              const std::vector<std::int64_t>& labels,
                              const std::vector<NodeId>& split) {
    return m == Metric::accuracy ? accuracy(pred, labels, split)
                                 : roc_auc(pred, labels, split);
}

} // namespace gcnlab
