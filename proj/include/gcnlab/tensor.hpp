#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gcnlab/error.hpp"

namespace gcnlab {

// Dense row-major matrix of doubles. `node` links the value to a tape entry
// when it was produced under gradient recording; -1 means plain data.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    int node = -1;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> values)
        : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols)
            throw ValueError("Tensor: data length does not match shape");
    }

    std::size_t size() const { return rows * cols; }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_str(const Tensor& t) {
    return "(" + std::to_string(t.rows) + "x" + std::to_string(t.cols) + ")";
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ValueError(std::string(op) + ": shape mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
}

// Max absolute elementwise difference; shapes must already agree.
inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

} // namespace gcnlab
