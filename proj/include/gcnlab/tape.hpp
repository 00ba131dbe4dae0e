#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gcnlab/error.hpp"
#include "gcnlab/tensor.hpp"

namespace gcnlab {

// Learnable tensor with its gradient accumulator and Adam state.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> grad;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    long step_count = 0;

    Parameter() = default;
    Parameter(std::string n, std::size_t rows, std::size_t cols)
        : name(std::move(n)), value(rows, cols),
          grad(rows * cols, 0.0), adam_m(rows * cols, 0.0), adam_v(rows * cols, 0.0) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Scale/shift plus running statistics for normalization layers.
// gamma/beta are per-feature; running stats are only used by batch norm
// in inference mode. Variance is the biased (population) estimator.
struct NormParams {
    Parameter gamma;
    Parameter beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.9;

    NormParams() = default;
    NormParams(const std::string& prefix, std::size_t dim)
        : gamma(prefix + ".gamma", 1, dim), beta(prefix + ".beta", 1, dim),
          running_mean(dim, 0.0), running_var(dim, 1.0) {
        std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
    }

    std::size_t dim() const { return gamma.value.cols; }
};

// Records forward operations; backward() replays them in exact reverse
// order. Single-threaded by construction. Gradients land in the grad
// buffers of watched Parameters; calling backward twice accumulates.
class Tape {
public:
    // A backward rule reads grad(self) and scatters into parents' buffers.
    using BackwardFn = std::function<void(Tape&, int self)>;

    int add_node(std::size_t rows, std::size_t cols, BackwardFn fn) {
        nodes_.push_back(Node{rows, cols, std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Registers a parameter leaf (cached: one node per parameter per tape).
    Tensor watch(Parameter& p) {
        auto it = watched_.find(&p);
        int id;
        if (it != watched_.end()) {
            id = it->second;
        } else {
            id = add_node(p.value.rows, p.value.cols, BackwardFn{});
            watched_.emplace(&p, id);
            bindings_.emplace_back(&p, id);
        }
        Tensor t = p.value;
        t.node = id;
        return t;
    }

    // Marks a plain tensor (e.g. a perturbed input) as differentiable.
    Tensor watch_input(const Tensor& x) {
        Tensor t = x;
        t.node = add_node(x.rows, x.cols, BackwardFn{});
        return t;
    }

    // Reverse sweep from a scalar loss. Parameter gradients accumulate;
    // internal node gradients are recomputed fresh each call.
    void backward(const Tensor& loss) {
        if (loss.rows != 1 || loss.cols != 1)
            throw ValueError("backward: loss must be a 1x1 scalar");
        if (loss.node < 0)
            throw ValueError("backward: loss is not on the tape");
        grads_.resize(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            grads_[i].assign(nodes_[i].rows * nodes_[i].cols, 0.0);
        grads_[static_cast<std::size_t>(loss.node)][0] = 1.0;
        for (int id = loss.node; id >= 0; --id)
            if (nodes_[static_cast<std::size_t>(id)].backward)
                nodes_[static_cast<std::size_t>(id)].backward(*this, id);
        for (auto& [p, id] : bindings_) {
            auto& g = grads_[static_cast<std::size_t>(id)];
            for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
        }
    }

    // Gradient buffer of a node; valid during/after backward().
    std::vector<double>& grad_buf(int id) { return grads_[static_cast<std::size_t>(id)]; }

    // Gradient of a tracked tensor after backward().
    const std::vector<double>& grad(const Tensor& t) const {
        if (t.node < 0 || static_cast<std::size_t>(t.node) >= grads_.size())
            throw ValueError("Tape::grad: tensor is not tracked on this tape");
        return grads_[static_cast<std::size_t>(t.node)];
    }

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        std::size_t rows, cols;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::unordered_map<Parameter*, int> watched_;
    std::vector<std::pair<Parameter*, int>> bindings_;
};

// Test-mode switch: when on, every op asserts its output is finite.
inline bool& finite_checks() {
    static bool enabled = false;
    return enabled;
}

inline void check_finite(const Tensor& t, const char* op) {
    if (finite_checks() && !t.all_finite())
        throw NumericError(std::string(op) + " produced a non-finite value");
}

} // namespace gcnlab
