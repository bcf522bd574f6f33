#pragma once

#include "clclsa/rng.hpp"
#include "clclsa/tensor.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clclsa {

enum class Mode { Train, Eval };

/// Named learnable tensors. Indices are stable for the lifetime of the set.
class ParameterSet {
public:
    std::size_t add(std::string name, Tensor value);

    std::size_t size() const noexcept { return values_.size(); }
    Tensor& value(std::size_t i) { return values_.at(i); }
    const Tensor& value(std::size_t i) const { return values_.at(i); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index(std::string_view name) const; ///< throws InvalidArgument when absent

    std::vector<Tensor> zeros_like() const;
    std::size_t scalar_count() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::map<std::string, std::size_t, std::less<>> lookup_;
};

/// Handle to a node of a Graph.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;
    bool valid() const noexcept { return id != npos; }
};

/// Tape of primitive applications in creation order. Creation order is a
/// topological order, and backward() walks it in reverse, so gradient
/// accumulation order is fixed.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    explicit Graph(Mode mode = Mode::Train) : mode_(mode) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Mode mode() const noexcept { return mode_; }
    bool training() const noexcept { return mode_ == Mode::Train; }

    Var constant(Tensor value);
    /// Leaf bound to params[index]. Repeated calls return the same node.
    Var parameter(const ParameterSet& params, std::size_t index);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient after backward(); zero tensor when the node was not reached.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse sweep from a 1×1 node. Throws ContractError otherwise.
    void backward(Var loss);
    /// ∂loss/∂θ for every parameter of the set, zero for unreached ones.
    std::vector<Tensor> parameter_gradients(const ParameterSet& params) const;

    // For primitive authors.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
    const Tensor& upstream(std::size_t self) const { return nodes_[self].grad; }
    /// grad(target) += g, skipped when target does not require a gradient.
    void accumulate(Var target, const Tensor& g);
    /// Mutable gradient of target, zero-initialised on first use. Only valid
    /// when requires_grad(target).
    Tensor& grad_buffer(Var target);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
        const ParameterSet* owner = nullptr;
        std::size_t param_index = 0;
    };

    Mode mode_;
    std::vector<Node> nodes_;
    std::map<std::pair<const ParameterSet*, std::size_t>, std::size_t> param_nodes_;
};

// ---------------------------------------------------------------------------
// Value-level kernels.

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

/// Uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)).
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, RngStream& rng);
Tensor init_bias(std::size_t width);

// ---------------------------------------------------------------------------
// Differentiable primitives.

Var matmul(Graph& g, Var a, Var b);
/// X·W + bias, bias broadcast over rows.
Var affine(Graph& g, Var x, Var w, Var bias);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);
Var square(Graph& g, Var a);
Var sigmoid(Graph& g, Var x);
Var relu(Graph& g, Var x);
Var softmax_rows(Graph& g, Var x);

/// Inverted dropout. Identity in eval mode or when p == 0.
Var dropout(Graph& g, Var x, double p, RngStream& rng);

struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNormState() = default;
    BatchNormState(std::size_t width, double momentum_ = 0.1, double eps_ = 1e-5);
};

/// Train mode: batch statistics (biased variance), running stats updated by
/// an exponential moving average. Eval mode: running statistics.
Var batch_norm(Graph& g, Var x, Var gamma, Var beta, BatchNormState& state);
/// Same, with the choice between batch and running statistics made by the
/// caller. Running stats are only updated for batch statistics in train mode.
Var batch_norm(Graph& g, Var x, Var gamma, Var beta, BatchNormState& state,
               bool batch_statistics);

/// x[N×D] scaled row-wise by s[N×1].
Var scale_rows(Graph& g, Var x, Var s);
Var concat_cols(Graph& g, std::span<const Var> parts);
Var gather_rows(Graph& g, Var x, std::span<const std::size_t> rows);

/// One contribution to assemble_rows: out[dst] += weight * src[src_row].
struct RowRoute {
    std::size_t src_row;
    std::size_t dst_row;
    double weight;
};
struct RowSource {
    Var source;
    std::vector<RowRoute> routes;
};
/// Builds an rows×cols tensor from weighted rows of several sources.
/// Contributions are added in source order, then route order.
Var assemble_rows(Graph& g, std::size_t rows, std::size_t cols, std::span<const RowSource> sources);

/// Sum of all entries, 1×1.
Var sum(Graph& g, Var x);
/// ln(max(x[j, label_j], floor)) per row, N×1.
Var log_pick(Graph& g, Var probs, std::span<const int> labels, double floor = 1e-12);
/// Σ coefficients[t]·terms[t] over 1×1 terms, accumulated left to right.
Var weighted_sum(Graph& g, std::span<const Var> terms, std::span<const double> coefficients);

} // namespace clclsa
