#pragma once

#include "rrr/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rrr {

enum class Op : std::uint8_t {
    leaf,
    add,
    sub,
    mul,
    div,
    matmul,
    relu,
    exp,
    log,
    square,
    abs,
    sign,
    step,
    max_mask,
    sum,
    max,
    scale,
    stop_gradient,
};

const char* op_name(Op op);

/// Handle to a node; valid only against the graph that issued it.
struct VarId {
    std::uint64_t graph = 0;
    std::int32_t node = -1;
    bool valid() const { return node >= 0; }
};

/// Append-only tape of recorded operations. Node values are computed eagerly
/// as nodes are recorded; parents always precede children. A graph is
/// single-threaded and meant to live for one forward/backward cycle.
class Graph {
public:
    Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    VarId leaf(Tensor value);

    VarId record(Op op, VarId a, VarId b, int axis, double factor);

    const Tensor& value(VarId id) const { return nodes_[check(id)].value; }
    Op op(VarId id) const { return nodes_[check(id)].op; }
    std::uint64_t id() const { return graph_id_; }
    Index size() const { return static_cast<Index>(nodes_.size()); }

    struct Node {
        Op op;
        std::int32_t a = -1;
        std::int32_t b = -1;
        std::int8_t axis = -1;
        double factor = 0.0;
        Tensor value;
    };
    const Node& node(std::int32_t i) const { return nodes_[static_cast<size_t>(i)]; }

    std::int32_t check(VarId id) const;

private:
    std::vector<Node> nodes_;
    std::uint64_t graph_id_;
};

// Recorded ops. Each validates operand shapes and caches the result tensor.
VarId add(Graph& g, VarId a, VarId b);
VarId sub(Graph& g, VarId a, VarId b);
VarId mul(Graph& g, VarId a, VarId b);
VarId div(Graph& g, VarId a, VarId b);
VarId matmul(Graph& g, VarId a, VarId b, bool trans_a = false, bool trans_b = false);
VarId relu(Graph& g, VarId x);
VarId exp(Graph& g, VarId x);
VarId log(Graph& g, VarId x);
VarId square(Graph& g, VarId x);
VarId abs(Graph& g, VarId x);
VarId sign(Graph& g, VarId x);
VarId step(Graph& g, VarId x);
VarId scale(Graph& g, VarId x, double s);
VarId neg(Graph& g, VarId x);
VarId sum(Graph& g, VarId x, int axis = -1);
VarId max_over(Graph& g, VarId x, int axis);
VarId stop_gradient(Graph& g, VarId x);

/// d(output)/d(wrt) for a scalar output, as plain tensors. Unreachable nodes
/// get exact zeros.
std::vector<Tensor> backward(Graph& g, VarId output, std::span<const VarId> wrt);

/// Same, but the backward pass is recorded so its results can be
/// differentiated again (reverse-over-reverse).
std::vector<VarId> backward_recorded(Graph& g, VarId output, std::span<const VarId> wrt);

inline Tensor backward_one(Graph& g, VarId output, VarId wrt) {
    const VarId w[1] = {wrt};
    return backward(g, output, w)[0];
}
inline VarId backward_recorded_one(Graph& g, VarId output, VarId wrt) {
    const VarId w[1] = {wrt};
    return backward_recorded(g, output, w)[0];
}

/// Central-difference gradient of a scalar function, (f(x+h e_i) - f(x-h e_i)) / 2h.
Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

/// Central differences over a parameter list (gradient-check oracle).
std::vector<Tensor> finite_difference_params(
    const std::function<double(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& params, double h);

}  // namespace rrr
