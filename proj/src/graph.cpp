#include "rrr/graph.hpp"

#include <atomic>
#include <optional>

namespace rrr {

namespace {
std::atomic<std::uint64_t> g_graph_counter{1};
}

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::div: return "div";
        case Op::matmul: return "matmul";
        case Op::relu: return "relu";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::square: return "square";
        case Op::abs: return "abs";
        case Op::sign: return "sign";
        case Op::step: return "step";
        case Op::max_mask: return "max_mask";
        case Op::sum: return "sum";
        case Op::max: return "max";
        case Op::scale: return "scale";
        case Op::stop_gradient: return "stop_gradient";
    }
    return "?";
}

Graph::Graph() : graph_id_(g_graph_counter.fetch_add(1, std::memory_order_relaxed)) {}

std::int32_t Graph::check(VarId id) const {
    if (id.graph != graph_id_)
        throw ValueError("VarId belongs to a different graph");
    if (id.node < 0 || id.node >= static_cast<std::int32_t>(nodes_.size()))
        throw ValueError("VarId names a node this graph never issued");
    return id.node;
}

VarId Graph::leaf(Tensor value) {
    nodes_.push_back(Node{Op::leaf, -1, -1, -1, 0.0, std::move(value)});
    return {graph_id_, static_cast<std::int32_t>(nodes_.size() - 1)};
}

VarId Graph::record(Op op, VarId a, VarId b, int axis, double factor) {
    const std::int32_t ia = check(a);
    const std::int32_t ib = b.valid() ? check(b) : -1;
    const Tensor& va = nodes_[ia].value;

    Tensor out;
    switch (op) {
        case Op::add: out = rrr::add(va, nodes_[ib].value); break;
        case Op::sub: out = rrr::sub(va, nodes_[ib].value); break;
        case Op::mul: out = rrr::mul(va, nodes_[ib].value); break;
        case Op::div: out = rrr::div(va, nodes_[ib].value); break;
        case Op::matmul:
            out = rrr::matmul(va, nodes_[ib].value, (axis & 1) != 0, (axis & 2) != 0);
            break;
        case Op::relu: out = rrr::relu(va); break;
        case Op::exp: out = rrr::exp(va); break;
        case Op::log: out = rrr::log(va); break;
        case Op::square: out = rrr::square(va); break;
        case Op::abs: out = rrr::abs(va); break;
        case Op::sign: out = rrr::sign(va); break;
        case Op::step: out = rrr::step(va); break;
        case Op::max_mask: out = rrr::max_mask(va, axis); break;
        case Op::sum: out = rrr::sum(va, axis); break;
        case Op::max: out = rrr::max_over(va, axis); break;
        case Op::scale: out = rrr::scale(va, factor); break;
        case Op::stop_gradient: out = va; break;
        case Op::leaf: throw ValueError("record: leaf nodes are created via Graph::leaf");
    }
    nodes_.push_back(Node{op, ia, ib, static_cast<std::int8_t>(axis), factor, std::move(out)});
    return {graph_id_, static_cast<std::int32_t>(nodes_.size() - 1)};
}

VarId add(Graph& g, VarId a, VarId b) { return g.record(Op::add, a, b, -1, 0.0); }
VarId sub(Graph& g, VarId a, VarId b) { return g.record(Op::sub, a, b, -1, 0.0); }
VarId mul(Graph& g, VarId a, VarId b) { return g.record(Op::mul, a, b, -1, 0.0); }
VarId div(Graph& g, VarId a, VarId b) { return g.record(Op::div, a, b, -1, 0.0); }
VarId matmul(Graph& g, VarId a, VarId b, bool trans_a, bool trans_b) {
    return g.record(Op::matmul, a, b, (trans_a ? 1 : 0) | (trans_b ? 2 : 0), 0.0);
}
VarId relu(Graph& g, VarId x) { return g.record(Op::relu, x, {}, -1, 0.0); }
VarId exp(Graph& g, VarId x) { return g.record(Op::exp, x, {}, -1, 0.0); }
VarId log(Graph& g, VarId x) { return g.record(Op::log, x, {}, -1, 0.0); }
VarId square(Graph& g, VarId x) { return g.record(Op::square, x, {}, -1, 0.0); }
VarId abs(Graph& g, VarId x) { return g.record(Op::abs, x, {}, -1, 0.0); }
VarId sign(Graph& g, VarId x) { return g.record(Op::sign, x, {}, -1, 0.0); }
VarId step(Graph& g, VarId x) { return g.record(Op::step, x, {}, -1, 0.0); }
VarId scale(Graph& g, VarId x, double s) { return g.record(Op::scale, x, {}, -1, s); }
VarId neg(Graph& g, VarId x) { return scale(g, x, -1.0); }
VarId sum(Graph& g, VarId x, int axis) { return g.record(Op::sum, x, {}, axis, 0.0); }
VarId max_over(Graph& g, VarId x, int axis) { return g.record(Op::max, x, {}, axis, 0.0); }
VarId stop_gradient(Graph& g, VarId x) { return g.record(Op::stop_gradient, x, {}, -1, 0.0); }

namespace {

/// Reduce a full-shape gradient back to the shape of a broadcast operand.
/// Takes the target by value: recording nodes may reallocate graph storage,
/// so references into it must not be held across record calls.
VarId reduce_to_shape(Graph& g, VarId grad, const Shape target) {
    const Shape gs = g.value(grad).shape();
    if (gs == target) return grad;
    Index numel = 1;
    for (Index e : target) numel *= e;
    if (numel == 1) {
        VarId s = sum(g, grad, -1);
        return s;  // scalar targets always have shape {1}
    }
    if (target.size() == 1 && gs.size() == 2 && gs[1] == target[0]) return sum(g, grad, 0);
    if (target.size() == 2 && gs.size() == 2 && gs[0] == target[0] && target[1] == 1)
        return sum(g, grad, 1);
    throw ShapeError("backward: cannot reduce gradient " + shape_str(gs) + " to " + shape_str(target));
}

struct Accumulator {
    std::vector<std::optional<VarId>> adj;

    void accumulate(Graph& g, std::int32_t node, VarId contribution) {
        auto& slot = adj[static_cast<size_t>(node)];
        if (!slot)
            slot = contribution;
        else
            slot = add(g, *slot, contribution);
    }
};

}  // namespace

std::vector<VarId> backward_recorded(Graph& g, VarId output, std::span<const VarId> wrt) {
    const std::int32_t out_node = g.check(output);
    if (!g.value(output).is_scalar())
        throw ShapeError("backward: output must be scalar, got " + shape_str(g.value(output).shape()));

    const size_t n = static_cast<size_t>(g.size());

    // needs[i]: node i depends on some wrt node, so its adjoint is wanted.
    std::vector<char> needs(n, 0);
    for (VarId w : wrt) needs[static_cast<size_t>(g.check(w))] = 1;
    for (size_t i = 0; i < n; ++i) {
        if (needs[i]) continue;
        const auto& nd = g.node(static_cast<std::int32_t>(i));
        if (nd.op == Op::stop_gradient) continue;
        if ((nd.a >= 0 && needs[static_cast<size_t>(nd.a)]) ||
            (nd.b >= 0 && needs[static_cast<size_t>(nd.b)]))
            needs[i] = 1;
    }

    Accumulator acc;
    acc.adj.resize(n);
    acc.adj[static_cast<size_t>(out_node)] = g.leaf(Tensor::scalar(1.0));

    for (std::int32_t id = out_node; id >= 0; --id) {
        const auto& slot = acc.adj[static_cast<size_t>(id)];
        if (!slot) continue;
        const VarId grad = *slot;
        // Copy node fields: recording contributions reallocates node storage.
        const Graph::Node& nd_ref = g.node(id);
        const Op op = nd_ref.op;
        const std::int32_t pa = nd_ref.a, pb = nd_ref.b;
        const std::int8_t axis = nd_ref.axis;
        const double factor = nd_ref.factor;
        const VarId a{g.id(), pa};
        const VarId b{g.id(), pb};
        const VarId self{g.id(), id};
        const bool need_a = pa >= 0 && needs[static_cast<size_t>(pa)];
        const bool need_b = pb >= 0 && needs[static_cast<size_t>(pb)];
        if (!need_a && !need_b) continue;
        const Shape shape_a = need_a ? g.value(a).shape() : Shape{};
        const Shape shape_b = need_b ? g.value(b).shape() : Shape{};

        switch (op) {
            case Op::add:
                if (need_a) acc.accumulate(g, pa, reduce_to_shape(g, grad, shape_a));
                if (need_b) acc.accumulate(g, pb, reduce_to_shape(g, grad, shape_b));
                break;
            case Op::sub:
                if (need_a) acc.accumulate(g, pa, reduce_to_shape(g, grad, shape_a));
                if (need_b) acc.accumulate(g, pb, reduce_to_shape(g, neg(g, grad), shape_b));
                break;
            case Op::mul:
                if (need_a) acc.accumulate(g, pa, reduce_to_shape(g, mul(g, grad, b), shape_a));
                if (need_b) acc.accumulate(g, pb, reduce_to_shape(g, mul(g, grad, a), shape_b));
                break;
            case Op::div:
                if (need_a) acc.accumulate(g, pa, reduce_to_shape(g, div(g, grad, b), shape_a));
                if (need_b)
                    acc.accumulate(g, pb,
                                   reduce_to_shape(g, neg(g, mul(g, grad, div(g, self, b))), shape_b));
                break;
            case Op::matmul: {
                const bool ta = (axis & 1) != 0, tb = (axis & 2) != 0;
                if (!ta && !tb) {
                    if (need_a) acc.accumulate(g, pa, matmul(g, grad, b, false, true));
                    if (need_b) acc.accumulate(g, pb, matmul(g, a, grad, true, false));
                } else if (ta && !tb) {
                    if (need_a) acc.accumulate(g, pa, matmul(g, b, grad, false, true));
                    if (need_b) acc.accumulate(g, pb, matmul(g, a, grad, false, false));
                } else if (!ta && tb) {
                    if (need_a) acc.accumulate(g, pa, matmul(g, grad, b, false, false));
                    if (need_b) acc.accumulate(g, pb, matmul(g, grad, a, true, false));
                } else {
                    if (need_a) acc.accumulate(g, pa, matmul(g, b, grad, true, true));
                    if (need_b) acc.accumulate(g, pb, matmul(g, grad, a, true, true));
                }
                break;
            }
            case Op::relu:
                acc.accumulate(g, pa, mul(g, grad, step(g, a)));
                break;
            case Op::exp:
                acc.accumulate(g, pa, mul(g, grad, self));
                break;
            case Op::log:
                acc.accumulate(g, pa, div(g, grad, a));
                break;
            case Op::square:
                acc.accumulate(g, pa, mul(g, grad, scale(g, a, 2.0)));
                break;
            case Op::abs:
                acc.accumulate(g, pa, mul(g, grad, sign(g, a)));
                break;
            case Op::scale:
                acc.accumulate(g, pa, scale(g, grad, factor));
                break;
            case Op::sum: {
                VarId ones = g.leaf(Tensor::ones(shape_a));
                acc.accumulate(g, pa, mul(g, ones, grad));
                break;
            }
            case Op::max: {
                VarId mask = g.record(Op::max_mask, a, {}, axis, 0.0);
                acc.accumulate(g, pa, mul(g, mask, grad));
                break;
            }
            case Op::sign:
            case Op::step:
            case Op::max_mask:
            case Op::stop_gradient:
            case Op::leaf:
                break;  // piecewise constant or detached: no flow
        }
    }

    std::vector<VarId> out;
    out.reserve(wrt.size());
    for (VarId w : wrt) {
        const auto& slot = acc.adj[static_cast<size_t>(g.check(w))];
        out.push_back(slot ? *slot : g.leaf(Tensor::zeros(g.value(w).shape())));
    }
    return out;
}

std::vector<Tensor> backward(Graph& g, VarId output, std::span<const VarId> wrt) {
    std::vector<VarId> ids = backward_recorded(g, output, wrt);
    std::vector<Tensor> out;
    out.reserve(ids.size());
    for (VarId id : ids) out.push_back(g.value(id));
    return out;
}

Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    if (h <= 0.0) throw ValueError("finite_difference: h must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (Index i = 0; i < x.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

std::vector<Tensor> finite_difference_params(
    const std::function<double(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& params, double h) {
    if (h <= 0.0) throw ValueError("finite_difference: h must be positive");
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    std::vector<Tensor> probe = params;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor grad(params[p].shape());
        for (Index i = 0; i < params[p].numel(); ++i) {
            const double orig = probe[p][i];
            probe[p][i] = orig + h;
            const double fp = f(probe);
            probe[p][i] = orig - h;
            const double fm = f(probe);
            probe[p][i] = orig;
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(grad));
    }
    return grads;
}

}  // namespace rrr
