#include "rrr/nn.hpp"

#include "rrr/rng.hpp"
#include "binio.hpp"

#include <cmath>
#include <fstream>

namespace rrr {

void LayerSpec::validate() const {
    if (sizes.size() < 2) throw ValueError("layer spec needs input and output widths");
    for (Index s : sizes)
        if (s <= 0) throw ValueError("layer widths must be positive");
}

LayerSpec Params::spec() const {
    LayerSpec s;
    s.sizes.push_back(weights.front().shape()[0]);
    for (const Tensor& w : weights) s.sizes.push_back(w.shape()[1]);
    return s;
}

std::vector<Tensor> Params::flat() const {
    std::vector<Tensor> out;
    for (Index i = 0; i < layers(); ++i) {
        out.push_back(weights[static_cast<size_t>(i)]);
        out.push_back(biases[static_cast<size_t>(i)]);
    }
    return out;
}

Params Params::from_flat(const LayerSpec& spec, std::span<const Tensor> flat) {
    if (static_cast<Index>(flat.size()) != 2 * spec.layers())
        throw ShapeError("from_flat: wrong tensor count");
    Params p;
    for (Index i = 0; i < spec.layers(); ++i) {
        p.weights.push_back(flat[static_cast<size_t>(2 * i)]);
        p.biases.push_back(flat[static_cast<size_t>(2 * i + 1)]);
    }
    return p;
}

Params init_params(const LayerSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Params p;
    for (size_t i = 0; i + 1 < spec.sizes.size(); ++i) {
        const Index fan_in = spec.sizes[i], fan_out = spec.sizes[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w(Shape{fan_in, fan_out});
        for (Index j = 0; j < w.numel(); ++j) w[j] = rng.uniform(-limit, limit);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(Shape{fan_out});
    }
    return p;
}

std::vector<VarId> ParamVars::flat() const {
    std::vector<VarId> out;
    for (size_t i = 0; i < weights.size(); ++i) {
        out.push_back(weights[i]);
        out.push_back(biases[i]);
    }
    return out;
}

ParamVars insert_params(Graph& g, const Params& p) {
    ParamVars pv;
    for (Index i = 0; i < p.layers(); ++i) {
        pv.weights.push_back(g.leaf(p.weights[static_cast<size_t>(i)]));
        pv.biases.push_back(g.leaf(p.biases[static_cast<size_t>(i)]));
    }
    return pv;
}

VarId logits(Graph& g, const ParamVars& pv, VarId x) {
    const Index in = g.value(x).cols();
    const Index expected = g.value(pv.weights.front()).shape()[0];
    if (in != expected)
        throw ShapeError("forward: input width " + std::to_string(in) + " does not match spec input " +
                         std::to_string(expected));
    VarId h = x;
    const size_t layers = pv.weights.size();
    for (size_t i = 0; i < layers; ++i) {
        h = add(g, matmul(g, h, pv.weights[i]), pv.biases[i]);
        if (i + 1 < layers) h = relu(g, h);
    }
    return h;
}

VarId log_softmax(Graph& g, VarId z) {
    // Max-subtraction for stability; the shift is detached (softmax is
    // shift-invariant, so gradients are unchanged).
    VarId m = stop_gradient(g, max_over(g, z, 1));
    VarId zc = sub(g, z, m);
    VarId lse = log(g, sum(g, exp(g, zc), 1));
    return sub(g, zc, lse);
}

VarId forward(Graph& g, const ParamVars& pv, VarId x) { return log_softmax(g, logits(g, pv, x)); }

VarId forward_with_temperature(Graph& g, const ParamVars& pv, VarId x, double temperature) {
    if (temperature <= 0.0) throw ValueError("temperature must be positive");
    return log_softmax(g, scale(g, logits(g, pv, x), 1.0 / temperature));
}

Tensor predict_log_probs(const Params& p, const Tensor& X) {
    Graph g;
    ParamVars pv = insert_params(g, p);
    return g.value(forward(g, pv, g.leaf(X)));
}

std::vector<Index> predict_labels(const Params& p, const Tensor& X) {
    return argmax_rows(predict_log_probs(p, X));
}

double accuracy(const Params& p, const Tensor& X, const Tensor& y_onehot) {
    const std::vector<Index> pred = predict_labels(p, X);
    const std::vector<Index> truth = argmax_rows(y_onehot);
    Index hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

AdamState AdamState::init(const Params& p, double alpha, double beta1, double beta2, double eps) {
    AdamState s;
    s.alpha = alpha;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    for (const Tensor& t : p.flat()) {
        s.m.push_back(Tensor::zeros(t.shape()));
        s.v.push_back(Tensor::zeros(t.shape()));
    }
    return s;
}

void adam_step(Params& p, std::span<const Tensor> grads, AdamState& state) {
    std::vector<Tensor> flat = p.flat();
    if (grads.size() != flat.size()) throw ShapeError("adam_step: gradient count mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < flat.size(); ++i) {
        if (!grads[i].same_shape(flat[i]))
            throw ShapeError("adam_step: gradient shape " + shape_str(grads[i].shape()) +
                             " does not mirror parameter " + shape_str(flat[i].shape()));
        auto m = state.m[i].array();
        auto v = state.v[i].array();
        m = state.beta1 * m + (1.0 - state.beta1) * grads[i].array();
        v = state.beta2 * v + (1.0 - state.beta2) * grads[i].array().square();
        flat[i].array() -= state.alpha * (m / bc1) / ((v / bc2).sqrt() + state.eps);
    }
    p = Params::from_flat(p.spec(), flat);
}

using detail::read_f64le;
using detail::read_u32le;
using detail::write_f64le;
using detail::write_u32le;

void save_params(const Params& p, const std::filesystem::path& path,
                 const std::map<std::string, std::string>& manifest) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const LayerSpec spec = p.spec();
    write_u32le(os, static_cast<std::uint32_t>(spec.sizes.size()));
    for (Index s : spec.sizes) write_u32le(os, static_cast<std::uint32_t>(s));
    for (const Tensor& t : p.flat()) write_f64le(os, t);
    if (!os) throw IoError("write failed for " + path.string());

    std::ofstream ms(path.string() + ".manifest");
    ms << "format=rrr-params-v1\n";
    ms << "sizes=";
    for (size_t i = 0; i < spec.sizes.size(); ++i) ms << (i ? "," : "") << spec.sizes[i];
    ms << "\n";
    for (const auto& [k, v] : manifest) ms << k << "=" << v << "\n";
}

Params load_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    const std::uint32_t count = read_u32le(is);
    if (count < 2 || count > 64) throw IoError("params: implausible layer count");
    LayerSpec spec;
    for (std::uint32_t i = 0; i < count; ++i)
        spec.sizes.push_back(static_cast<Index>(read_u32le(is)));
    spec.validate();
    Params p;
    for (size_t i = 0; i + 1 < spec.sizes.size(); ++i) {
        Tensor w(Shape{spec.sizes[i], spec.sizes[i + 1]});
        read_f64le(is, w);
        Tensor b(Shape{spec.sizes[i + 1]});
        read_f64le(is, b);
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

}  // namespace rrr
