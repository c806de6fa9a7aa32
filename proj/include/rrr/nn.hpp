#pragma once

#include "rrr/graph.hpp"
#include "rrr/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rrr {

/// Layer widths, input first, e.g. {75, 50, 30, 2}.
struct LayerSpec {
    std::vector<Index> sizes;

    Index input() const { return sizes.front(); }
    Index output() const { return sizes.back(); }
    Index layers() const { return static_cast<Index>(sizes.size()) - 1; }
    void validate() const;
    bool operator==(const LayerSpec&) const = default;
};

/// MLP weights/biases. weights[i] is (in x out), biases[i] is [out].
struct Params {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    Index layers() const { return static_cast<Index>(weights.size()); }
    LayerSpec spec() const;
    /// Canonical flat order: W0, b0, W1, b1, ...
    std::vector<Tensor> flat() const;
    static Params from_flat(const LayerSpec& spec, std::span<const Tensor> flat);
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
Params init_params(const LayerSpec& spec, std::uint64_t seed);

/// Parameter leaves recorded in a graph, in the same canonical order.
struct ParamVars {
    std::vector<VarId> weights;
    std::vector<VarId> biases;
    std::vector<VarId> flat() const;
};

ParamVars insert_params(Graph& g, const Params& p);

VarId logits(Graph& g, const ParamVars& pv, VarId x);
VarId log_softmax(Graph& g, VarId z);
/// Log-probabilities, rows exp-summing to 1.
VarId forward(Graph& g, const ParamVars& pv, VarId x);
/// Logits divided by T before the softmax; T = 1 is identical to forward().
VarId forward_with_temperature(Graph& g, const ParamVars& pv, VarId x, double temperature);

/// Graph-free evaluation helpers for a frozen Params snapshot.
Tensor predict_log_probs(const Params& p, const Tensor& X);
std::vector<Index> predict_labels(const Params& p, const Tensor& X);
double accuracy(const Params& p, const Tensor& X, const Tensor& y_onehot);

struct AdamState {
    Index t = 0;
    std::vector<Tensor> m;  // canonical flat order
    std::vector<Tensor> v;
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const Params& p, double alpha = 1e-3, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);
};

/// One Adam update with bias correction; grads in canonical flat order.
void adam_step(Params& p, std::span<const Tensor> grads, AdamState& state);

/// Flat binary container: u32 LE size count, u32 LE layer sizes, then each
/// tensor's doubles (LE, row-major) in canonical order. A text manifest is
/// written next to it at <path>.manifest.
void save_params(const Params& p, const std::filesystem::path& path,
                 const std::map<std::string, std::string>& manifest = {});
Params load_params(const std::filesystem::path& path);

}  // namespace rrr
