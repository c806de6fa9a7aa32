#pragma once

#include "rrr/graph.hpp"
#include "rrr/nn.hpp"
#include "rrr/rng.hpp"
#include "rrr/tensor.hpp"

#include <functional>

namespace rrr {

enum class PenaltyKind { none, rrr, doubleback, certainty, l1_grad, hessian_est };

PenaltyKind penalty_kind_from(const std::string& name);
const char* penalty_kind_name(PenaltyKind k);

struct PenaltyConfig {
    PenaltyKind kind = PenaltyKind::none;
    double lambda1 = 0.0;  // explanation strength (Ch.2's lambda is the same knob)
    double lambda2 = 0.0;  // weight decay
    double sigma = 1e-3;   // Hessian estimator noise scale
    int n_noise = 1;       // Hessian estimator sample count
    void validate() const;
};

/// Summed cross entropy sum_n sum_k -y_nk log yhat_nk (a sum, not a mean).
VarId cross_entropy(Graph& g, VarId log_probs, VarId y);

/// sum_i theta_i^2 over all weights and biases.
VarId weight_decay(Graph& g, const ParamVars& pv);

// Raw (unscaled) penalty terms. Each records the input-gradient computation
// so the returned scalar stays differentiable with respect to theta.

/// sum_{n,d} (A_nd * d/dx_nd sum_k log yhat_nk)^2
VarId rrr_penalty(Graph& g, const ParamVars& pv, VarId x, VarId a_mask);
/// || grad_x H(y, yhat) ||_2^2
VarId doubleback_penalty(Graph& g, const ParamVars& pv, VarId x, VarId y);
/// || grad_x H(1/K, yhat) ||_2^2 (never reads labels)
VarId certainty_penalty_raw(Graph& g, const ParamVars& pv, VarId x);
/// || grad_x H(y, yhat) ||_1
VarId l1_grad_penalty_raw(Graph& g, const ParamVars& pv, VarId x, VarId y);

/// (1/sigma^2) * mean_i ||grad_x f(x) - grad_x f(x + eps_i)||_2^2 with
/// eps_i ~ N(0, sigma^2 I_D), one draw shared across the batch rows.
VarId hessian_norm_estimate(Graph& g, const std::function<VarId(Graph&, VarId)>& f, VarId x,
                            double sigma, int n_noise, Rng& noise_rng);
/// Same estimator applied to f = H(y, yhat).
VarId hessian_norm_estimate_ce(Graph& g, const ParamVars& pv, VarId x, VarId y, double sigma,
                               int n_noise, Rng& noise_rng);

/// Row-wise squared cosine similarity (v.w)^2 / ((v.v)(w.w) + 1e-6), summed
/// over the batch.
VarId cosine_sim_penalty(Graph& g, VarId grads_a, VarId grads_b);

/// Teacher probabilities at temperature T, detached from any graph.
Tensor distill_targets(const Params& p, const Tensor& X, double temperature);

struct LossTerms {
    VarId ce;       // cross entropy
    VarId penalty;  // raw penalty (zero leaf when kind == none)
    VarId wd;       // raw sum theta^2
    VarId total;    // ce + lambda1 * penalty + lambda2 * wd
};

/// Cross entropy + lambda1 * masked squared input gradient + lambda2 * ||theta||^2.
LossTerms rrr_loss(Graph& g, const ParamVars& pv, VarId x, const Tensor& y, const Tensor& A,
                   double lambda1, double lambda2);

/// H(y, yhat) + lambda * ||grad_x H(y, yhat)||_2^2.
LossTerms doubleback_loss(Graph& g, const ParamVars& pv, VarId x, const Tensor& y, double lambda);

/// lambda * ||grad_x H(1/K, yhat)||_2^2 as a standalone scaled term.
VarId certainty_penalty(Graph& g, const ParamVars& pv, VarId x, double lambda);

/// lambda * ||grad_x H(y, yhat)||_1 as a standalone scaled term.
VarId l1_grad_penalty(Graph& g, const ParamVars& pv, VarId x, VarId y, double lambda);

/// Assemble ce/penalty/wd/total for any penalty kind. noise_rng is only read
/// for the Hessian estimator. A may be empty unless kind == rrr. The softmax
/// runs at `temperature` (1.0 gives the ordinary forward pass).
LossTerms build_objective(Graph& g, const ParamVars& pv, VarId x, const Tensor& y,
                          const Tensor& A, const PenaltyConfig& pc, Rng* noise_rng = nullptr,
                          double temperature = 1.0);

}  // namespace rrr
