#pragma once

#include "rrr/nn.hpp"
#include "rrr/tensor.hpp"

#include <functional>
#include <vector>

namespace rrr {

enum class AttackKind { fgsm, tgsm, jsma };
enum class TargetRule { none, plus_one, explicit_list };

struct AttackSpec {
    AttackKind kind = AttackKind::fgsm;
    double epsilon = 0.3;  // per-step magnitude
    int iterations = 1;
    TargetRule target = TargetRule::none;
    std::vector<Index> target_labels;  // used with TargetRule::explicit_list
    double gamma = 0.25;               // JSMA max-distortion fraction
    double clip_lo = 0.0;
    double clip_hi = 1.0;
    void validate() const;
};

/// grad_x H(y, yhat) as a plain tensor (one throwaway graph).
Tensor loss_input_gradient(const Params& p, const Tensor& X, const Tensor& y);

/// X' = clip(X + eps * sign(grad_x H(y, yhat))), with sign(0) = 0.
Tensor fgsm(const Params& p, const Tensor& X, const Tensor& y, double epsilon,
            double clip_lo = 0.0, double clip_hi = 1.0);

/// X' = clip(X - eps * sign(grad_x H(y_target, yhat))).
Tensor tgsm(const Params& p, const Tensor& X, const Tensor& y_target, double epsilon,
            double clip_lo = 0.0, double clip_hi = 1.0);

/// Labels incremented by 1 modulo K, one-hot.
Tensor plus_one_targets(const Tensor& y);

/// Applies `attack_step` repeatedly, recomputing gradients at each iterate.
Tensor iterate(const Tensor& X0, int steps, const std::function<Tensor(const Tensor&)>& attack_step);

struct JsmaResult {
    Tensor x_adv;
    bool success = false;
    Index pixels_changed = 0;
};

/// Greedy increasing-pixel-pair saliency search on logit gradients. Selected
/// pixels are driven to clip_hi; stops at target prediction or when the
/// changed-pixel budget floor(gamma * D) would be exceeded.
JsmaResult jsma(const Params& p, const Tensor& x, const Tensor& y_target, double gamma,
                double clip_hi = 1.0);

/// Per-class logit gradients d z_k / d x for a single example (K x D).
Tensor logit_jacobian(const Params& p, const Tensor& x);

}  // namespace rrr
