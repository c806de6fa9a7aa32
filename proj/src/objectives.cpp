#include "rrr/objectives.hpp"

namespace rrr {

PenaltyKind penalty_kind_from(const std::string& name) {
    if (name == "none") return PenaltyKind::none;
    if (name == "rrr") return PenaltyKind::rrr;
    if (name == "doubleback") return PenaltyKind::doubleback;
    if (name == "certainty") return PenaltyKind::certainty;
    if (name == "l1_grad") return PenaltyKind::l1_grad;
    if (name == "hessian_est") return PenaltyKind::hessian_est;
    throw ConfigError("unknown penalty kind '" + name + "'");
}

const char* penalty_kind_name(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::none: return "none";
        case PenaltyKind::rrr: return "rrr";
        case PenaltyKind::doubleback: return "doubleback";
        case PenaltyKind::certainty: return "certainty";
        case PenaltyKind::l1_grad: return "l1_grad";
        case PenaltyKind::hessian_est: return "hessian_est";
    }
    return "?";
}

void PenaltyConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0) throw ConfigError("penalty strengths must be >= 0");
    if (kind == PenaltyKind::hessian_est) {
        if (sigma <= 0) throw ConfigError("hessian_est needs sigma > 0");
        if (n_noise < 1) throw ConfigError("hessian_est needs n_noise >= 1");
    }
}

VarId cross_entropy(Graph& g, VarId log_probs, VarId y) {
    if (!g.value(log_probs).same_shape(g.value(y)))
        throw ShapeError("cross_entropy: log-probs " + shape_str(g.value(log_probs).shape()) +
                         " vs labels " + shape_str(g.value(y).shape()));
    return scale(g, sum(g, mul(g, y, log_probs), -1), -1.0);
}

VarId weight_decay(Graph& g, const ParamVars& pv) {
    VarId acc{};
    for (VarId t : pv.flat()) {
        VarId s = sum(g, square(g, t), -1);
        acc = acc.valid() ? add(g, acc, s) : s;
    }
    return acc;
}

VarId rrr_penalty(Graph& g, const ParamVars& pv, VarId x, VarId a_mask) {
    if (!g.value(a_mask).same_shape(g.value(x)))
        throw ShapeError("rrr_penalty: mask " + shape_str(g.value(a_mask).shape()) + " vs X " +
                         shape_str(g.value(x).shape()));
    VarId sum_logp = sum(g, forward(g, pv, x), -1);
    VarId gx = backward_recorded_one(g, sum_logp, x);
    return sum(g, square(g, mul(g, a_mask, gx)), -1);
}

VarId doubleback_penalty(Graph& g, const ParamVars& pv, VarId x, VarId y) {
    VarId h = cross_entropy(g, forward(g, pv, x), y);
    VarId gx = backward_recorded_one(g, h, x);
    return sum(g, square(g, gx), -1);
}

VarId certainty_penalty_raw(Graph& g, const ParamVars& pv, VarId x) {
    VarId logp = forward(g, pv, x);
    const double k = static_cast<double>(g.value(logp).cols());
    VarId h = scale(g, sum(g, logp, -1), -1.0 / k);
    VarId gx = backward_recorded_one(g, h, x);
    return sum(g, square(g, gx), -1);
}

VarId l1_grad_penalty_raw(Graph& g, const ParamVars& pv, VarId x, VarId y) {
    VarId h = cross_entropy(g, forward(g, pv, x), y);
    VarId gx = backward_recorded_one(g, h, x);
    return sum(g, abs(g, gx), -1);
}

VarId hessian_norm_estimate(Graph& g, const std::function<VarId(Graph&, VarId)>& f, VarId x,
                            double sigma, int n_noise, Rng& noise_rng) {
    if (sigma <= 0) throw ValueError("hessian_norm_estimate: sigma must be positive");
    if (n_noise < 1) throw ValueError("hessian_norm_estimate: n_noise must be >= 1");
    VarId g0 = backward_recorded_one(g, f(g, x), x);
    const Index d = g.value(x).cols();
    VarId acc{};
    for (int i = 0; i < n_noise; ++i) {
        Tensor noise(Shape{d});
        for (Index j = 0; j < d; ++j) noise[j] = sigma * noise_rng.normal();
        VarId xi = add(g, x, g.leaf(std::move(noise)));
        VarId gi = backward_recorded_one(g, f(g, xi), xi);
        VarId term = sum(g, square(g, sub(g, g0, gi)), -1);
        acc = acc.valid() ? add(g, acc, term) : term;
    }
    return scale(g, acc, 1.0 / (sigma * sigma * static_cast<double>(n_noise)));
}

VarId hessian_norm_estimate_ce(Graph& g, const ParamVars& pv, VarId x, VarId y, double sigma,
                               int n_noise, Rng& noise_rng) {
    auto f = [&pv, y](Graph& gg, VarId xx) { return cross_entropy(gg, forward(gg, pv, xx), y); };
    return hessian_norm_estimate(g, f, x, sigma, n_noise, noise_rng);
}

VarId cosine_sim_penalty(Graph& g, VarId grads_a, VarId grads_b) {
    const Tensor& va = g.value(grads_a);
    if (!va.same_shape(g.value(grads_b)) || va.rank() != 2)
        throw ShapeError("cosine_sim_penalty: need matching rank-2 gradients, got " +
                         shape_str(va.shape()) + " vs " + shape_str(g.value(grads_b).shape()));
    VarId vw = sum(g, mul(g, grads_a, grads_b), 1);
    VarId vv = sum(g, square(g, grads_a), 1);
    VarId ww = sum(g, square(g, grads_b), 1);
    VarId eps = g.leaf(Tensor::scalar(1e-6));
    VarId per_row = div(g, square(g, vw), add(g, mul(g, vv, ww), eps));
    return sum(g, per_row, -1);
}

Tensor distill_targets(const Params& p, const Tensor& X, double temperature) {
    Graph g;
    ParamVars pv = insert_params(g, p);
    VarId logp = forward_with_temperature(g, pv, g.leaf(X), temperature);
    return rrr::exp(g.value(logp));
}

LossTerms rrr_loss(Graph& g, const ParamVars& pv, VarId x, const Tensor& y, const Tensor& A,
                   double lambda1, double lambda2) {
    LossTerms t;
    VarId logp = forward(g, pv, x);
    t.ce = cross_entropy(g, logp, g.leaf(y));
    VarId gx = backward_recorded_one(g, sum(g, logp, -1), x);
    t.penalty = sum(g, square(g, mul(g, g.leaf(A), gx)), -1);
    t.wd = weight_decay(g, pv);
    t.total = add(g, t.ce, add(g, scale(g, t.penalty, lambda1), scale(g, t.wd, lambda2)));
    return t;
}

LossTerms doubleback_loss(Graph& g, const ParamVars& pv, VarId x, const Tensor& y, double lambda) {
    LossTerms t;
    t.ce = cross_entropy(g, forward(g, pv, x), g.leaf(y));
    VarId gx = backward_recorded_one(g, t.ce, x);
    t.penalty = sum(g, square(g, gx), -1);
    t.wd = g.leaf(Tensor::scalar(0.0));
    t.total = add(g, t.ce, scale(g, t.penalty, lambda));
    return t;
}

VarId certainty_penalty(Graph& g, const ParamVars& pv, VarId x, double lambda) {
    return scale(g, certainty_penalty_raw(g, pv, x), lambda);
}

VarId l1_grad_penalty(Graph& g, const ParamVars& pv, VarId x, VarId y, double lambda) {
    return scale(g, l1_grad_penalty_raw(g, pv, x, y), lambda);
}

LossTerms build_objective(Graph& g, const ParamVars& pv, VarId x, const Tensor& y,
                          const Tensor& A, const PenaltyConfig& pc, Rng* noise_rng,
                          double temperature) {
    pc.validate();
    LossTerms t;
    VarId yv = g.leaf(y);
    VarId logp = temperature == 1.0 ? forward(g, pv, x)
                                    : forward_with_temperature(g, pv, x, temperature);
    t.ce = cross_entropy(g, logp, yv);
    switch (pc.kind) {
        case PenaltyKind::none:
            t.penalty = g.leaf(Tensor::scalar(0.0));
            break;
        case PenaltyKind::rrr: {
            if (A.empty()) throw ConfigError("rrr penalty needs an annotation matrix");
            VarId gx = backward_recorded_one(g, sum(g, logp, -1), x);
            t.penalty = sum(g, square(g, mul(g, g.leaf(A), gx)), -1);
            break;
        }
        case PenaltyKind::doubleback: {
            VarId gx = backward_recorded_one(g, t.ce, x);
            t.penalty = sum(g, square(g, gx), -1);
            break;
        }
        case PenaltyKind::certainty: {
            const double k = static_cast<double>(g.value(logp).cols());
            VarId gx = backward_recorded_one(g, scale(g, sum(g, logp, -1), -1.0 / k), x);
            t.penalty = sum(g, square(g, gx), -1);
            break;
        }
        case PenaltyKind::l1_grad: {
            VarId gx = backward_recorded_one(g, t.ce, x);
            t.penalty = sum(g, abs(g, gx), -1);
            break;
        }
        case PenaltyKind::hessian_est: {
            if (noise_rng == nullptr) throw ConfigError("hessian_est needs a noise generator");
            t.penalty = hessian_norm_estimate_ce(g, pv, x, yv, pc.sigma, pc.n_noise, *noise_rng);
            break;
        }
    }
    t.wd = weight_decay(g, pv);
    t.total = add(g, t.ce, add(g, scale(g, t.penalty, pc.lambda1), scale(g, t.wd, pc.lambda2)));
    return t;
}

}  // namespace rrr
