#include "rrr/gradcheck.hpp"

#include "rrr/objectives.hpp"
#include "rrr/rng.hpp"

#include <algorithm>
#include <cmath>

namespace rrr {

namespace {

double rel_err(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double max_rel(const std::vector<Tensor>& ad, const std::vector<Tensor>& fd, double floor) {
    double worst = 0;
    for (size_t p = 0; p < ad.size(); ++p)
        for (Index i = 0; i < ad[p].numel(); ++i)
            worst = std::max(worst, rel_err(ad[p][i], fd[p][i], floor));
    return worst;
}

struct Fixture {
    Params params;
    Tensor X, y, A;
};

Fixture make_fixture(std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 11));
    Fixture f;
    f.params = init_params(LayerSpec{{4, 5, 3}}, seed);
    f.X = Tensor(Shape{4, 4});
    for (Index i = 0; i < f.X.numel(); ++i) f.X[i] = rng.uniform();
    std::vector<Index> labels(4);
    for (auto& l : labels) l = static_cast<Index>(rng.below(3));
    f.y = one_hot(labels, 3);
    f.A = Tensor(Shape{4, 4});
    for (Index i = 0; i < f.A.numel(); ++i) f.A[i] = rng.below(2) ? 1.0 : 0.0;
    if (f.A.array().sum() == 0) f.A[0] = 1.0;
    return f;
}

using PenaltyBuilder = std::function<VarId(Graph&, const ParamVars&, VarId, const Fixture&)>;

GradCheck check_theta_gradient(const std::string& name, const Fixture& f,
                               const PenaltyBuilder& build, double tol) {
    GradCheck out{name, 0, tol, false};

    Graph g;
    ParamVars pv = insert_params(g, f.params);
    VarId value = build(g, pv, g.leaf(f.X), f);
    const std::vector<VarId> wrt = pv.flat();
    const std::vector<Tensor> ad = backward(g, value, wrt);

    const LayerSpec spec = f.params.spec();
    const std::vector<Tensor> fd = finite_difference_params(
        [&](const std::vector<Tensor>& probe) {
            Graph gg;
            ParamVars pp = insert_params(gg, Params::from_flat(spec, probe));
            return gg.value(build(gg, pp, gg.leaf(f.X), f)).item();
        },
        f.params.flat(), 1e-5);

    out.max_rel = max_rel(ad, fd, 1e-7);
    out.pass = out.max_rel < tol;
    return out;
}

GradCheck check_input_gradient(const std::string& name, const Fixture& f,
                               const PenaltyBuilder& build, double tol) {
    GradCheck out{name, 0, tol, false};
    Graph g;
    ParamVars pv = insert_params(g, f.params);
    VarId xv = g.leaf(f.X);
    const Tensor ad = backward_one(g, build(g, pv, xv, f), xv);
    const Tensor fd = finite_difference(
        [&](const Tensor& probe) {
            Graph gg;
            ParamVars pp = insert_params(gg, f.params);
            return gg.value(build(gg, pp, gg.leaf(probe), f)).item();
        },
        f.X, 1e-5);
    out.max_rel = max_rel({ad}, {fd}, 1e-8);
    out.pass = out.max_rel < tol;
    return out;
}

}  // namespace

std::vector<GradCheck> run_gradient_checks() {
    std::vector<GradCheck> results;

    const PenaltyBuilder ce = [](Graph& g, const ParamVars& pv, VarId x, const Fixture& f) {
        return cross_entropy(g, forward(g, pv, x), g.leaf(f.y));
    };
    const PenaltyBuilder sum_logp = [](Graph& g, const ParamVars& pv, VarId x, const Fixture&) {
        return sum(g, forward(g, pv, x), -1);
    };
    const PenaltyBuilder rrr_pen = [](Graph& g, const ParamVars& pv, VarId x, const Fixture& f) {
        return rrr_penalty(g, pv, x, g.leaf(f.A));
    };
    const PenaltyBuilder dbl_pen = [](Graph& g, const ParamVars& pv, VarId x, const Fixture& f) {
        return doubleback_penalty(g, pv, x, g.leaf(f.y));
    };
    const PenaltyBuilder cert_pen = [](Graph& g, const ParamVars& pv, VarId x, const Fixture&) {
        return certainty_penalty_raw(g, pv, x);
    };
    const PenaltyBuilder l1_pen = [](Graph& g, const ParamVars& pv, VarId x, const Fixture& f) {
        return l1_grad_penalty_raw(g, pv, x, g.leaf(f.y));
    };
    const PenaltyBuilder hess_pen = [](Graph& g, const ParamVars& pv, VarId x, const Fixture& f) {
        Rng noise(12345);  // deterministic draws so finite differences see the same noise
        return hessian_norm_estimate_ce(g, pv, x, g.leaf(f.y), 1e-2, 2, noise);
    };
    const PenaltyBuilder rrr_total = [](Graph& g, const ParamVars& pv, VarId x, const Fixture& f) {
        return rrr_loss(g, pv, x, f.y, f.A, 10.0, 1e-4).total;
    };
    const PenaltyBuilder cosine = [](Graph& g, const ParamVars& pv, VarId x, const Fixture& f) {
        // Second model fixed; penalty couples through this model's gradients.
        Params other = init_params(f.params.spec(), 999);
        ParamVars pv2 = insert_params(g, other);
        VarId ga = backward_recorded_one(g, sum(g, forward(g, pv, x), -1), x);
        VarId gb = backward_recorded_one(g, sum(g, forward(g, pv2, x), -1), x);
        return cosine_sim_penalty(g, ga, gb);
    };

    for (std::uint64_t seed : {0, 1, 2}) {
        const Fixture f = make_fixture(seed);
        const std::string tag = " (seed " + std::to_string(seed) + ")";
        results.push_back(check_input_gradient("ce input gradient" + tag, f, ce, 1e-5));
        results.push_back(check_input_gradient("sum-log-prob input gradient" + tag, f, sum_logp, 1e-5));
        results.push_back(check_theta_gradient("ce theta gradient" + tag, f, ce, 1e-5));
        results.push_back(check_theta_gradient("rrr penalty theta gradient" + tag, f, rrr_pen, 1e-3));
        results.push_back(check_theta_gradient("doubleback penalty theta gradient" + tag, f, dbl_pen, 1e-3));
        results.push_back(check_theta_gradient("certainty penalty theta gradient" + tag, f, cert_pen, 1e-3));
        results.push_back(check_theta_gradient("l1 penalty theta gradient" + tag, f, l1_pen, 1e-3));
        results.push_back(check_theta_gradient("hessian estimate theta gradient" + tag, f, hess_pen, 1e-3));
        results.push_back(check_theta_gradient("rrr total theta gradient" + tag, f, rrr_total, 1e-3));
        results.push_back(check_theta_gradient("cosine penalty theta gradient" + tag, f, cosine, 1e-3));
    }
    return results;
}

}  // namespace rrr
