#include "rrr/explain.hpp"

#include "rrr/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace rrr {

GradKind grad_kind_from(const std::string& name) {
    if (name == "sum_log_probs") return GradKind::sum_log_probs;
    if (name == "prob") return GradKind::prob;
    if (name == "true_label_ce") return GradKind::true_label_ce;
    throw ConfigError("unknown gradient kind '" + name + "'");
}

Tensor input_gradients(const Params& p, const Tensor& X, GradKind kind, const Tensor* y) {
    Graph g;
    ParamVars pv = insert_params(g, p);
    VarId xv = g.leaf(X);
    VarId logp = forward(g, pv, xv);
    VarId scalar;
    switch (kind) {
        case GradKind::sum_log_probs:
            scalar = sum(g, logp, -1);
            break;
        case GradKind::prob: {
            // Predicted-class probability; the class pick is detached.
            VarId probs = exp(g, logp);
            VarId pick = g.leaf(max_mask(g.value(logp), 1));
            scalar = sum(g, mul(g, probs, pick), -1);
            break;
        }
        case GradKind::true_label_ce: {
            if (y == nullptr) throw ValueError("input_gradients: true_label_ce needs labels");
            scalar = cross_entropy(g, logp, g.leaf(*y));
            break;
        }
    }
    return backward_one(g, scalar, xv);
}

Tensor mask_topratio(const Tensor& expl, double c) {
    if (!(c > 0.0 && c <= 1.0)) throw ValueError("mask_topratio: cutoff must be in (0,1]");
    if (expl.rank() != 2) throw ShapeError("mask_topratio: expected N x D explanations");
    Tensor mask(expl.shape());
    for (Index i = 0; i < expl.rows(); ++i) {
        double peak = 0.0;
        for (Index j = 0; j < expl.cols(); ++j) peak = std::max(peak, std::abs(expl.at(i, j)));
        if (peak == 0.0) continue;
        for (Index j = 0; j < expl.cols(); ++j)
            if (std::abs(expl.at(i, j)) >= c * peak) mask.at(i, j) = 1.0;
    }
    return mask;
}

AnnotationRule annotation_rule_from(const std::string& name) {
    if (name == "corners") return AnnotationRule::corners;
    if (name == "top_middle") return AnnotationRule::top_middle;
    if (name == "pro_rule1") return AnnotationRule::pro_rule1;
    if (name == "pro_rule2") return AnnotationRule::pro_rule2;
    if (name == "swatch") return AnnotationRule::swatch;
    if (name == "iris_columns") return AnnotationRule::iris_columns;
    throw ConfigError("unknown annotation rule '" + name + "'");
}

namespace {

// Feature indices of the Toy Color rule regions (all channels of each pixel).
std::vector<Index> toy_region(bool corners) {
    std::vector<Index> out;
    const Index pix_corners[4][2] = {{0, 0}, {0, 4}, {4, 0}, {4, 4}};
    const Index pix_top[3][2] = {{0, 1}, {0, 2}, {0, 3}};
    if (corners)
        for (auto& rc : pix_corners)
            for (Index ch = 0; ch < 3; ++ch) out.push_back((rc[0] * 5 + rc[1]) * 3 + ch);
    else
        for (auto& rc : pix_top)
            for (Index ch = 0; ch < 3; ++ch) out.push_back((rc[0] * 5 + rc[1]) * 3 + ch);
    return out;
}

Tensor fill_rows(Index n, Index d, std::span<const Index> cols, bool complement) {
    Tensor out(Shape{n, d});
    std::vector<char> in_region(static_cast<size_t>(d), 0);
    for (Index c : cols) in_region[static_cast<size_t>(c)] = 1;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j)
            out.at(i, j) = (in_region[static_cast<size_t>(j)] != 0) != complement ? 1.0 : 0.0;
    return out;
}

}  // namespace

Tensor build_annotation(const Dataset& ds, AnnotationRule rule) {
    const bool toy = ds.geom.height == kToyColorSide && ds.geom.width == kToyColorSide &&
                     ds.geom.channels == kToyColorChannels;
    switch (rule) {
        case AnnotationRule::corners:
        case AnnotationRule::pro_rule1:
            if (!toy) throw ValueError("build_annotation: corner rules need Toy Color geometry");
            return fill_rows(ds.n(), ds.d(), toy_region(true), rule == AnnotationRule::pro_rule1);
        case AnnotationRule::top_middle:
        case AnnotationRule::pro_rule2:
            if (!toy) throw ValueError("build_annotation: top-middle rules need Toy Color geometry");
            return fill_rows(ds.n(), ds.d(), toy_region(false), rule == AnnotationRule::pro_rule2);
        case AnnotationRule::swatch:
            if (ds.aux_mask.empty())
                throw ValueError("build_annotation: dataset has no recorded swatch coordinates");
            return ds.aux_mask;
        case AnnotationRule::iris_columns: {
            if (ds.d() < 4) throw ValueError("build_annotation: iris_columns needs >= 4 features");
            const Index cols[4] = {0, 1, 2, 3};
            return fill_rows(ds.n(), ds.d(), cols, false);
        }
    }
    throw ValueError("build_annotation: unreachable");
}

std::vector<double> rule_mass(const Tensor& expl, std::span<const Tensor> regions, double c) {
    const Tensor selected = mask_topratio(expl, c);
    double total = selected.array().sum();
    std::vector<double> out;
    for (const Tensor& region : regions) {
        double inside = 0.0;
        if (region.rank() == 1) {
            if (region.numel() != expl.cols())
                throw ShapeError("rule_mass: region length does not match feature count");
            for (Index i = 0; i < expl.rows(); ++i)
                for (Index j = 0; j < expl.cols(); ++j)
                    inside += selected.at(i, j) * region[j];
        } else {
            if (!region.same_shape(expl)) throw ShapeError("rule_mass: region shape mismatch");
            inside = (selected.array() * region.array()).sum();
        }
        out.push_back(total > 0 ? inside / total : 0.0);
    }
    return out;
}

std::vector<FaeIteration> fae_sequential(const Dataset& train_ds, const Dataset& test_ds,
                                         const TrainConfig& base, const FaeConfig& fae) {
    if (fae.max_iters < 1) throw ConfigError("fae_sequential: max_iters must be >= 1");
    if (fae.lambda_schedule.empty()) throw ConfigError("fae_sequential: empty lambda schedule");

    std::vector<FaeIteration> out;
    Tensor a_mask = Tensor::zeros(train_ds.X.shape());
    const double chance = 1.0 / static_cast<double>(train_ds.k());

    for (Index iter = 0; iter < fae.max_iters; ++iter) {
        TrainConfig cfg = base;
        cfg.penalty.kind = PenaltyKind::rrr;
        // A_0 = 0 makes lambda1 irrelevant at iteration 0.
        cfg.penalty.lambda1 =
            iter == 0 ? 0.0
                      : fae.lambda_schedule[std::min<size_t>(static_cast<size_t>(iter - 1),
                                                             fae.lambda_schedule.size() - 1)];
        TrainResult trained = train(train_ds, cfg, a_mask);

        FaeIteration it;
        it.params = std::move(trained.params);
        it.annotation = a_mask;
        it.lambda1 = cfg.penalty.lambda1;
        it.train_acc = accuracy(it.params, train_ds.X, train_ds.y);
        it.test_acc = accuracy(it.params, test_ds.X, test_ds.y);

        const Tensor expl = input_gradients(it.params, train_ds.X, fae.grad_kind,
                                            fae.grad_kind == GradKind::true_label_ce
                                                ? &train_ds.y
                                                : nullptr);
        if (!fae.regions.empty()) it.region_mass = rule_mass(expl, fae.regions, fae.cutoff);

        const double train_acc = it.train_acc;
        out.push_back(std::move(it));

        // Union in the newly selected components.
        const Tensor selected = mask_topratio(expl, fae.cutoff);
        a_mask.array() = (a_mask.array() + selected.array()).min(1.0);

        if (train_acc < chance + fae.stop_accuracy_margin) break;
        const double coverage = a_mask.array().sum() / static_cast<double>(a_mask.numel());
        if (coverage > fae.stop_coverage) break;
    }
    return out;
}

SimultaneousResult fae_simultaneous(const Dataset& ds, const TrainConfig& cfg, Index model_count,
                                    double penalty_weight, GradKind kind) {
    if (model_count < 2) throw ConfigError("fae_simultaneous: need at least two models");
    cfg.validate(ds.n());

    std::vector<Params> models;
    std::vector<AdamState> adams;
    for (Index m = 0; m < model_count; ++m) {
        models.push_back(init_params(
            cfg.spec, Rng::derive(cfg.init_seed.value_or(cfg.seed), 100 + static_cast<std::uint64_t>(m))));
        adams.push_back(AdamState::init(models.back(), cfg.alpha, cfg.beta1, cfg.beta2, cfg.eps_adam));
    }

    // Shared batch schedule across models.
    Rng batch_rng(Rng::derive(cfg.seed, 1));
    std::vector<Index> perm(static_cast<size_t>(ds.n()));
    for (Index i = 0; i < ds.n(); ++i) perm[static_cast<size_t>(i)] = i;
    shuffle(perm, batch_rng);
    Index cursor = 0;
    const Index batch = std::min(cfg.batch, ds.n());

    SimultaneousResult res;
    double initial_total = 0.0;
    for (Index s = 0; s < cfg.steps; ++s) {
        std::vector<Index> idx;
        for (Index q = 0; q < batch; ++q) {
            if (cursor >= ds.n()) {
                shuffle(perm, batch_rng);
                cursor = 0;
            }
            idx.push_back(perm[static_cast<size_t>(cursor++)]);
        }
        Tensor xb(Shape{batch, ds.d()});
        Tensor yb(Shape{batch, ds.k()});
        for (Index i = 0; i < batch; ++i) {
            for (Index j = 0; j < ds.d(); ++j) xb.at(i, j) = ds.X.at(idx[static_cast<size_t>(i)], j);
            for (Index k = 0; k < ds.k(); ++k) yb.at(i, k) = ds.y.at(idx[static_cast<size_t>(i)], k);
        }

        Graph g;
        VarId xv = g.leaf(xb);
        VarId yv = g.leaf(yb);
        std::vector<ParamVars> pvs;
        std::vector<VarId> grads_x;
        VarId total{};
        for (Index m = 0; m < model_count; ++m) {
            pvs.push_back(insert_params(g, models[static_cast<size_t>(m)]));
            const ParamVars& pv = pvs.back();
            VarId logp = forward(g, pv, xv);
            VarId ce = cross_entropy(g, logp, yv);
            VarId loss = cfg.penalty.lambda2 > 0
                             ? add(g, ce, scale(g, weight_decay(g, pv), cfg.penalty.lambda2))
                             : ce;
            VarId scalar;
            switch (kind) {
                case GradKind::sum_log_probs: scalar = sum(g, logp, -1); break;
                case GradKind::true_label_ce: scalar = ce; break;
                case GradKind::prob: {
                    VarId pick = g.leaf(max_mask(g.value(logp), 1));
                    scalar = sum(g, mul(g, exp(g, logp), pick), -1);
                    break;
                }
            }
            grads_x.push_back(backward_recorded_one(g, scalar, xv));
            total = total.valid() ? add(g, total, loss) : loss;
        }
        res.pair_penalty.clear();
        for (Index a = 0; a < model_count; ++a)
            for (Index b = a + 1; b < model_count; ++b) {
                VarId pen = cosine_sim_penalty(g, grads_x[static_cast<size_t>(a)],
                                               grads_x[static_cast<size_t>(b)]);
                res.pair_penalty.push_back(g.value(pen).item());
                total = add(g, total, scale(g, pen, penalty_weight));
            }

        StepLog entry;
        entry.step = s;
        entry.total = g.value(total).item();
        if (s == 0) initial_total = entry.total;
        if (!std::isfinite(entry.total) || entry.total > std::max(1e6, 100.0 * (std::abs(initial_total) + 1.0)))
            throw DivergenceError(s, "fae_simultaneous: loss diverged at step " + std::to_string(s));
        res.log.push_back(entry);

        std::vector<VarId> all_wrt;
        for (const ParamVars& pv : pvs)
            for (VarId v : pv.flat()) all_wrt.push_back(v);
        const std::vector<Tensor> all_grads = backward(g, total, all_wrt);
        const size_t per_model = all_grads.size() / static_cast<size_t>(model_count);
        for (Index m = 0; m < model_count; ++m) {
            std::span<const Tensor> grads(all_grads.data() + static_cast<size_t>(m) * per_model,
                                          per_model);
            adam_step(models[static_cast<size_t>(m)], grads, adams[static_cast<size_t>(m)]);
        }
    }
    res.models = std::move(models);
    return res;
}

double mean_abs_cosine(const Params& a, const Params& b, const Tensor& X, GradKind kind) {
    const Tensor ga = input_gradients(a, X, kind);
    const Tensor gb = input_gradients(b, X, kind);
    double acc = 0.0;
    for (Index i = 0; i < X.rows(); ++i) {
        double vw = 0, vv = 0, ww = 0;
        for (Index j = 0; j < X.cols(); ++j) {
            vw += ga.at(i, j) * gb.at(i, j);
            vv += ga.at(i, j) * ga.at(i, j);
            ww += gb.at(i, j) * gb.at(i, j);
        }
        const double den = std::sqrt(vv * ww) + 1e-12;
        acc += std::abs(vw) / den;
    }
    return acc / static_cast<double>(X.rows());
}

}  // namespace rrr
