#include "rrr/train.hpp"

#include "rrr/attacks.hpp"
#include "rrr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace rrr {

Defense defense_from(const std::string& name) {
    if (name == "none") return Defense::none;
    if (name == "grad_reg") return Defense::grad_reg;
    if (name == "adv_train") return Defense::adv_train;
    if (name == "distill") return Defense::distill;
    throw ConfigError("unknown defense '" + name + "'");
}

const char* defense_name(Defense d) {
    switch (d) {
        case Defense::none: return "none";
        case Defense::grad_reg: return "grad_reg";
        case Defense::adv_train: return "adv_train";
        case Defense::distill: return "distill";
    }
    return "?";
}

void TrainConfig::validate(Index n) const {
    spec.validate();
    penalty.validate();
    if (batch < 1 || batch > n) throw ConfigError("batch size must be in [1, N]");
    if (steps < 1) throw ConfigError("step count must be >= 1");
    if (alpha <= 0) throw ConfigError("adam alpha must be positive");
    if (temperature <= 0 || distill_temperature <= 0)
        throw ConfigError("temperatures must be positive");
    if (adv_eps < 0) throw ConfigError("adversarial epsilon must be >= 0");
}

BatchScheduler::BatchScheduler(Index n, Index batch, const Tensor& A, Rng rng)
    : batch_(std::min(batch, n)), rng_(rng) {
    std::vector<Index> annotated, plain;
    for (Index i = 0; i < n; ++i) {
        bool has = false;
        if (!A.empty())
            for (Index j = 0; j < A.cols() && !has; ++j) has = A.at(i, j) != 0.0;
        (has ? annotated : plain).push_back(i);
    }
    if (annotated.empty() || plain.empty()) {
        pools_.emplace_back(std::vector<Index>(), 0);
        auto& all = pools_[0].first;
        for (Index i = 0; i < n; ++i) all.push_back(i);
        quota_ = {batch_};
    } else {
        const auto share = static_cast<Index>(std::llround(
            static_cast<double>(batch_) * static_cast<double>(annotated.size()) /
            static_cast<double>(n)));
        const Index ann_quota = std::clamp<Index>(
            share, 1, std::min<Index>(static_cast<Index>(annotated.size()), batch_ - 1));
        pools_.emplace_back(std::move(annotated), 0);
        pools_.emplace_back(std::move(plain), 0);
        quota_ = {ann_quota, batch_ - ann_quota};
    }
    for (auto& [pool, cursor] : pools_) {
        shuffle(pool, rng_);
        cursor = 0;
    }
}

std::vector<Index> BatchScheduler::next() {
    std::vector<Index> out;
    out.reserve(static_cast<size_t>(batch_));
    for (size_t p = 0; p < pools_.size(); ++p) {
        auto& [pool, cursor] = pools_[p];
        for (Index q = 0; q < quota_[p]; ++q) {
            if (cursor >= static_cast<Index>(pool.size())) {
                shuffle(pool, rng_);
                cursor = 0;
            }
            out.push_back(pool[static_cast<size_t>(cursor++)]);
        }
    }
    return out;
}

namespace {

constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kStudentStream = 3;

Tensor rows_of(const Tensor& t, std::span<const Index> rows) {
    Tensor out(Shape{static_cast<Index>(rows.size()), t.cols()});
    for (size_t i = 0; i < rows.size(); ++i)
        for (Index j = 0; j < t.cols(); ++j) out.at(static_cast<Index>(i), j) = t.at(rows[i], j);
    return out;
}

void check_divergence(double total, double initial, Index step) {
    if (!std::isfinite(total))
        throw DivergenceError(step, "loss became non-finite at step " + std::to_string(step) +
                                        " (over-regularization?)");
    const double limit = std::max(1e6, 100.0 * (std::abs(initial) + 1.0));
    if (total > limit)
        throw DivergenceError(step, "loss exploded to " + std::to_string(total) + " at step " +
                                        std::to_string(step) + " (over-regularization?)");
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const Tensor& A,
                  const Dataset* probe) {
    cfg.validate(ds.n());
    if (!A.empty() && !A.same_shape(ds.X))
        throw ShapeError("train: annotation mask must be N x D");

    Params params = init_params(cfg.spec, cfg.init_seed.value_or(cfg.seed));
    AdamState adam = AdamState::init(params, cfg.alpha, cfg.beta1, cfg.beta2, cfg.eps_adam);
    BatchScheduler sched(ds.n(), cfg.batch, A, Rng(Rng::derive(cfg.seed, kBatchStream)));
    Rng noise_rng(Rng::derive(cfg.seed, kNoiseStream));

    TrainResult res;
    double initial_total = 0.0;
    for (Index s = 0; s < cfg.steps; ++s) {
        const std::vector<Index> idx = sched.next();
        const Tensor xb = rows_of(ds.X, idx);
        const Tensor yb = rows_of(ds.y, idx);
        const Tensor ab = A.empty() ? Tensor{} : rows_of(A, idx);

        Graph g;
        ParamVars pv = insert_params(g, params);
        VarId xv = g.leaf(xb);
        LossTerms terms = build_objective(g, pv, xv, yb, ab, cfg.penalty, &noise_rng,
                                          cfg.temperature);

        StepLog entry;
        entry.step = s;
        entry.ce = g.value(terms.ce).item();
        entry.penalty = g.value(terms.penalty).item();
        entry.wd = g.value(terms.wd).item();
        entry.total = g.value(terms.total).item();
        if (s == 0) initial_total = entry.total;
        check_divergence(entry.total, initial_total, s);

        const std::vector<VarId> wrt = pv.flat();
        const std::vector<Tensor> grads = backward(g, terms.total, wrt);
        adam_step(params, grads, adam);

        if (probe != nullptr && cfg.probe_every > 0 && (s + 1) % cfg.probe_every == 0)
            entry.probe_acc = accuracy(params, probe->X, probe->y);
        res.log.push_back(entry);
    }
    res.params = std::move(params);
    return res;
}

TrainResult adversarial_train(const Dataset& ds, const TrainConfig& cfg, const Dataset* probe) {
    cfg.validate(ds.n());
    Params params = init_params(cfg.spec, cfg.init_seed.value_or(cfg.seed));
    AdamState adam = AdamState::init(params, cfg.alpha, cfg.beta1, cfg.beta2, cfg.eps_adam);
    BatchScheduler sched(ds.n(), cfg.batch, {}, Rng(Rng::derive(cfg.seed, kBatchStream)));

    TrainResult res;
    double initial_total = 0.0;
    for (Index s = 0; s < cfg.steps; ++s) {
        const std::vector<Index> idx = sched.next();
        const Tensor xb = rows_of(ds.X, idx);
        const Tensor yb = rows_of(ds.y, idx);

        // Perturb against predicted labels (label-leaking avoidance); the
        // perturbation enters the loss as a constant.
        const Tensor pred = one_hot(predict_labels(params, xb), ds.k());
        const Tensor x_adv = fgsm(params, xb, pred, cfg.adv_eps);

        Graph g;
        ParamVars pv = insert_params(g, params);
        VarId ce_clean = cross_entropy(g, forward(g, pv, g.leaf(xb)), g.leaf(yb));
        VarId ce_adv = cross_entropy(g, forward(g, pv, g.leaf(x_adv)), g.leaf(yb));
        VarId avg = scale(g, add(g, ce_clean, ce_adv), 0.5);
        VarId wd = weight_decay(g, pv);
        VarId total = add(g, avg, scale(g, wd, cfg.penalty.lambda2));

        StepLog entry;
        entry.step = s;
        entry.ce = g.value(avg).item();
        entry.penalty = 0.0;
        entry.wd = g.value(wd).item();
        entry.total = g.value(total).item();
        if (s == 0) initial_total = entry.total;
        check_divergence(entry.total, initial_total, s);

        const std::vector<VarId> wrt = pv.flat();
        const std::vector<Tensor> grads = backward(g, total, wrt);
        adam_step(params, grads, adam);

        if (probe != nullptr && cfg.probe_every > 0 && (s + 1) % cfg.probe_every == 0)
            entry.probe_acc = accuracy(params, probe->X, probe->y);
        res.log.push_back(entry);
    }
    res.params = std::move(params);
    return res;
}

DistillResult distill_train(const Dataset& ds, const TrainConfig& cfg, const Dataset* probe) {
    cfg.validate(ds.n());
    const double T = cfg.distill_temperature;

    TrainConfig phase1 = cfg;
    phase1.defense = Defense::none;
    phase1.temperature = T;
    TrainResult teacher = train(ds, phase1, {}, probe);

    // Phase 2: fresh student of the same architecture against the teacher's
    // detached temperature-T probabilities.
    Params student = init_params(cfg.spec, Rng::derive(cfg.init_seed.value_or(cfg.seed), kStudentStream));
    AdamState adam = AdamState::init(student, cfg.alpha, cfg.beta1, cfg.beta2, cfg.eps_adam);
    BatchScheduler sched(ds.n(), cfg.batch, {},
                         Rng(Rng::derive(Rng::derive(cfg.seed, kStudentStream), kBatchStream)));

    DistillResult res;
    res.teacher = std::move(teacher.params);
    res.teacher_log = std::move(teacher.log);
    double initial_total = 0.0;
    for (Index s = 0; s < cfg.steps; ++s) {
        const std::vector<Index> idx = sched.next();
        const Tensor xb = rows_of(ds.X, idx);
        const Tensor targets = distill_targets(res.teacher, xb, T);

        Graph g;
        ParamVars pv = insert_params(g, student);
        VarId logp = forward_with_temperature(g, pv, g.leaf(xb), T);
        VarId ce = cross_entropy(g, logp, g.leaf(targets));
        VarId wd = weight_decay(g, pv);
        VarId total = add(g, ce, scale(g, wd, cfg.penalty.lambda2));

        StepLog entry;
        entry.step = s;
        entry.ce = g.value(ce).item();
        entry.penalty = 0.0;
        entry.wd = g.value(wd).item();
        entry.total = g.value(total).item();
        if (s == 0) initial_total = entry.total;
        check_divergence(entry.total, initial_total, s);

        const std::vector<VarId> wrt = pv.flat();
        const std::vector<Tensor> grads = backward(g, total, wrt);
        adam_step(student, grads, adam);

        if (probe != nullptr && cfg.probe_every > 0 && (s + 1) % cfg.probe_every == 0)
            entry.probe_acc = accuracy(student, probe->X, probe->y);
        res.student_log.push_back(entry);
    }
    res.student = std::move(student);
    return res;
}

LambdaChoice balance_lambda(const Dataset& ds, const TrainConfig& cfg,
                            std::span<const double> grid, const Tensor& A) {
    if (grid.empty()) throw ConfigError("balance_lambda: empty grid");
    cfg.validate(ds.n());

    const Params params = init_params(cfg.spec, cfg.init_seed.value_or(cfg.seed));
    Rng noise_rng(Rng::derive(cfg.seed, kNoiseStream));
    Graph g;
    ParamVars pv = insert_params(g, params);
    LossTerms terms =
        build_objective(g, pv, g.leaf(ds.X), ds.y, A, cfg.penalty, &noise_rng, cfg.temperature);

    LambdaChoice out;
    out.ce0 = g.value(terms.ce).item();
    out.penalty0 = g.value(terms.penalty).item();
    if (out.penalty0 == 0.0)
        throw ValueError("balance_lambda: explanation term is zero at initialization; check A");

    double best = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
        const double ratio = lambda * out.penalty0 / out.ce0;
        out.ratios.emplace_back(lambda, ratio);
        const double dist = std::abs(std::log10(ratio));
        if (dist < best) {
            best = dist;
            out.lambda = lambda;
        }
    }
    return out;
}

void write_train_log(const std::vector<StepLog>& log, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    char buf[320];
    for (const StepLog& e : log) {
        std::snprintf(buf, sizeof buf, "step=%lld ce=%.17g penalty=%.17g wd=%.17g total=%.17g",
                      static_cast<long long>(e.step), e.ce, e.penalty, e.wd, e.total);
        os << buf;
        if (e.probe_acc >= 0) {
            std::snprintf(buf, sizeof buf, " probe_acc=%.17g", e.probe_acc);
            os << buf;
        }
        os << '\n';
    }
}

}  // namespace rrr
