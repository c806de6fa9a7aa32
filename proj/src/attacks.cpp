#include "rrr/attacks.hpp"

#include "rrr/objectives.hpp"

#include <set>

namespace rrr {

void AttackSpec::validate() const {
    if (epsilon < 0) throw ConfigError("attack epsilon must be >= 0");
    if (iterations < 1) throw ConfigError("attack iterations must be >= 1");
    if (gamma < 0 || gamma > 1) throw ConfigError("jsma gamma must be in [0,1]");
    if (clip_lo >= clip_hi) throw ConfigError("attack clip range is empty");
}

Tensor loss_input_gradient(const Params& p, const Tensor& X, const Tensor& y) {
    Graph g;
    ParamVars pv = insert_params(g, p);
    VarId xv = g.leaf(X);
    VarId h = cross_entropy(g, forward(g, pv, xv), g.leaf(y));
    return backward_one(g, h, xv);
}

Tensor fgsm(const Params& p, const Tensor& X, const Tensor& y, double epsilon, double clip_lo,
            double clip_hi) {
    if (epsilon < 0) throw ValueError("fgsm: epsilon must be >= 0");
    Tensor gx = loss_input_gradient(p, X, y);
    return clip(add(X, scale(sign(gx), epsilon)), clip_lo, clip_hi);
}

Tensor tgsm(const Params& p, const Tensor& X, const Tensor& y_target, double epsilon,
            double clip_lo, double clip_hi) {
    if (epsilon < 0) throw ValueError("tgsm: epsilon must be >= 0");
    Tensor gx = loss_input_gradient(p, X, y_target);
    return clip(sub(X, scale(sign(gx), epsilon)), clip_lo, clip_hi);
}

Tensor plus_one_targets(const Tensor& y) {
    const Index k = y.cols();
    std::vector<Index> labels = argmax_rows(y);
    for (Index& l : labels) l = (l + 1) % k;
    return one_hot(labels, k);
}

Tensor iterate(const Tensor& X0, int steps,
               const std::function<Tensor(const Tensor&)>& attack_step) {
    if (steps < 1) throw ValueError("iterate: steps must be >= 1");
    Tensor x = X0;
    for (int s = 0; s < steps; ++s) x = attack_step(x);
    return x;
}

Tensor logit_jacobian(const Params& p, const Tensor& x) {
    if (x.rows() != 1) throw ShapeError("logit_jacobian: expected a single example");
    Graph g;
    ParamVars pv = insert_params(g, p);
    VarId xv = g.leaf(x);
    VarId z = logits(g, pv, xv);
    const Index k = g.value(z).cols();
    Tensor jac(Shape{k, x.cols()});
    for (Index c = 0; c < k; ++c) {
        Tensor pick(Shape{1, k});
        pick.at(0, c) = 1.0;
        VarId zc = sum(g, mul(g, z, g.leaf(pick)), -1);
        Tensor row = backward_one(g, zc, xv);
        for (Index d = 0; d < x.cols(); ++d) jac.at(c, d) = row[d];
    }
    return jac;
}

JsmaResult jsma(const Params& p, const Tensor& x, const Tensor& y_target, double gamma,
                double clip_hi) {
    if (x.rows() != 1) throw ShapeError("jsma: expected a single example");
    if (y_target.rows() != 1 || y_target.cols() < 2)
        throw ShapeError("jsma: target must be a one-hot row");
    if (gamma < 0 || gamma > 1) throw ValueError("jsma: gamma must be in [0,1]");

    const Index d = x.cols();
    const Index target = argmax_rows(y_target)[0];
    const auto budget = static_cast<Index>(gamma * static_cast<double>(d));

    JsmaResult res;
    res.x_adv = x;
    std::set<Index> changed;

    while (true) {
        if (predict_labels(p, res.x_adv)[0] == target) {
            res.success = true;
            break;
        }
        // Search space: pixels not yet saturated at the max of the clip range.
        std::vector<Index> open;
        for (Index i = 0; i < d; ++i)
            if (res.x_adv[i] < clip_hi) open.push_back(i);
        if (open.size() < 2) break;

        const Tensor jac = logit_jacobian(p, res.x_adv);
        std::vector<double> alpha(static_cast<size_t>(d)), others(static_cast<size_t>(d));
        for (Index i = 0; i < d; ++i) {
            double sum_all = 0.0;
            for (Index c = 0; c < jac.rows(); ++c) sum_all += jac.at(c, i);
            alpha[static_cast<size_t>(i)] = jac.at(target, i);
            others[static_cast<size_t>(i)] = sum_all - jac.at(target, i);
        }

        // Best pair: target-gradient sum positive, other-gradient sum
        // negative, maximizing -alpha*beta.
        double best = 0.0;
        Index bp = -1, bq = -1;
        for (size_t ii = 0; ii < open.size(); ++ii)
            for (size_t jj = ii + 1; jj < open.size(); ++jj) {
                const Index pi = open[ii], qi = open[jj];
                const double a = alpha[static_cast<size_t>(pi)] + alpha[static_cast<size_t>(qi)];
                const double b = others[static_cast<size_t>(pi)] + others[static_cast<size_t>(qi)];
                if (a <= 0.0 || b >= 0.0) continue;
                const double score = -a * b;
                if (score > best) {
                    best = score;
                    bp = pi;
                    bq = qi;
                }
            }
        if (bp < 0) break;  // no admissible pair left

        std::set<Index> next = changed;
        next.insert(bp);
        next.insert(bq);
        if (static_cast<Index>(next.size()) > budget) break;  // budget exhausted
        res.x_adv[bp] = clip_hi;
        res.x_adv[bq] = clip_hi;
        changed = std::move(next);
    }
    res.pixels_changed = static_cast<Index>(changed.size());
    return res;
}

}  // namespace rrr
