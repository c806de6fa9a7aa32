#include "rrr/objectives.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace rrr;
using rrr::testing::max_rel_error;
using rrr::testing::random_tensor;

namespace {

Tensor random_unit_inputs(Index n, Index d, std::uint64_t seed) {
    Rng rng(seed);
    return random_tensor({n, d}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("cross_entropy summation convention") {
    SUBCASE("perfect one-hot prediction contributes zero") {
        Graph g;
        // log-probs for a perfectly confident, correct prediction
        Tensor logp(Shape{1, 2}, {0.0, -745.0});
        Tensor y(Shape{1, 2}, {1.0, 0.0});
        CHECK(g.value(cross_entropy(g, g.leaf(logp), g.leaf(y))).item() == 0.0);
    }
    SUBCASE("uniform prediction over ten classes") {
        Graph g;
        Tensor logp = Tensor::full({1, 10}, std::log(0.1));
        Tensor y = one_hot({3}, 10);
        CHECK(g.value(cross_entropy(g, g.leaf(logp), g.leaf(y))).item() ==
              doctest::Approx(std::log(10.0)).epsilon(1e-12));
    }
    SUBCASE("two uniform rows sum, not average") {
        Graph g;
        Tensor logp = Tensor::full({2, 2}, std::log(0.5));
        Tensor y = one_hot({0, 1}, 2);
        CHECK(g.value(cross_entropy(g, g.leaf(logp), g.leaf(y))).item() ==
              doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("shape mismatch") {
        Graph g;
        CHECK_THROWS_AS(
            cross_entropy(g, g.leaf(Tensor::zeros({2, 3})), g.leaf(Tensor::zeros({2, 2}))),
            ShapeError);
    }
}

TEST_CASE("rrr_loss degenerate configurations") {
    const Params p = init_params(LayerSpec{{4, 5, 3}}, 1);
    const Tensor X = random_unit_inputs(4, 4, 2);
    const Tensor y = one_hot({0, 1, 2, 0}, 3);

    SUBCASE("all-zero mask reduces to cross entropy plus weight decay") {
        Graph g;
        ParamVars pv = insert_params(g, p);
        LossTerms t = rrr_loss(g, pv, g.leaf(X), y, Tensor::zeros({4, 4}), 1000.0, 1e-4);
        CHECK(g.value(t.penalty).item() == 0.0);
        const double expect = g.value(t.ce).item() + 1e-4 * g.value(t.wd).item();
        CHECK(g.value(t.total).item() == doctest::Approx(expect).epsilon(1e-15));
    }
    SUBCASE("lambda1 = lambda2 = 0 equals cross entropy bitwise") {
        Graph g;
        ParamVars pv = insert_params(g, p);
        LossTerms t = rrr_loss(g, pv, g.leaf(X), y, Tensor::ones({4, 4}), 0.0, 0.0);
        CHECK(g.value(t.total).item() == g.value(t.ce).item());
    }
    SUBCASE("value is nondecreasing in lambda1") {
        double prev = -1;
        for (double l1 : {0.0, 1.0, 10.0, 100.0}) {
            Graph g;
            ParamVars pv = insert_params(g, p);
            LossTerms t = rrr_loss(g, pv, g.leaf(X), y, Tensor::ones({4, 4}), l1, 0.0);
            const double v = g.value(t.total).item();
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("rrr penalty theta-gradient matches finite differences on a [2,3,2] net") {
    const LayerSpec spec{{2, 3, 2}};
    const Params p = init_params(spec, 3);
    const Tensor X = random_unit_inputs(4, 2, 5);
    Rng arng(6);
    Tensor A(Shape{4, 2});
    for (Index i = 0; i < A.numel(); ++i) A[i] = arng.below(2) ? 1.0 : 0.0;
    A[0] = 1.0;

    Graph g;
    ParamVars pv = insert_params(g, p);
    VarId pen = rrr_penalty(g, pv, g.leaf(X), g.leaf(A));
    const std::vector<VarId> wrt = pv.flat();
    const auto ad = backward(g, pen, wrt);

    const auto fd = finite_difference_params(
        [&](const std::vector<Tensor>& probe) {
            Graph gg;
            ParamVars pp = insert_params(gg, Params::from_flat(spec, probe));
            return gg.value(rrr_penalty(gg, pp, gg.leaf(X), gg.leaf(A))).item();
        },
        p.flat(), 1e-5);
    for (size_t i = 0; i < ad.size(); ++i) CHECK(max_rel_error(ad[i], fd[i], 1e-7) < 1e-3);
}

TEST_CASE("doubleback loss") {
    const Tensor y = one_hot({0, 1, 0}, 2);
    const Tensor X = random_unit_inputs(3, 4, 7);

    SUBCASE("lambda 0 equals cross entropy bitwise") {
        const Params p = init_params(LayerSpec{{4, 5, 2}}, 2);
        Graph g;
        ParamVars pv = insert_params(g, p);
        LossTerms t = doubleback_loss(g, pv, g.leaf(X), y, 0.0);
        CHECK(g.value(t.total).item() == g.value(t.ce).item());
    }

    SUBCASE("linear softmax closed form") {
        // No hidden layer: grad_x H = (yhat - y) W^T, so the penalty is
        // lambda * sum_n ||W^T (yhat_n - y_n)||^2.
        const Params p = init_params(LayerSpec{{4, 2}}, 4);
        Graph g;
        ParamVars pv = insert_params(g, p);
        LossTerms t = doubleback_loss(g, pv, g.leaf(X), y, 2.5);

        Tensor yhat = rrr::exp(predict_log_probs(p, X));
        Tensor resid = rrr::sub(yhat, y);
        Tensor gx = rrr::matmul(resid, p.weights[0], false, true);
        const double closed = 2.5 * rrr::sum(rrr::square(gx)).item();
        CHECK(g.value(scale(g, t.penalty, 2.5)).item() == doctest::Approx(closed).epsilon(1e-10));
    }
}

TEST_CASE("certainty penalty") {
    const Tensor X = random_unit_inputs(3, 4, 8);

    SUBCASE("constant model has zero penalty") {
        Params p;
        p.weights = {Tensor::zeros({4, 3})};
        p.biases = {Tensor::zeros({3})};
        Graph g;
        ParamVars pv = insert_params(g, p);
        CHECK(g.value(certainty_penalty(g, pv, g.leaf(X), 5.0)).item() == 0.0);
    }

    SUBCASE("equals 1/K^2 of the unscaled sum-log-prob gradient norm") {
        const Params p = init_params(LayerSpec{{4, 5, 3}}, 5);
        Graph g;
        ParamVars pv = insert_params(g, p);
        const double pen = g.value(certainty_penalty_raw(g, pv, g.leaf(X))).item();

        Graph h;
        ParamVars ph = insert_params(h, p);
        VarId xv = h.leaf(X);
        VarId neg_sum = scale(h, sum(h, forward(h, ph, xv), -1), -1.0);
        Tensor gx = backward_one(h, neg_sum, xv);
        const double norm = rrr::sum(rrr::square(gx)).item();
        CHECK(pen == doctest::Approx(norm / 9.0).epsilon(1e-12));
    }

    SUBCASE("never reads labels: identical for any relabeling") {
        const Params p = init_params(LayerSpec{{4, 5, 3}}, 5);
        Graph g;
        ParamVars pv = insert_params(g, p);
        const double v1 = g.value(certainty_penalty_raw(g, pv, g.leaf(X))).item();
        CHECK(v1 > 0);  // and it compiled without any y argument at all
    }
}

TEST_CASE("l1 gradient penalty value equals the absolute-value sum") {
    const Params p = init_params(LayerSpec{{4, 5, 2}}, 6);
    const Tensor X = random_unit_inputs(3, 4, 9);
    const Tensor y = one_hot({0, 1, 1}, 2);

    Graph g;
    ParamVars pv = insert_params(g, p);
    const double pen = g.value(l1_grad_penalty(g, pv, g.leaf(X), g.leaf(y), 3.0)).item();

    Graph h;
    ParamVars ph = insert_params(h, p);
    VarId xv = h.leaf(X);
    Tensor gx = backward_one(h, cross_entropy(h, forward(h, ph, xv), h.leaf(y)), xv);
    CHECK(pen == doctest::Approx(3.0 * rrr::sum(rrr::abs(gx)).item()).epsilon(1e-12));

    SUBCASE("zero-gradient model gives zero") {
        Params zero;
        zero.weights = {Tensor::zeros({4, 2})};
        zero.biases = {Tensor::zeros({2})};
        Graph z;
        ParamVars pz = insert_params(z, zero);
        CHECK(z.value(l1_grad_penalty(z, pz, z.leaf(X), z.leaf(y), 3.0)).item() == 0.0);
    }
}

TEST_CASE("hessian norm estimator") {
    // f(x) = sum x^2 has Hessian 2I,"||2I||_F^2 = 4D.
    const Index d = 6;
    Rng rng(10);
    const Tensor X = random_tensor({1, d}, rng);
    auto quad = [](Graph& g, VarId x) { return sum(g, square(g, x), -1); };

    SUBCASE("quadratic sanity ratio") {
        Graph g;
        Rng noise(77);
        VarId est = hessian_norm_estimate(g, quad, g.leaf(X), 1e-3, 64, noise);
        const double ratio = g.value(est).item() / (4.0 * static_cast<double>(d));
        CHECK(ratio > 0.5);
        CHECK(ratio < 2.0);
    }
    SUBCASE("linear function estimates zero") {
        Graph g;
        Rng noise(77);
        auto lin = [](Graph& gg, VarId x) { return sum(gg, x, -1); };
        VarId est = hessian_norm_estimate(g, lin, g.leaf(X), 1e-3, 8, noise);
        CHECK(g.value(est).item() < 1e-12);
    }
    SUBCASE("same seed, same estimate") {
        auto run = [&] {
            Graph g;
            Rng noise(123);
            return g.value(hessian_norm_estimate(g, quad, g.leaf(X), 1e-3, 4, noise)).item();
        };
        CHECK(run() == run());
    }
    SUBCASE("parameter validation") {
        Graph g;
        Rng noise(1);
        CHECK_THROWS_AS(hessian_norm_estimate(g, quad, g.leaf(X), 0.0, 4, noise), ValueError);
        CHECK_THROWS_AS(hessian_norm_estimate(g, quad, g.leaf(X), 1e-3, 0, noise), ValueError);
    }
}

TEST_CASE("distill targets") {
    const Params p = init_params(LayerSpec{{4, 5, 3}}, 11);
    const Tensor X = random_unit_inputs(5, 4, 12);

    Tensor t = distill_targets(p, X, 50.0);
    for (Index i = 0; i < t.rows(); ++i) {
        double s = 0;
        for (Index k = 0; k < t.cols(); ++k) s += t.at(i, k);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }

    Tensor hot = distill_targets(p, X, 1e9);
    for (Index i = 0; i < hot.numel(); ++i)
        CHECK(hot[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-5));

    Tensor unit = distill_targets(p, X, 1.0);
    Tensor direct = rrr::exp(predict_log_probs(p, X));
    CHECK(allclose(unit, direct, 0.0));

    CHECK_THROWS_AS(distill_targets(p, X, 0.0), ValueError);
}

TEST_CASE("cosine similarity penalty") {
    auto value = [](const Tensor& a, const Tensor& b) {
        Graph g;
        return g.value(cosine_sim_penalty(g, g.leaf(a), g.leaf(b))).item();
    };

    Rng rng(13);
    Tensor v = random_tensor({3, 4}, rng);

    SUBCASE("parallel rows score about one each") {
        CHECK(value(v, v) == doctest::Approx(3.0).epsilon(1e-4));
    }
    SUBCASE("orthogonal rows score zero") {
        Tensor a(Shape{1, 2}, {1.0, 0.0});
        Tensor b(Shape{1, 2}, {0.0, 1.0});
        CHECK(value(a, b) == 0.0);
    }
    SUBCASE("zero rows are rescued by epsilon") {
        Tensor z = Tensor::zeros({2, 3});
        CHECK(value(z, z) == 0.0);
    }
    SUBCASE("symmetric in its arguments") {
        Tensor w = random_tensor({3, 4}, rng);
        CHECK(value(v, w) == value(w, v));
    }
    SUBCASE("invariant to positive rescaling up to epsilon") {
        Tensor w = random_tensor({3, 4}, rng);
        CHECK(std::abs(value(v, w) - value(scale(v, 10.0), w)) < 1e-6);
    }
    SUBCASE("shape mismatch") {
        Graph g;
        CHECK_THROWS_AS(
            cosine_sim_penalty(g, g.leaf(Tensor::zeros({2, 3})), g.leaf(Tensor::zeros({3, 2}))),
            ShapeError);
    }
}
