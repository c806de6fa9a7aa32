#include "rrr/train.hpp"

#include "rrr/attacks.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

using namespace rrr;

namespace {

bool params_equal(const Params& a, const Params& b, double atol = 0.0) {
    for (Index l = 0; l < a.layers(); ++l)
        if (!allclose(a.weights[l], b.weights[l], atol) || !allclose(a.biases[l], b.biases[l], atol))
            return false;
    return true;
}

TrainConfig tiny_config(std::uint64_t seed = 0) {
    TrainConfig cfg;
    cfg.spec = LayerSpec{{75, 20, 2}};
    cfg.batch = 64;
    cfg.steps = 60;
    cfg.seed = seed;
    cfg.penalty.lambda2 = 1e-4;
    return cfg;
}

}  // namespace

TEST_CASE("training is bitwise deterministic per seed") {
    Dataset ds = gen_toy_color(400, 1);
    TrainConfig cfg = tiny_config(3);
    TrainResult a = train(ds, cfg);
    TrainResult b = train(ds, cfg);
    CHECK(params_equal(a.params, b.params));
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].ce == b.log[i].ce);
        CHECK(a.log[i].total == b.log[i].total);
    }
}

TEST_CASE("per-step log terms add up") {
    Dataset ds = gen_toy_color(400, 2);
    TrainConfig cfg = tiny_config(4);
    cfg.penalty.kind = PenaltyKind::rrr;
    cfg.penalty.lambda1 = 50.0;
    Tensor A = Tensor::ones({400, 75});
    TrainResult r = train(ds, cfg, A);
    for (const StepLog& e : r.log) {
        const double expect = e.ce + cfg.penalty.lambda1 * e.penalty + cfg.penalty.lambda2 * e.wd;
        CHECK(std::abs(e.total - expect) < 1e-9);
        CHECK(e.penalty > 0.0);
    }
}

TEST_CASE("rrr with an all-zero mask reproduces plain training bitwise") {
    Dataset ds = gen_toy_color(400, 5);
    TrainConfig plain = tiny_config(6);
    TrainConfig masked = plain;
    masked.penalty.kind = PenaltyKind::rrr;
    masked.penalty.lambda1 = 1000.0;
    TrainResult a = train(ds, plain);
    TrainResult b = train(ds, masked, Tensor::zeros({400, 75}));
    CHECK(params_equal(a.params, b.params));
}

TEST_CASE("divergence guard reports the failing step") {
    Dataset ds = gen_toy_color(100, 7);
    TrainConfig cfg = tiny_config(8);
    cfg.alpha = 1e6;  // absurd learning rate blows the loss up fast
    cfg.steps = 200;
    try {
        train(ds, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step >= 0);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("stratified batching guarantees annotated examples per batch") {
    const Index n = 500, batch = 50;
    Tensor A = Tensor::zeros({n, 4});
    std::set<Index> annotated = {3, 77, 141, 240, 366};
    for (Index i : annotated) A.at(i, 0) = 1.0;

    BatchScheduler sched(n, batch, A, Rng(9));
    CHECK(sched.annotated_quota() == 1);
    std::set<Index> seen;
    for (int s = 0; s < 30; ++s) {
        const auto idx = sched.next();
        CHECK(static_cast<Index>(idx.size()) == batch);
        Index ann = 0;
        for (Index i : idx) {
            ann += annotated.count(i) ? 1 : 0;
            seen.insert(i);
        }
        CHECK(ann >= 1);
    }
    CHECK(seen.size() == static_cast<size_t>(n));  // full coverage over epochs
}

TEST_CASE("adversarial training") {
    Dataset ds = gen_toy_color(300, 10);

    SUBCASE("epsilon zero reduces to plain training") {
        TrainConfig cfg = tiny_config(11);
        cfg.steps = 80;
        cfg.adv_eps = 0.0;
        TrainResult plain = train(ds, cfg);
        TrainResult adv = adversarial_train(ds, cfg);
        for (Index l = 0; l < plain.params.layers(); ++l) {
            CHECK(rrr::testing::max_rel_error(plain.params.weights[l], adv.params.weights[l], 1e-4) <
                  1e-6);
        }
        CHECK(accuracy(plain.params, ds.X, ds.y) == accuracy(adv.params, ds.X, ds.y));
    }

    SUBCASE("theta-gradient treats the perturbation as a constant") {
        // One manual step: AD gradient of the averaged loss vs finite
        // differences with X_adv frozen.
        const Params p = init_params(LayerSpec{{4, 5, 2}}, 12);
        Rng rng(13);
        const Tensor X = rrr::testing::random_tensor({6, 4}, rng, 0.0, 1.0);
        const Tensor y = one_hot({0, 1, 0, 1, 1, 0}, 2);
        const Tensor pred = one_hot(predict_labels(p, X), 2);
        const Tensor x_adv = fgsm(p, X, pred, 0.3);

        Graph g;
        ParamVars pv = insert_params(g, p);
        VarId loss = scale(g,
                           add(g, cross_entropy(g, forward(g, pv, g.leaf(X)), g.leaf(y)),
                               cross_entropy(g, forward(g, pv, g.leaf(x_adv)), g.leaf(y))),
                           0.5);
        const std::vector<VarId> wrt = pv.flat();
        const auto ad = backward(g, loss, wrt);

        const LayerSpec spec = p.spec();
        const auto fd = finite_difference_params(
            [&](const std::vector<Tensor>& probe) {
                const Params q = Params::from_flat(spec, probe);
                Graph gg;
                ParamVars qq = insert_params(gg, q);
                VarId l = scale(gg,
                                add(gg, cross_entropy(gg, forward(gg, qq, gg.leaf(X)), gg.leaf(y)),
                                    cross_entropy(gg, forward(gg, qq, gg.leaf(x_adv)), gg.leaf(y))),
                                0.5);
                return gg.value(l).item();
            },
            p.flat(), 1e-5);
        for (size_t i = 0; i < ad.size(); ++i)
            CHECK(rrr::testing::max_rel_error(ad[i], fd[i], 1e-7) < 1e-5);
    }
}

TEST_CASE("distillation") {
    Dataset ds = gen_toy_color(600, 14);
    TrainConfig cfg = tiny_config(15);
    cfg.steps = 800;
    cfg.alpha = 0.01;
    cfg.penalty.lambda2 = 0.0;
    cfg.distill_temperature = 50.0;

    DistillResult r = distill_train(ds, cfg);

    SUBCASE("T=1 targets equal ordinary probabilities") {
        Tensor t1 = distill_targets(r.teacher, take(ds, 8).X, 1.0);
        Tensor direct = rrr::exp(predict_log_probs(r.teacher, take(ds, 8).X));
        CHECK(allclose(t1, direct, 0.0));
    }

    SUBCASE("student tracks the teacher's clean accuracy") {
        Dataset test = gen_toy_color(400, 16);
        const double teacher_acc = accuracy(r.teacher, test.X, test.y);
        const double student_acc = accuracy(r.student, test.X, test.y);
        CHECK(teacher_acc > 0.8);
        CHECK(std::abs(teacher_acc - student_acc) <= 0.03);
    }
}

TEST_CASE("balance_lambda picks the ratio closest to one") {
    Dataset ds = gen_decoy_color(512, DecoyMode::train, 17);
    TrainConfig cfg = tiny_config(18);
    cfg.spec = LayerSpec{{75, 20, 2}};
    cfg.penalty.kind = PenaltyKind::rrr;
    Tensor A = ds.aux_mask;

    const double grid[] = {1, 10, 100, 1e3, 1e4, 1e5, 1e6};
    LambdaChoice pick = balance_lambda(ds, cfg, grid, A);
    CHECK(pick.ce0 > 0);
    CHECK(pick.penalty0 > 0);

    // Chosen lambda is the argmin of |log10 ratio| over the grid, and with a
    // powers-of-ten grid that ratio lands within one order of magnitude of 1.
    double best = 1e300;
    double expect = 0;
    for (auto [lambda, ratio] : pick.ratios) {
        if (std::abs(std::log10(ratio)) < best) {
            best = std::abs(std::log10(ratio));
            expect = lambda;
        }
    }
    CHECK(pick.lambda == expect);
    const double chosen_ratio = pick.lambda * pick.penalty0 / pick.ce0;
    CHECK(chosen_ratio > 0.1);
    CHECK(chosen_ratio < 10.0);

    SUBCASE("single-element grid returns it") {
        const double one[] = {42.0};
        CHECK(balance_lambda(ds, cfg, one, A).lambda == 42.0);
    }
    SUBCASE("zero penalty at initialization is an error") {
        CHECK_THROWS_AS(balance_lambda(ds, cfg, grid, Tensor::zeros({512, 75})), ValueError);
    }
}

TEST_CASE("training log file format") {
    std::vector<StepLog> log(2);
    log[0] = {0, 1.5, 0.25, 3.0, 1.5 + 0.25 + 3.0, -1};
    log[1] = {1, 1.25, 0.5, 3.0, 5.0, 0.75};
    const auto path = std::filesystem::temp_directory_path() / "rrr_log_test.txt";
    write_train_log(log, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line.find("step=0 ce=1.5 penalty=0.25 wd=3") == 0);
    CHECK(line.find("probe_acc") == std::string::npos);
    std::getline(is, line);
    CHECK(line.find("probe_acc=0.75") != std::string::npos);
    std::filesystem::remove(path);
}
