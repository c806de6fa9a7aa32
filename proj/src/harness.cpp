#include "rrr/harness.hpp"

#include "rrr/objectives.hpp"
#include "rrr/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <thread>

namespace rrr {

using json = nlohmann::json;

namespace {

const json& need(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key)) throw ConfigError("config: missing field '" + ctx + key + "'");
    return j.at(key);
}

template <typename T>
T need_as(const json& j, const std::string& key, const std::string& ctx) {
    try {
        return need(j, key, ctx).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + ctx + key + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T def) {
    if (!j.contains(key)) return def;
    return j.at(key).get<T>();
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void parallel_for(Index n, int jobs, const std::function<void(Index)>& body) {
    if (jobs <= 1 || n <= 1) {
        for (Index i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<Index> next{0};
    const int workers = std::min<int>(jobs, static_cast<int>(n));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (Index i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

AttackMatrix attack_matrix(const Roster& roster, const Dataset& test,
                           std::span<const double> epsilons, AttackKind kind) {
    if (roster.size() == 0) throw ConfigError("attack_matrix: empty roster");
    if (kind == AttackKind::jsma) throw ConfigError("attack_matrix: jsma is per-example only");
    AttackMatrix m;
    m.epsilons.assign(epsilons.begin(), epsilons.end());
    m.names = roster.names;
    m.kind = kind;
    const Tensor targets = kind == AttackKind::tgsm ? plus_one_targets(test.y) : Tensor{};
    for (double eps : epsilons) {
        std::vector<std::vector<double>> per_source;
        for (Index s = 0; s < roster.size(); ++s) {
            const Params& src = roster.models[static_cast<size_t>(s)];
            const Tensor x_adv = kind == AttackKind::tgsm ? tgsm(src, test.X, targets, eps)
                                                          : fgsm(src, test.X, test.y, eps);
            std::vector<double> row;
            for (Index t = 0; t < roster.size(); ++t)
                row.push_back(accuracy(roster.models[static_cast<size_t>(t)], x_adv, test.y));
            per_source.push_back(std::move(row));
        }
        m.accuracy.push_back(std::move(per_source));
    }
    return m;
}

GradientStats gradient_stats(const Params& p, const Dataset& test) {
    const Tensor g = input_gradients(p, test.X, GradKind::true_label_ce, &test.y);
    std::vector<double> norms;
    for (Index i = 0; i < g.rows(); ++i) {
        double s = 0;
        for (Index j = 0; j < g.cols(); ++j) s += g.at(i, j) * g.at(i, j);
        norms.push_back(std::sqrt(s));
    }
    std::sort(norms.begin(), norms.end());
    const Tensor logp = predict_log_probs(p, test.X);
    std::vector<double> best;
    for (Index i = 0; i < logp.rows(); ++i) {
        double top = logp.at(i, 0);
        for (Index k = 1; k < logp.cols(); ++k) top = std::max(top, logp.at(i, k));
        best.push_back(top);
    }
    std::sort(best.begin(), best.end());
    const auto pick = [](const std::vector<double>& v, double q) {
        return v[static_cast<size_t>(q * static_cast<double>(v.size() - 1))];
    };
    GradientStats st;
    st.norm_p25 = pick(norms, 0.25);
    st.norm_median = pick(norms, 0.5);
    st.norm_p75 = pick(norms, 0.75);
    st.logp_median = pick(best, 0.5);
    return st;
}

OverlapReport overlap_report(const Roster& roster, const Dataset& test, double epsilon) {
    if (roster.size() < 1) throw ConfigError("overlap_report: empty roster");
    OverlapReport rep;
    rep.names = roster.names;
    rep.epsilon = epsilon;
    const std::vector<Index> truth = argmax_rows(test.y);
    for (Index s = 0; s < roster.size(); ++s) {
        const Tensor x_adv = fgsm(roster.models[static_cast<size_t>(s)], test.X, test.y, epsilon);
        std::vector<std::vector<Index>> fooled_per_target;
        for (Index t = 0; t < roster.size(); ++t) {
            const std::vector<Index> pred = predict_labels(roster.models[static_cast<size_t>(t)], x_adv);
            std::vector<Index> fooled;
            for (Index i = 0; i < test.n(); ++i)
                if (pred[static_cast<size_t>(i)] != truth[static_cast<size_t>(i)]) fooled.push_back(i);
            fooled_per_target.push_back(std::move(fooled));
        }
        std::vector<Index> everyone = fooled_per_target[0];
        for (Index t = 1; t < roster.size(); ++t) {
            std::vector<Index> next;
            std::set_intersection(everyone.begin(), everyone.end(),
                                  fooled_per_target[static_cast<size_t>(t)].begin(),
                                  fooled_per_target[static_cast<size_t>(t)].end(),
                                  std::back_inserter(next));
            everyone = std::move(next);
        }
        rep.fooled.push_back(std::move(fooled_per_target));
        rep.fooled_by_all.push_back(std::move(everyone));
    }
    return rep;
}

std::vector<SweepPoint> sweep_lambda(const Dataset& train_ds, const Dataset& test_ds,
                                     const TrainConfig& cfg, const Tensor& A,
                                     std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("sweep_lambda: empty grid");
    const LambdaChoice base = balance_lambda(train_ds, cfg, grid, A);

    std::vector<SweepPoint> points(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        SweepPoint& pt = points[i];
        pt.lambda = grid[i];
        pt.ratio = grid[i] * base.penalty0 / base.ce0;
        TrainConfig c = cfg;
        c.penalty.lambda1 = grid[i];
        try {
            TrainResult r = train(train_ds, c, A);
            pt.test_acc = accuracy(r.params, test_ds.X, test_ds.y);
        } catch (const DivergenceError&) {
            pt.diverged = true;
        }
    }
    return points;
}

std::vector<EfficiencyPoint> data_efficiency(const Dataset& pool, const Dataset& test,
                                             const TrainConfig& base,
                                             std::span<const std::string> variants,
                                             std::span<const Index> n_grid,
                                             std::span<const double> lambda_grid) {
    std::vector<EfficiencyPoint> out;
    for (const std::string& variant : variants) {
        for (Index n : n_grid) {
            Dataset ds_n = take(pool, n);
            EfficiencyPoint pt;
            pt.variant = variant;
            pt.n = n;
            TrainConfig cfg = base;
            cfg.batch = std::min(cfg.batch, n);
            Tensor A;
            if (variant != "none") {
                AnnotationRule rule;
                if (variant == "pro_rule1") rule = AnnotationRule::pro_rule1;
                else if (variant == "pro_rule2") rule = AnnotationRule::pro_rule2;
                else if (variant == "anti_rule1") rule = AnnotationRule::corners;
                else if (variant == "anti_rule2") rule = AnnotationRule::top_middle;
                else throw ConfigError("data_efficiency: unknown variant '" + variant + "'");
                A = build_annotation(ds_n, rule);
                cfg.penalty.kind = PenaltyKind::rrr;
                cfg.penalty.lambda1 = balance_lambda(ds_n, cfg, lambda_grid, A).lambda;
            } else {
                cfg.penalty.kind = PenaltyKind::rrr;
                cfg.penalty.lambda1 = 0.0;
                A = Tensor::zeros(ds_n.X.shape());
            }
            pt.lambda = cfg.penalty.lambda1;
            TrainResult r = train(ds_n, cfg, A);
            pt.test_acc = accuracy(r.params, test.X, test.y);
            out.push_back(std::move(pt));
        }
    }
    return out;
}

void dump_image(const Tensor& values, const Geometry& geom, const std::filesystem::path& path,
                ImageFormat format) {
    if (!geom.present() || values.numel() != geom.numel())
        throw ShapeError("dump_image: geometry does not match tensor length");
    const Index expect_c = format == ImageFormat::ppm ? 3 : 1;
    if (geom.channels != expect_c)
        throw ShapeError("dump_image: channel count does not match format");
    for (Index i = 0; i < values.numel(); ++i)
        if (!(values[i] >= 0.0 && values[i] <= 1.0))
            throw ValueError("dump_image: values must lie in [0,1]");

    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << (format == ImageFormat::ppm ? "P3" : "P2") << "\n";
    os << geom.width << " " << geom.height << "\n255\n";
    for (Index r = 0; r < geom.height; ++r) {
        for (Index i = 0; i < geom.width * geom.channels; ++i) {
            const double v = values[r * geom.width * geom.channels + i];
            const int q = static_cast<int>(std::floor(v * 255.0 + 0.5));
            os << (i ? " " : "") << q;
        }
        os << "\n";
    }
}

Tensor normalize_signed(const Tensor& v) {
    const double peak = max_abs(v);
    Tensor out(v.shape());
    if (peak == 0.0) {
        out.array().setConstant(0.5);
        return out;
    }
    out.array() = (v.array() / peak + 1.0) / 2.0;
    return out;
}

std::optional<std::pair<Dataset, Dataset>> try_load_mnist(Index train_limit, Index test_limit,
                                                          std::string dir) {
    if (dir.empty()) {
        const char* env = std::getenv("RRR_DATA_DIR");
        if (env == nullptr) return std::nullopt;
        dir = env;
    }
    namespace fs = std::filesystem;
    const fs::path base(dir);
    const fs::path files[4] = {base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte",
                               base / "t10k-images-idx3-ubyte", base / "t10k-labels-idx1-ubyte"};
    for (const auto& f : files)
        if (!fs::exists(f)) return std::nullopt;
    Dataset train = dataset_from_idx(load_idx_file(files[0]), load_idx_file(files[1]), train_limit);
    Dataset test = dataset_from_idx(load_idx_file(files[2]), load_idx_file(files[3]), test_limit);
    return std::make_pair(std::move(train), std::move(test));
}

DigitTask make_digit_task(Index n_train, Index n_test, std::uint64_t seed) {
    DigitTask task;
    if (auto mnist = try_load_mnist(n_train, n_test)) {
        task.train = std::move(mnist->first);
        task.test = std::move(mnist->second);
        task.is_mnist = true;
    } else {
        task.train = gen_toy_color(n_train, seed);
        task.test = gen_toy_color(n_test, Rng::derive(seed, 7));
    }
    return task;
}

// ---------------------------------------------------------------------------
// Config-driven experiments
// ---------------------------------------------------------------------------

namespace {

struct DatasetBundle {
    Dataset train;
    Dataset test;
    std::string kind;
};

DatasetBundle make_datasets(const json& d) {
    DatasetBundle b;
    b.kind = need_as<std::string>(d, "kind", "dataset.");
    const auto seed = need_as<std::uint64_t>(d, "seed", "dataset.");
    const Index n_train = get_or<Index>(d, "n_train", 10000);
    const Index n_test = get_or<Index>(d, "n_test", 1000);
    const std::uint64_t test_seed = Rng::derive(seed, 7);

    if (b.kind == "toy_color") {
        b.train = gen_toy_color(n_train, seed);
        b.test = gen_toy_color(n_test, test_seed);
    } else if (b.kind == "decoy_color") {
        const double noise = get_or<double>(d, "rule_noise", 0.2);
        b.train = gen_decoy_color(n_train, DecoyMode::train, seed, noise);
        b.test = gen_decoy_color(n_test, DecoyMode::test, test_seed, noise);
    } else if (b.kind == "quadrant2d") {
        b.train = gen_quadrant2d(n_train, seed);
        b.test = gen_quadrant2d(n_test, test_seed);
    } else if (b.kind == "iris_cancer") {
        const auto iris = need_as<std::string>(d, "iris_csv", "dataset.");
        const auto cancer = need_as<std::string>(d, "cancer_csv", "dataset.");
        Dataset all = load_iris_cancer(iris, cancer, seed);
        const double fraction = get_or<double>(d, "train_fraction", 2.0 / 3.0);
        std::tie(b.train, b.test) = train_test_split(all, fraction, test_seed);
    } else if (b.kind == "mnist" || b.kind == "decoy_mnist") {
        auto mnist = try_load_mnist(n_train, n_test, get_or<std::string>(d, "dir", ""));
        if (!mnist)
            throw ConfigError("dataset: MNIST IDX files not found (set RRR_DATA_DIR or dataset.dir)");
        b.train = std::move(mnist->first);
        b.test = std::move(mnist->second);
        if (b.kind == "decoy_mnist") {
            b.train = inject_decoy(b.train, DecoyMode::train, seed);
            b.test = inject_decoy(b.test, DecoyMode::test, test_seed);
        }
    } else if (b.kind == "file") {
        b.train = load_dataset(need_as<std::string>(d, "path", "dataset."));
        if (d.contains("test_path")) b.test = load_dataset(d.at("test_path").get<std::string>());
    } else {
        throw ConfigError("dataset: unknown kind '" + b.kind + "'");
    }
    return b;
}

TrainConfig make_train_config(const json& t) {
    TrainConfig cfg;
    cfg.spec.sizes = need_as<std::vector<Index>>(t, "sizes", "train.");
    cfg.seed = need_as<std::uint64_t>(t, "seed", "train.");
    cfg.batch = get_or<Index>(t, "batch", 256);
    cfg.steps = get_or<Index>(t, "steps", 1000);
    cfg.alpha = get_or<double>(t, "alpha", 1e-3);
    cfg.beta1 = get_or<double>(t, "beta1", 0.9);
    cfg.beta2 = get_or<double>(t, "beta2", 0.999);
    cfg.eps_adam = get_or<double>(t, "eps_adam", 1e-8);
    cfg.penalty.kind = penalty_kind_from(get_or<std::string>(t, "penalty", "none"));
    cfg.penalty.lambda1 = get_or<double>(t, "lambda1", 0.0);
    cfg.penalty.lambda2 = get_or<double>(t, "lambda2", 0.0);
    cfg.penalty.sigma = get_or<double>(t, "sigma", 1e-3);
    cfg.penalty.n_noise = get_or<int>(t, "n_noise", 1);
    cfg.defense = defense_from(get_or<std::string>(t, "defense", "none"));
    cfg.adv_eps = get_or<double>(t, "adv_eps", 0.3);
    cfg.distill_temperature = get_or<double>(t, "distill_T", 50.0);
    cfg.probe_every = get_or<Index>(t, "probe_every", 0);
    if (t.contains("init_seed")) cfg.init_seed = t.at("init_seed").get<std::uint64_t>();
    return cfg;
}

Tensor make_annotation(const json& t, const Dataset& ds) {
    const std::string name = get_or<std::string>(t, "annotation", "none");
    if (name == "none") return {};
    Tensor A = build_annotation(ds, annotation_rule_from(name));
    const double fraction = get_or<double>(t, "annotation_fraction", 1.0);
    if (fraction < 1.0) {
        const auto keep = static_cast<Index>(std::ceil(fraction * static_cast<double>(ds.n())));
        for (Index i = keep; i < ds.n(); ++i)
            for (Index j = 0; j < ds.d(); ++j) A.at(i, j) = 0.0;
    }
    return A;
}

json accuracy_entry(const Params& p, const Dataset& train, const Dataset& test) {
    json j;
    j["train_acc"] = accuracy(p, train.X, train.y);
    j["test_acc"] = accuracy(p, test.X, test.y);
    j["test_predictions"] = predict_labels(p, test.X);
    return j;
}

std::string eps_key(double eps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", eps);
    return buf;
}

json matrix_to_json(const AttackMatrix& m) {
    json j;
    for (size_t e = 0; e < m.epsilons.size(); ++e) {
        json per_source;
        for (size_t s = 0; s < m.names.size(); ++s) {
            json row;
            for (size_t t = 0; t < m.names.size(); ++t) row[m.names[t]] = m.accuracy[e][s][t];
            per_source[m.names[s]] = std::move(row);
        }
        j[eps_key(m.epsilons[e])] = std::move(per_source);
    }
    return j;
}

json overlaps_to_json(const OverlapReport& rep) {
    json j;
    j["epsilon"] = rep.epsilon;
    for (size_t s = 0; s < rep.names.size(); ++s) {
        json entry;
        for (size_t t = 0; t < rep.names.size(); ++t) {
            entry["fooled_count"][rep.names[t]] = rep.fooled[s][t].size();
            entry["fooled"][rep.names[t]] = rep.fooled[s][t];
        }
        entry["fooled_by_all"] = rep.fooled_by_all[s];
        entry["fooled_by_all_count"] = rep.fooled_by_all[s].size();
        j[rep.names[s]] = std::move(entry);
    }
    return j;
}

/// Train one roster member according to its defense.
Params train_roster_model(const Dataset& train_ds, const TrainConfig& cfg, const Tensor& A,
                          std::vector<StepLog>* log_out) {
    switch (cfg.defense) {
        case Defense::adv_train: {
            TrainResult r = adversarial_train(train_ds, cfg);
            if (log_out) *log_out = std::move(r.log);
            return std::move(r.params);
        }
        case Defense::distill: {
            DistillResult r = distill_train(train_ds, cfg);
            if (log_out) *log_out = std::move(r.student_log);
            return std::move(r.student);
        }
        case Defense::none:
        case Defense::grad_reg: {
            TrainResult r = train(train_ds, cfg, A);
            if (log_out) *log_out = std::move(r.log);
            return std::move(r.params);
        }
    }
    throw ConfigError("unknown defense");
}

}  // namespace

std::filesystem::path run_experiment(const std::filesystem::path& config_path,
                                     const std::filesystem::path& out_dir, int jobs,
                                     std::optional<std::uint64_t> seed_override) {
    std::ifstream is(config_path);
    if (!is) throw IoError("cannot open config " + config_path.string());
    json cfg;
    try {
        cfg = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    if (seed_override) {
        if (cfg.contains("dataset")) cfg["dataset"]["seed"] = *seed_override;
        if (cfg.contains("train")) cfg["train"]["seed"] = *seed_override;
    }

    std::filesystem::create_directories(out_dir);
    const std::string experiment = need_as<std::string>(cfg, "experiment", "");
    json report;
    report["experiment"] = experiment;
    report["config_digest"] = fnv1a_hex(cfg.dump());
    const std::filesystem::path report_path = out_dir / "report.json";

    auto flush = [&report, &report_path] {
        std::ofstream os(report_path);
        os << report.dump(2) << "\n";
    };

    try {
        if (experiment == "train") {
            DatasetBundle b = make_datasets(need(cfg, "dataset", ""));
            TrainConfig tc = make_train_config(need(cfg, "train", ""));
            Tensor A = make_annotation(cfg.at("train"), b.train);
            std::vector<StepLog> log;
            Params p = train_roster_model(b.train, tc, A, &log);
            write_train_log(log, out_dir / "train_log.txt");
            save_params(p, out_dir / "params.bin",
                        {{"seed", std::to_string(tc.seed)},
                         {"config_digest", report["config_digest"].get<std::string>()}});
            report["model"] = accuracy_entry(p, b.train, b.test);
        } else if (experiment == "toy_rules") {
            DatasetBundle b = make_datasets(need(cfg, "dataset", ""));
            TrainConfig tc = make_train_config(need(cfg, "train", ""));
            Tensor A = make_annotation(cfg.at("train"), b.train);
            TrainResult r = train(b.train, tc, A);
            write_train_log(r.log, out_dir / "train_log.txt");
            report["model"] = accuracy_entry(r.params, b.train, b.test);
            const Tensor regions[2] = {build_annotation(b.test, AnnotationRule::corners),
                                       build_annotation(b.test, AnnotationRule::top_middle)};
            const Tensor expl = input_gradients(r.params, b.test.X);
            const auto mass = rule_mass(expl, regions, get_or<double>(cfg, "cutoff", 0.67));
            report["rule_mass"]["corners"] = mass[0];
            report["rule_mass"]["top_middle"] = mass[1];
        } else if (experiment == "decoy") {
            // Clean baseline, confounded A=0, and full-swatch-A recovery.
            DatasetBundle decoy = make_datasets(need(cfg, "dataset", ""));
            if (decoy.train.aux_mask.empty())
                throw ConfigError("decoy experiment needs a decoy dataset kind");
            TrainConfig tc = make_train_config(need(cfg, "train", ""));

            json dclean = cfg.at("dataset");
            dclean["kind"] = decoy.kind == "decoy_mnist" ? "mnist" : "toy_color";
            DatasetBundle clean = make_datasets(dclean);

            TrainConfig base = tc;
            base.penalty.kind = PenaltyKind::none;
            base.penalty.lambda1 = 0;
            TrainResult clean_r = train(clean.train, base);
            report["clean_baseline"] = accuracy_entry(clean_r.params, clean.train, clean.test);

            TrainResult confounded = train(decoy.train, base);
            report["decoy_a0"] = accuracy_entry(confounded.params, decoy.train, decoy.test);

            TrainConfig reg = tc;
            reg.penalty.kind = PenaltyKind::rrr;
            Tensor A = build_annotation(decoy.train, AnnotationRule::swatch);
            if (cfg.contains("sweep")) {
                const auto grid = need_as<std::vector<double>>(cfg.at("sweep"), "grid", "sweep.");
                reg.penalty.lambda1 = balance_lambda(decoy.train, reg, grid, A).lambda;
            }
            report["lambda1"] = reg.penalty.lambda1;
            TrainResult swatch_r = train(decoy.train, reg, A);
            report["decoy_full_a"] = accuracy_entry(swatch_r.params, decoy.train, decoy.test);
        } else if (experiment == "attack_matrix") {
            DatasetBundle b = make_datasets(need(cfg, "dataset", ""));
            const json& models = need(cfg, "models", "");
            Roster roster;
            std::vector<TrainConfig> tcs;
            std::vector<Tensor> masks;
            for (const json& mj : models) {
                roster.names.push_back(need_as<std::string>(mj, "name", "models[]."));
                tcs.push_back(make_train_config(need(mj, "train", "models[].")));
                masks.push_back(make_annotation(mj.at("train"), b.train));
            }
            roster.models.resize(tcs.size());
            parallel_for(static_cast<Index>(tcs.size()), jobs, [&](Index i) {
                roster.models[static_cast<size_t>(i)] = train_roster_model(
                    b.train, tcs[static_cast<size_t>(i)], masks[static_cast<size_t>(i)], nullptr);
            });
            for (size_t i = 0; i < roster.names.size(); ++i) {
                report["clean"][roster.names[i]] =
                    accuracy_entry(roster.models[i], b.train, b.test);
                const GradientStats st = gradient_stats(roster.models[i], b.test);
                json& sj = report["gradient_stats"][roster.names[i]];
                sj["norm_p25"] = st.norm_p25;
                sj["norm_median"] = st.norm_median;
                sj["norm_p75"] = st.norm_p75;
                sj["logp_median"] = st.logp_median;
            }
            const auto eps = need_as<std::vector<double>>(cfg, "epsilons", "");
            report["fgsm_matrix"] = matrix_to_json(attack_matrix(roster, b.test, eps));
            if (get_or<bool>(cfg, "tgsm", false))
                report["tgsm_matrix"] =
                    matrix_to_json(attack_matrix(roster, b.test, eps, AttackKind::tgsm));
            if (cfg.contains("overlap_epsilon"))
                report["overlaps"] =
                    overlaps_to_json(overlap_report(roster, b.test, cfg.at("overlap_epsilon").get<double>()));
        } else if (experiment == "fae") {
            DatasetBundle b = make_datasets(need(cfg, "dataset", ""));
            TrainConfig tc = make_train_config(need(cfg, "train", ""));
            FaeConfig fc;
            const json& fj = need(cfg, "fae", "");
            fc.cutoff = get_or<double>(fj, "cutoff", 0.67);
            fc.lambda_schedule = get_or<std::vector<double>>(fj, "lambda_schedule", {1e3, 1e6});
            fc.max_iters = get_or<Index>(fj, "max_iters", 3);
            fc.grad_kind = grad_kind_from(get_or<std::string>(fj, "grad_kind", "sum_log_probs"));
            std::vector<Tensor> regions;
            if (b.train.geom.height == kToyColorSide && b.train.geom.channels == kToyColorChannels) {
                regions.push_back(build_annotation(b.train, AnnotationRule::corners));
                regions.push_back(build_annotation(b.train, AnnotationRule::top_middle));
                fc.regions = regions;
            }
            auto iters = fae_sequential(b.train, b.test, tc, fc);
            json ji = json::array();
            for (size_t i = 0; i < iters.size(); ++i) {
                json e;
                e["iteration"] = i;
                e["lambda1"] = iters[i].lambda1;
                e["train_acc"] = iters[i].train_acc;
                e["test_acc"] = iters[i].test_acc;
                if (!iters[i].region_mass.empty()) {
                    e["rule_mass"]["corners"] = iters[i].region_mass[0];
                    e["rule_mass"]["top_middle"] = iters[i].region_mass[1];
                }
                e["annotation_coverage"] =
                    iters[i].annotation.array().sum() / static_cast<double>(iters[i].annotation.numel());
                save_params(iters[i].params, out_dir / ("params_iter" + std::to_string(i) + ".bin"));
                ji.push_back(std::move(e));
            }
            report["iterations"] = std::move(ji);
        } else if (experiment == "fae2d") {
            DatasetBundle b = make_datasets(need(cfg, "dataset", ""));
            TrainConfig tc = make_train_config(need(cfg, "train", ""));
            const Index m = get_or<Index>(cfg, "model_count", 2);
            const double weight = get_or<double>(cfg, "penalty_weight", 1.0);
            SimultaneousResult r = fae_simultaneous(b.train, tc, m, weight);
            for (Index i = 0; i < m; ++i) {
                const auto& p = r.models[static_cast<size_t>(i)];
                report["models"][std::to_string(i)] = accuracy_entry(p, b.train, b.test);
            }
            report["mean_abs_cosine"] = mean_abs_cosine(r.models[0], r.models[1], b.test.X);
            report["pair_penalty_final"] = r.pair_penalty;
        } else if (experiment == "sweep") {
            DatasetBundle b = make_datasets(need(cfg, "dataset", ""));
            TrainConfig tc = make_train_config(need(cfg, "train", ""));
            Tensor A = make_annotation(cfg.at("train"), b.train);
            if (A.empty()) throw ConfigError("sweep needs train.annotation");
            tc.penalty.kind = PenaltyKind::rrr;
            const auto grid = need_as<std::vector<double>>(need(cfg, "sweep", ""), "grid", "sweep.");
            auto points = sweep_lambda(b.train, b.test, tc, A, grid);
            json jp = json::array();
            for (const auto& pt : points) {
                json e;
                e["lambda"] = pt.lambda;
                e["ratio"] = pt.ratio;
                e["diverged"] = pt.diverged;
                if (!pt.diverged) e["test_acc"] = pt.test_acc;
                jp.push_back(std::move(e));
            }
            report["points"] = std::move(jp);
        } else if (experiment == "data_efficiency") {
            DatasetBundle b = make_datasets(need(cfg, "dataset", ""));
            TrainConfig tc = make_train_config(need(cfg, "train", ""));
            const json& de = need(cfg, "data_efficiency", "");
            const auto variants = need_as<std::vector<std::string>>(de, "variants", "data_efficiency.");
            const auto n_grid = need_as<std::vector<Index>>(de, "n_grid", "data_efficiency.");
            const auto lg = get_or<std::vector<double>>(de, "lambda_grid",
                                                        {1, 10, 100, 1e3, 1e4, 1e5, 1e6});
            auto points = data_efficiency(b.train, b.test, tc, variants, n_grid, lg);
            json jp = json::array();
            for (const auto& pt : points) {
                json e;
                e["variant"] = pt.variant;
                e["n"] = pt.n;
                e["lambda"] = pt.lambda;
                e["test_acc"] = pt.test_acc;
                jp.push_back(std::move(e));
            }
            report["points"] = std::move(jp);
        } else {
            throw ConfigError("config: unknown experiment '" + experiment + "'");
        }
    } catch (...) {
        report["status"] = "failed";
        flush();  // partial results for whatever completed
        throw;
    }
    report["status"] = "ok";
    flush();
    return report_path;
}

}  // namespace rrr
