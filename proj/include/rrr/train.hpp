#pragma once

#include "rrr/data.hpp"
#include "rrr/nn.hpp"
#include "rrr/objectives.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rrr {

enum class Defense { none, grad_reg, adv_train, distill };

Defense defense_from(const std::string& name);
const char* defense_name(Defense d);

struct TrainConfig {
    LayerSpec spec;
    PenaltyConfig penalty;
    Index batch = 256;
    Index steps = 1000;
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> init_seed;  // defaults to seed
    Defense defense = Defense::none;
    double adv_eps = 0.3;
    double distill_temperature = 50.0;
    double temperature = 1.0;  // softmax temperature during training
    Index probe_every = 0;     // 0 disables probe evaluation
    void validate(Index n) const;
};

/// Thrown when the loss goes non-finite or explodes; carries the step index.
struct DivergenceError : std::runtime_error {
    Index step;
    DivergenceError(Index step_, const std::string& what)
        : std::runtime_error(what), step(step_) {}
};

struct StepLog {
    Index step = 0;
    double ce = 0, penalty = 0, wd = 0, total = 0;
    double probe_acc = -1;  // < 0 when no probe was run at this step
};

/// Cycles seeded shuffles of the row indices. When annotated rows exist they
/// are stratified so every minibatch carries its share of them (at least one).
class BatchScheduler {
public:
    BatchScheduler(Index n, Index batch, const Tensor& A, Rng rng);
    std::vector<Index> next();
    Index annotated_quota() const { return quota_.size() > 1 ? quota_[0] : 0; }

private:
    Index batch_;
    Rng rng_;
    std::vector<std::pair<std::vector<Index>, Index>> pools_;
    std::vector<Index> quota_;
};

struct TrainResult {
    Params params;
    std::vector<StepLog> log;
};

/// Seeded minibatch Adam on the configured objective. A (N x D) may be empty;
/// when it has annotated rows they are guaranteed a slot in every minibatch.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const Tensor& A = {},
                  const Dataset* probe = nullptr);

/// FGSM examples at cfg.adv_eps w.r.t. predicted labels, treated as constants;
/// loss is the average of the clean and adversarial cross entropies.
TrainResult adversarial_train(const Dataset& ds, const TrainConfig& cfg,
                              const Dataset* probe = nullptr);

struct DistillResult {
    Params teacher;
    Params student;
    std::vector<StepLog> teacher_log;
    std::vector<StepLog> student_log;
};

/// Two-phase defensive distillation at cfg.distill_temperature: the teacher
/// trains on one-hot labels, the student on the teacher's detached soft
/// targets, both through a temperature-T softmax. Evaluate at T = 1.
DistillResult distill_train(const Dataset& ds, const TrainConfig& cfg,
                            const Dataset* probe = nullptr);

struct LambdaChoice {
    double lambda = 0;
    double ce0 = 0;       // initial cross-entropy term
    double penalty0 = 0;  // initial raw explanation term
    std::vector<std::pair<double, double>> ratios;  // (lambda, lambda*penalty0/ce0)
};

/// Appendix-style balancing: pick the grid lambda whose initial
/// lambda*penalty/cross-entropy ratio is nearest 1 (in log distance).
LambdaChoice balance_lambda(const Dataset& ds, const TrainConfig& cfg,
                            std::span<const double> grid, const Tensor& A = {});

/// Line-delimited text log: step=.. ce=.. penalty=.. wd=.. total=.. probe_acc=..
void write_train_log(const std::vector<StepLog>& log, const std::filesystem::path& path);

}  // namespace rrr
