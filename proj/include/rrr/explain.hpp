#pragma once

#include "rrr/data.hpp"
#include "rrr/nn.hpp"
#include "rrr/train.hpp"

#include <span>
#include <string>
#include <vector>

namespace rrr {

enum class GradKind { sum_log_probs, prob, true_label_ce };

GradKind grad_kind_from(const std::string& name);

/// Per-example input gradient of the selected scalar:
///   sum_log_probs: sum_k log yhat_k (the regularizer's quantity)
///   prob:          predicted-class probability
///   true_label_ce: H(y, yhat), requires labels
Tensor input_gradients(const Params& p, const Tensor& X, GradKind kind = GradKind::sum_log_probs,
                       const Tensor* y = nullptr);

/// M_c: per row, 1 where |g_d| / max_d' |g_d'| >= c; an all-zero gradient row
/// yields an all-zero mask row.
Tensor mask_topratio(const Tensor& expl, double c);

enum class AnnotationRule { corners, top_middle, pro_rule1, pro_rule2, swatch, iris_columns };

AnnotationRule annotation_rule_from(const std::string& name);

/// Binary N x D mask for a named feature region of the dataset. `swatch`
/// reads the injector's recorded coordinates; the others depend only on
/// geometry.
Tensor build_annotation(const Dataset& ds, AnnotationRule rule);

/// Fraction of M_c-selected gradient components that fall inside each region
/// (regions are [D] or [N,D] binary masks), aggregated over the batch.
std::vector<double> rule_mass(const Tensor& expl, std::span<const Tensor> regions, double c);

struct FaeIteration {
    Params params;
    Tensor annotation;  // the A_i this model was trained under
    double train_acc = 0;
    double test_acc = 0;
    double lambda1 = 0;
    std::vector<double> region_mass;  // per configured region, on the training set
};

struct FaeConfig {
    double cutoff = 0.67;
    std::vector<double> lambda_schedule = {1e3, 1e6};  // lambda1 for iterations 1, 2, ...
    Index max_iters = 3;
    GradKind grad_kind = GradKind::sum_log_probs;
    double stop_accuracy_margin = 0.1;   // stop below 1/K + margin (train accuracy)
    double stop_coverage = 0.95;         // stop when A covers this fraction
    std::vector<Tensor> regions;         // optional rule-mass regions
};

/// Sequential find-another-explanation: A_0 = 0, A_{i+1} = A_i union
/// M_c[explanation of theta_i on the training set].
std::vector<FaeIteration> fae_sequential(const Dataset& train_ds, const Dataset& test_ds,
                                         const TrainConfig& base, const FaeConfig& fae);

struct SimultaneousResult {
    std::vector<Params> models;
    std::vector<StepLog> log;         // per-step totals across models
    std::vector<double> pair_penalty; // final per-pair penalty values
};

/// Jointly trains M models, penalizing pairwise squared cosine similarity of
/// their input gradients with the given weight.
SimultaneousResult fae_simultaneous(const Dataset& ds, const TrainConfig& cfg, Index model_count,
                                    double penalty_weight,
                                    GradKind kind = GradKind::sum_log_probs);

/// Mean per-example |cosine| between two models' input gradients (diagnostic).
double mean_abs_cosine(const Params& a, const Params& b, const Tensor& X,
                       GradKind kind = GradKind::sum_log_probs);

}  // namespace rrr
