#pragma once

#include "rrr/attacks.hpp"
#include "rrr/data.hpp"
#include "rrr/explain.hpp"
#include "rrr/train.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rrr {

struct Roster {
    std::vector<std::string> names;
    std::vector<Params> models;
    Index size() const { return static_cast<Index>(models.size()); }
};

/// acc[source][target] per epsilon: every roster model evaluated on examples
/// generated against each source model (true labels for FGSM, y+1 targets for
/// TGSM; standalone evaluation). The diagonal is the white-box cell.
struct AttackMatrix {
    std::vector<double> epsilons;
    std::vector<std::string> names;
    AttackKind kind = AttackKind::fgsm;
    // indexed [eps][source][target]
    std::vector<std::vector<std::vector<double>>> accuracy;
};

AttackMatrix attack_matrix(const Roster& roster, const Dataset& test,
                           std::span<const double> epsilons,
                           AttackKind kind = AttackKind::fgsm);

/// Distribution summaries of per-example loss-gradient norms and predicted
/// log-probabilities for one model (the magnitude-statistics comparison).
struct GradientStats {
    double norm_p25 = 0, norm_median = 0, norm_p75 = 0;
    double logp_median = 0;  // median predicted-class log-probability
};

GradientStats gradient_stats(const Params& p, const Dataset& test);

/// Per source model: which example indices each roster model misclassifies,
/// plus the intersection over all models.
struct OverlapReport {
    std::vector<std::string> names;
    double epsilon = 0;
    std::vector<std::vector<std::vector<Index>>> fooled;  // [source][target] -> indices
    std::vector<std::vector<Index>> fooled_by_all;        // [source] -> indices
};

OverlapReport overlap_report(const Roster& roster, const Dataset& test, double epsilon);

struct SweepPoint {
    double lambda = 0;
    double ratio = 0;  // lambda * penalty0 / ce0 at initialization
    double test_acc = -1;
    bool diverged = false;
};

/// One training run per lambda (shared seed); divergent runs are recorded,
/// not fatal.
std::vector<SweepPoint> sweep_lambda(const Dataset& train_ds, const Dataset& test_ds,
                                     const TrainConfig& cfg, const Tensor& A,
                                     std::span<const double> grid);

struct EfficiencyPoint {
    std::string variant;
    Index n = 0;
    double lambda = 0;
    double test_acc = 0;
};

/// Accuracy-vs-N curves for annotation variants {none, pro_rule1, pro_rule2,
/// anti_rule1, anti_rule2}; lambda is re-balanced at each N.
std::vector<EfficiencyPoint> data_efficiency(const Dataset& pool, const Dataset& test,
                                             const TrainConfig& base,
                                             std::span<const std::string> variants,
                                             std::span<const Index> n_grid,
                                             std::span<const double> lambda_grid);

enum class ImageFormat { pgm, ppm };

/// Plain-text PGM (P2) / PPM (P3), maxval 255, values rounded half-up.
/// `values` holds one image (length = geometry numel), all entries in [0,1].
void dump_image(const Tensor& values, const Geometry& geom, const std::filesystem::path& path,
                ImageFormat format);

/// Affine map for signed gradient dumps: v -> (v / max|v| + 1) / 2.
Tensor normalize_signed(const Tensor& v);

/// MNIST via IDX files under dir (or $RRR_DATA_DIR when dir empty):
/// train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-*.
std::optional<std::pair<Dataset, Dataset>> try_load_mnist(Index train_limit, Index test_limit,
                                                          std::string dir = {});

/// The "digit task" used by attack experiments: a MNIST subset when IDX files
/// are available, otherwise Toy Color at the given sizes.
struct DigitTask {
    Dataset train;
    Dataset test;
    bool is_mnist = false;
};
DigitTask make_digit_task(Index n_train, Index n_test, std::uint64_t seed);

/// Runs the experiment described by a JSON config file; writes report.json
/// and auxiliary logs under out_dir. Returns the report path.
std::filesystem::path run_experiment(const std::filesystem::path& config_path,
                                     const std::filesystem::path& out_dir, int jobs = 1,
                                     std::optional<std::uint64_t> seed_override = {});

}  // namespace rrr
