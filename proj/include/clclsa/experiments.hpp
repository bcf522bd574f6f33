#pragma once

#include "clclsa/data.hpp"
#include "clclsa/metrics.hpp"
#include "clclsa/model.hpp"
#include "clclsa/train.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clclsa {

/// Metric values of one trial, or a mean/stddev across trials.
struct MetricValues {
    double acc = 0.0;
    std::optional<double> f1;
    std::optional<double> auc;
    double weighted_f1 = 0.0;
    double macro_f1 = 0.0;

    static MetricValues from(const MetricsReport& r);
};

/// One line of a long-format result table.
struct TrialRow {
    std::string dataset;
    std::string variant;
    double eta = 0.0;
    std::optional<std::uint64_t> seed; ///< empty for aggregate rows
    LossWeights weights;
    std::optional<MetricValues> metrics;
    std::string status = "ok"; ///< ok | failed | aggregate_mean | aggregate_std
    std::string message;
};

struct SweepPoint {
    double eta = 0.0;
    std::vector<TrialRow> trials;
    /// Arithmetic mean and sample standard deviation over successful trials;
    /// empty when none succeeded. The deviation is 0 for a single trial.
    std::optional<MetricValues> mean;
    std::optional<MetricValues> stddev;
};

struct SweepResult {
    std::vector<SweepPoint> points; ///< strictly increasing η
};

/// Shared settings of every experiment runner. Per trial with seed s the
/// dataset is split with seed s, the training part (and, when mask_test is
/// set, the test part) is masked at η with seed s, and training uses seed s.
struct ExperimentSetup {
    std::string dataset = "synthetic";
    std::string variant = "clclsa";
    /// Template; input dims, class count and view names follow the dataset.
    ModelConfig model;
    TrainConfig train;
    double train_fraction = 0.7;
    bool mask_test = true;
    MissingPolicy policy;
    /// Train on fully observed training subjects only (reference baseline).
    bool complete_case = false;
    std::size_t threads = 1;
};

/// Model template adjusted to the shapes of `ds`.
ModelConfig adapt_config(const ModelConfig& base, const MultiOmicsDataset& ds);

/// One split/mask/train/evaluate run. Failures come back as status "failed".
TrialRow run_trial(const MultiOmicsDataset& ds, const ExperimentSetup& setup, double eta,
                   std::uint64_t seed);

/// Mean and sample standard deviation of the successful rows.
std::pair<std::optional<MetricValues>, std::optional<MetricValues>>
aggregate(const std::vector<TrialRow>& rows);

SweepResult missing_rate_sweep(const MultiOmicsDataset& ds, const ExperimentSetup& setup,
                               const std::vector<double>& etas,
                               const std::vector<std::uint64_t>& seeds);

struct SubsetResult {
    std::vector<std::size_t> views;
    SweepResult sweep;
};

/// Sweep on the dataset restricted to each view subset (each ≥ 2 views).
std::vector<SubsetResult> partial_omics_run(const MultiOmicsDataset& ds,
                                            const std::vector<std::vector<std::size_t>>& subsets,
                                            const ExperimentSetup& setup,
                                            const std::vector<double>& etas,
                                            const std::vector<std::uint64_t>& seeds);

enum class Lambda { Al, Co, Cl };

struct SurfaceSpec {
    Lambda fixed = Lambda::Al;
    std::vector<double> lambda_al{0.1};
    std::vector<double> lambda_co{0.01, 0.02, 0.05, 0.1, 1.0};
    std::vector<double> lambda_cl{0.01, 0.02, 0.05, 0.1, 1.0};
    double eta = 0.2;
    std::vector<std::uint64_t> seeds{0};

    void validate() const;
};

/// One row per (cell, seed), cells in (λ_al, λ_co, λ_cl) lexicographic order.
std::vector<TrialRow> hyperparam_surface(const MultiOmicsDataset& ds, const SurfaceSpec& spec,
                                         const ExperimentSetup& setup);

struct AblationSpec {
    std::vector<std::string> variants{"ctst+aux", "ctst", "aux", "plain"};
    std::vector<double> etas{0.2, 0.4};
    std::vector<std::uint64_t> seeds{0};
    double lambda_co = 0.1;
};

/// Loss weights of a named ablation variant: ctst keeps λ_cl, aux keeps λ_al,
/// ctst+aux keeps both, plain zeroes both; λ_co is set to `lambda_co`.
LossWeights ablation_weights(const std::string& variant, const LossWeights& base, double lambda_co);

struct AblationResult {
    std::string variant;
    SweepResult sweep;
};

std::vector<AblationResult> ablation_run(const MultiOmicsDataset& ds, const AblationSpec& spec,
                                         const ExperimentSetup& setup);

/// Per-trial rows followed by aggregate_mean / aggregate_std rows per η.
std::vector<TrialRow> report_rows(const SweepResult& sweep, bool with_aggregates = true);

} // namespace clclsa
