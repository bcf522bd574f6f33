#pragma once

#include "clclsa/adam.hpp"
#include "clclsa/data.hpp"
#include "clclsa/losses.hpp"
#include "clclsa/metrics.hpp"
#include "clclsa/model.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace clclsa {

struct LrSchedule {
    enum class Kind { Step, Constant };
    Kind kind = Kind::Step;
    std::size_t step_every = 500;
    double factor = 0.2;
};

struct TrainConfig {
    std::size_t epochs = 2500;
    double initial_lr = 1e-4;
    LrSchedule schedule;
    std::size_t batch_size = 0; ///< 0 = whole training set per step
    std::uint64_t seed = 0;
    LossWeights weights;
    Reduction reduction = Reduction::Mean;
    std::size_t eval_every = 0; ///< validation interval in epochs, 0 = never
    /// Terms whose code path is skipped entirely (ablation wiring).
    std::vector<LossTerm> disabled_terms;

    void validate() const;
    bool disabled(LossTerm term) const;
};

/// Budget used for the synthetic desk experiments: 500 epochs at lr 1e-3.
TrainConfig desk_train_config(std::uint64_t seed = 0);

/// Step decay initial_lr · factor^⌊epoch / step_every⌋, or constant.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct EpochLog {
    std::size_t epoch = 0;
    LossBreakdown loss;
    double lr = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;
    std::vector<double> latent_variance;
};

struct TrainResult {
    Model model;
    std::vector<EpochLog> logs;
    std::uint64_t optimizer_steps = 0;
    /// Weights actually used (λ_co is forced to 0 on complete data).
    LossWeights weights;
    bool aborted = false;
    std::string diagnostic;
};

/// Trains a fresh model. On a non-finite loss or gradient the run stops
/// before the offending update: `aborted` is set, `diagnostic` names the
/// term, and `model` holds the last finite parameters.
TrainResult train(const MultiOmicsDataset& ds, const ModelConfig& model_config,
                  const TrainConfig& cfg, const MultiOmicsDataset* validation = nullptr);

/// One optimisation step on a batch. Exposed for tests and custom loops.
struct StepOutcome {
    LossBreakdown loss;
    double train_acc = 0.0;
    std::vector<double> latent_variance;
};
StepOutcome train_step(Model& model, Adam& optimizer, std::span<const Tensor> views,
                       const ObservationMask& mask, std::span<const int> labels,
                       const TrainConfig& cfg, const LossWeights& weights, double lr,
                       RngStream& dropout_rng);

/// Loss breakdown and graph for the full objective; used by train_step and
/// by gradient checks. `dropout_rng` may be null when dropout is off;
/// `aux_targets` optionally fixes the auxiliary confidence targets.
struct ObjectiveGraph {
    LossBreakdown loss;
    Var total;
    BatchForward forward;
};
ObjectiveGraph build_objective(Graph& g, Model& model, std::span<const Tensor> views,
                               const ObservationMask& mask, std::span<const int> labels,
                               const TrainConfig& cfg, const LossWeights& weights,
                               RngStream* dropout_rng, std::span<const Tensor> aux_targets = {});

// ---------------------------------------------------------------------------

struct GridSpec {
    std::vector<double> lambda_al{kLambdaGrid.begin(), kLambdaGrid.end()};
    std::vector<double> lambda_co{kLambdaGrid.begin(), kLambdaGrid.end()};
    std::vector<double> lambda_cl{kLambdaGrid.begin(), kLambdaGrid.end()};
    std::string metric = "acc";
    double validation_fraction = 0.2; ///< used when no validation set is given
};

struct GridTrial {
    LossWeights weights;
    std::optional<double> metric;
    std::string status = "ok"; ///< ok | failed
    std::string message;
};

struct GridResult {
    /// Successful trials best-first, then failed trials in grid order.
    std::vector<GridTrial> trials;
    std::optional<std::size_t> best;
    std::size_t validation_subjects = 0;
};

/// Cartesian product of the candidate sets, one training run each, all with
/// base.seed. Complete training data collapses λ_co to {0}. Ties prefer
/// smaller λ_cl, then λ_co, then λ_al.
GridResult grid_search(const MultiOmicsDataset& train_ds, const MultiOmicsDataset* val_ds,
                       const ModelConfig& model_config, const GridSpec& grid,
                       const TrainConfig& base, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Serialization and run directories

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
void to_json(nlohmann::json& j, const GridSpec& grid);
void from_json(const nlohmann::json& j, GridSpec& grid);

std::string loss_term_name(LossTerm term);
LossTerm parse_loss_term(const std::string& name);

/// epoch,l_clf,l_al,l_co,l_cl,total,lr,train_acc,val_acc,latent_var_<i>...
void write_epoch_log_csv(const std::vector<EpochLog>& logs, const std::filesystem::path& path);
/// lambda_al,lambda_co,lambda_cl,metric,status
void write_grid_summary_csv(const GridResult& result, const std::filesystem::path& path);

/// Runs `count` independent jobs on up to `threads` threads; job i writes
/// only its own slot, so results do not depend on scheduling.
void run_parallel(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& job);

} // namespace clclsa
