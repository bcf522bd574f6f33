#pragma once

#include "clclsa/autodiff.hpp"
#include "clclsa/mask.hpp"
#include "clclsa/rng.hpp"
#include "clclsa/tensor.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clclsa {

/// How a missing view's latent is filled in.
enum class CompletionMode {
    CrossView, ///< mean of dec_i(enc_k(ẑ_k)) over the observed views k
    ZeroFill,  ///< zeros; reference baseline
};

struct ModelConfig {
    std::vector<std::size_t> input_dims; ///< |V_i| per view
    std::vector<std::size_t> embed_dims; ///< D_i per view, all equal
    std::size_t num_classes = 2;
    std::array<std::size_t, 2> ae_hidden{64, 32};
    double dropout_p = 0.5;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    CompletionMode completion = CompletionMode::CrossView;
    std::vector<std::string> view_names;

    std::size_t num_views() const noexcept { return input_dims.size(); }
    std::size_t latent_dim() const { return embed_dims.at(0); }
    /// Throws InvalidArgument on M < 2, zero dimensions or unequal embeddings.
    void validate() const;
};

/// Network settings of the four benchmark cohorts: "rosmap", "lgg", "brca",
/// "kipan". KIPAN uses 3 classes everywhere (the per-view heads and the
/// cohort description agree on 3; the fused head listing 5 does not).
ModelConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

/// Small architecture used for the synthetic experiments.
ModelConfig desk_config(std::vector<std::size_t> input_dims, std::size_t num_classes);

/// Indices of an affine layer's weight [in×out] and bias [1×out].
struct DenseLayer {
    std::size_t weight = 0;
    std::size_t bias = 0;
};

struct NormLayer {
    std::size_t gamma = 0;
    std::size_t beta = 0;
};

struct ViewLayers {
    DenseLayer feature_attention; ///< f_i: |V_i| -> |V_i|
    DenseLayer embed;             ///< emb_i: |V_i| -> D, ReLU, dropout
    DenseLayer view_attention;    ///< g_i: D -> 1
    DenseLayer aux_classifier;    ///< c_i: D -> C, softmax
    DenseLayer enc_in;            ///< enc_i: D -> h1, BN, ReLU
    NormLayer enc_norm;
    DenseLayer enc_out;           ///<        h1 -> h2, ReLU
    DenseLayer dec_in;            ///< dec_i: h2 -> h1, BN, ReLU
    NormLayer dec_norm;
    DenseLayer dec_out;           ///<        h1 -> D
};

/// All learnable weights plus batch-norm running statistics.
class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t num_views() const noexcept { return config_.num_views(); }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    const ViewLayers& view(std::size_t i) const { return views_.at(i); }
    const DenseLayer& classifier() const noexcept { return classifier_; }

    BatchNormState& encoder_norm_state(std::size_t i) { return enc_bn_.at(i); }
    BatchNormState& decoder_norm_state(std::size_t i) { return dec_bn_.at(i); }
    const BatchNormState& encoder_norm_state(std::size_t i) const { return enc_bn_.at(i); }
    const BatchNormState& decoder_norm_state(std::size_t i) const { return dec_bn_.at(i); }

private:
    ModelConfig config_;
    ParameterSet params_;
    std::vector<ViewLayers> views_;
    DenseLayer classifier_;
    std::vector<BatchNormState> enc_bn_;
    std::vector<BatchNormState> dec_bn_;
};

// ---------------------------------------------------------------------------
// Forward pass

/// Per-view quantities for the rows the view was observed on.
struct ViewForward {
    Var feature_attention; ///< fatt = σ(f_i(x))
    Var embedding;         ///< x̂ = dropout(relu(emb_i(x ⊙ fatt)))
    Var view_attention;    ///< matt = σ(g_i(x̂)), one column
    Var latent;            ///< ẑ = x̂ · matt
    Var aux_probs;         ///< softmax(c_i(ẑ))
};

ViewForward forward_view(Graph& g, Model& model, std::size_t view, Var x,
                         RngStream* dropout_rng);

/// Column-wise concatenation in view order.
Var fuse(Graph& g, std::span<const Var> latents);

Var encode(Graph& g, Model& model, std::size_t view, Var latent);
Var decode(Graph& g, Model& model, std::size_t view, Var code);
/// h_ik(ẑ_k) = dec_i(enc_k(ẑ_k)). Throws InvalidArgument when source == target.
Var cross_predict(Graph& g, Model& model, Var latent, std::size_t source, std::size_t target);

enum class Provenance : std::uint8_t { Observed, Completed };

/// Cross-view predictions and completed latents for one batch.
struct Completion {
    std::vector<std::vector<std::size_t>> observed; ///< [view] subject ids, ascending
    std::vector<std::vector<std::size_t>> position; ///< [view][subject] row in observed list
    std::vector<Var> codes;                        ///< [view] enc_k over observed rows
    std::vector<std::vector<Var>> cross;           ///< [target][source] h_ik over source rows
    std::vector<Var> latents;                      ///< [view] N×D, observed or completed
    std::vector<std::vector<Provenance>> provenance; ///< [view][subject]
};

/// Observed latents (rows = observed subjects of each view, ascending) to full
/// N×D latents. Cross predictions are formed for every pair needed by
/// completion, and for every jointly observed pair when pair_losses is set.
/// Throws InvalidArgument if a subject has no observed view.
Completion complete_latents(Graph& g, Model& model, std::span<const Var> observed_latents,
                            const ObservationMask& mask, bool pair_losses);

struct BatchForward {
    std::vector<ViewForward> views;
    Completion completion;
    Var fused;
    Var probs;
};

struct ForwardOptions {
    bool pair_losses = false;
    RngStream* dropout_rng = nullptr;
};

/// Full forward pass. Missing cells of `views` are never read.
BatchForward forward_batch(Graph& g, Model& model, std::span<const Tensor> views,
                           const ObservationMask& mask, const ForwardOptions& options);

/// Concrete values of a forward pass.
struct ForwardCache {
    std::vector<std::vector<std::size_t>> observed;
    std::vector<Tensor> feature_attention;
    std::vector<Tensor> embedding;
    std::vector<Tensor> view_attention;
    std::vector<Tensor> latent; ///< N×D after completion
    std::vector<std::vector<Provenance>> provenance;
    std::vector<Tensor> aux_probs;
    Tensor fused;
    Tensor probs;
};

ForwardCache snapshot(const Graph& g, const BatchForward& fwd);

/// Completes a single subject. `latents[i]` is ẑ_i (1×D) when view i is
/// observed and std::nullopt otherwise. Runs with batch-norm running stats.
std::vector<Tensor> complete_missing(Model& model,
                                     const std::vector<std::optional<Tensor>>& latents);

struct Prediction {
    Tensor probs;
    std::vector<int> labels;
};

/// Eval-mode inference. Argmax ties go to the lowest class index.
Prediction predict(Model& model, std::span<const Tensor> views, const ObservationMask& mask);

std::vector<int> argmax_rows(const Tensor& probs);

/// Mean per-coordinate variance of each view's observed latents; a collapse
/// diagnostic.
std::vector<double> latent_variance(const Graph& g, const BatchForward& fwd);

} // namespace clclsa
