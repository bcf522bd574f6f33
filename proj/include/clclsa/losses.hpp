#pragma once

#include "clclsa/autodiff.hpp"
#include "clclsa/mask.hpp"
#include "clclsa/model.hpp"
#include "clclsa/tensor.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace clclsa {

/// Floor applied before every logarithm.
inline constexpr double kLogFloor = 1e-12;

/// Candidate values for each loss weight in grid searches.
inline constexpr std::array<double, 6> kLambdaGrid{0.0, 0.01, 0.02, 0.05, 0.1, 1.0};

struct LossWeights {
    double lambda_al = 0.1; ///< auxiliary confidence/classification
    double lambda_co = 0.1; ///< cross-view reconstruction
    double lambda_cl = 0.05; ///< contrastive consistency
    double alpha = 9.0;     ///< entropy exponent of the contrastive loss

    void validate() const; ///< all four must be finite and >= 0
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Mean: L_clf and L_al average over contributing subjects, L_co averages
/// each ordered pair over its jointly observed subjects. Sum: plain sums over
/// subjects everywhere. L_cl is a sum over pairs in both modes.
enum class Reduction { Mean, Sum };

enum class LossTerm { Auxiliary, CrossOmics, Contrastive };

struct LossBreakdown {
    double l_clf = 0.0;
    double l_al = 0.0;
    double l_co = 0.0;
    double l_cl = 0.0;
    double total = 0.0;
};

/// Weighted total, l_clf + λ_al·l_al + λ_co·l_co + λ_cl·l_cl, summed in that
/// order. Throws NumericError naming the first non-finite part.
LossBreakdown total_loss(double l_clf, double l_al, double l_co, double l_cl,
                         const LossWeights& weights);

// ---------------------------------------------------------------------------
// Contrastive consistency

/// Row-softmax both inputs, average the per-subject outer products and
/// renormalise to unit mass. zi: N×Di, zk: N×Dk -> Di×Dk.
Tensor joint_distribution(const Tensor& zi, const Tensor& zk);
Var joint_distribution(Graph& g, Var zi, Var zk);

/// -Σ P ln(P / (P_d^{α+1} P_d'^{α+1})) with row and column marginals.
/// Equals -I(P) - α(H_row + H_col). Requires P >= 0 and ΣP = 1 (±1e-9).
double loss_contrastive_pair(const Tensor& p, double alpha);
Var loss_contrastive_pair(Graph& g, Var p, double alpha);

/// Sum over ordered view pairs of the pair loss on jointly observed rows.
/// Pairs sharing fewer than 2 subjects contribute 0.
Var loss_contrastive(Graph& g, std::span<const Var> latents, const ObservationMask& mask,
                     double alpha);

// ---------------------------------------------------------------------------
// Supervised terms

double loss_classification(const Tensor& probs, std::span<const int> labels,
                           Reduction reduction = Reduction::Mean);
Var loss_classification(Graph& g, Var probs, std::span<const int> labels, Reduction reduction);

/// Per observed view: (matt - max_c ŷ_i[c])² - ln ŷ_i[y]; the max-softmax
/// target carries no gradient. `labels` indexes all N subjects.
/// `confidence`, when given, replaces the max-softmax targets (one column
/// per view over its observed rows); gradient checks hold them fixed.
Var loss_auxiliary(Graph& g, const BatchForward& fwd, std::span<const int> labels,
                   Reduction reduction, std::span<const Tensor> confidence = {});

/// The max-softmax confidence target of every view, observed rows only.
std::vector<Tensor> aux_confidence(const Graph& g, const BatchForward& fwd);

/// Sum mode: Σ over ordered pairs (i, k) and jointly observed subjects of
/// ‖h_ik(ẑ_k) - ẑ_i‖², with the outer loop over subjects so that two views
/// accumulate as Σ_j (L^{12}(j) + L^{21}(j)). Mean mode: Σ over ordered
/// pairs of the mean squared error over jointly observed subjects and latent
/// coordinates.
/// Requires cross predictions for every jointly observed pair.
Var loss_cross_omics(Graph& g, const Completion& completion, const ObservationMask& mask,
                     Reduction reduction);

} // namespace clclsa
