#pragma once

#include "clclsa/data.hpp"
#include "clclsa/model.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clclsa {

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// 2PR/(P+R) for the positive class; 0 when TP+FP+FN = 0 or TP = 0.
double f1_binary(std::span<const int> predicted, std::span<const int> truth, int positive = 1);

/// Mann-Whitney AUC from positive-class scores; ties count one half.
/// Throws InvalidArgument unless both classes are present.
double auc_binary(std::span<const double> scores, std::span<const int> truth);

enum class F1Average { Weighted, Macro };

/// One-vs-rest F1 per class over classes [0, num_classes), averaged
/// unweighted (macro) or by true-class support (weighted). Classes with no
/// support and no predictions score 0. num_classes = 0 infers max label + 1.
double multiclass_f1(std::span<const int> predicted, std::span<const int> truth, F1Average mode,
                     std::size_t num_classes = 0);

/// confusion[true][predicted]
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted,
                                                       std::span<const int> truth,
                                                       std::size_t num_classes);

struct MetricsReport {
    double acc = 0.0;
    std::optional<double> f1;  ///< binary problems only
    std::optional<double> auc; ///< binary problems only, both classes present
    double weighted_f1 = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;
    std::size_t n_subjects = 0;

    std::string dataset;
    double eta = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

MetricsReport compute_metrics(const Tensor& probs, std::span<const int> truth,
                              std::size_t num_classes);

/// Eval-mode prediction on `ds` (using its mask) followed by compute_metrics.
MetricsReport evaluate(Model& model, const MultiOmicsDataset& ds);

/// Named metric from a report: acc, f1, auc, weighted_f1, macro_f1.
double metric_value(const MetricsReport& report, const std::string& name);

} // namespace clclsa
