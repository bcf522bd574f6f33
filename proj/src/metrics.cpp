#include "clclsa/metrics.hpp"

#include "clclsa/errors.hpp"

#include <algorithm>
#include <numeric>

namespace clclsa {

namespace {

void require_aligned(std::span<const int> a, std::span<const int> b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.size()) + " predictions for " +
                         std::to_string(b.size()) + " labels");
    }
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

} // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    require_aligned(predicted, truth, "accuracy");
    if (truth.empty()) throw InvalidArgument("accuracy: no subjects");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double f1_binary(std::span<const int> predicted, std::span<const int> truth, int positive) {
    require_aligned(predicted, truth, "f1_binary");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if ((predicted[i] != 0 && predicted[i] != 1) || (truth[i] != 0 && truth[i] != 1)) {
            throw InvalidArgument("f1_binary: labels must be 0 or 1");
        }
        const bool p = predicted[i] == positive;
        const bool t = truth[i] == positive;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    return f1_from_counts(tp, fp, fn);
}

double auc_binary(std::span<const double> scores, std::span<const int> truth) {
    if (scores.size() != truth.size()) throw ShapeError("auc_binary: scores and labels differ in length");
    std::size_t n_pos = 0;
    for (int t : truth) {
        if (t != 0 && t != 1) throw InvalidArgument("auc_binary: labels must be 0 or 1");
        n_pos += t == 1;
    }
    const std::size_t n_neg = truth.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw InvalidArgument("auc_binary: undefined with a single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
    // every quantity is an exact integer.
    std::size_t doubled_rank_sum = 0;
    for (std::size_t lo = 0; lo < order.size();) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
        const std::size_t doubled_rank = (lo + 1) + (hi + 1);
        for (std::size_t t = lo; t <= hi; ++t)
            if (truth[order[t]] == 1) doubled_rank_sum += doubled_rank;
        lo = hi + 1;
    }
    const std::size_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted,
                                                       std::span<const int> truth,
                                                       std::size_t num_classes) {
    require_aligned(predicted, truth, "confusion_matrix");
    std::vector<std::vector<std::size_t>> cm(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= num_classes ||
            static_cast<std::size_t>(predicted[i]) >= num_classes) {
            throw InvalidArgument("confusion_matrix: label outside [0, " + std::to_string(num_classes) + ")");
        }
        ++cm[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return cm;
}

double multiclass_f1(std::span<const int> predicted, std::span<const int> truth, F1Average mode,
                     std::size_t num_classes) {
    require_aligned(predicted, truth, "multiclass_f1");
    if (truth.empty()) throw InvalidArgument("multiclass_f1: no subjects");
    if (num_classes == 0) {
        int mx = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) mx = std::max({mx, truth[i], predicted[i]});
        num_classes = static_cast<std::size_t>(mx) + 1;
    }
    num_classes = std::max<std::size_t>(num_classes, 2);
    const auto cm = confusion_matrix(predicted, truth, num_classes);
    double macro = 0.0;
    double weighted = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t support = 0, predicted_c = 0;
        for (std::size_t k = 0; k < num_classes; ++k) {
            support += cm[c][k];
            predicted_c += cm[k][c];
        }
        const std::size_t tp = cm[c][c];
        const double f1 = f1_from_counts(tp, predicted_c - tp, support - tp);
        macro += f1;
        weighted += f1 * static_cast<double>(support);
    }
    if (mode == F1Average::Macro) return macro / static_cast<double>(num_classes);
    return weighted / static_cast<double>(truth.size());
}

MetricsReport compute_metrics(const Tensor& probs, std::span<const int> truth,
                              std::size_t num_classes) {
    if (probs.rows() != truth.size()) throw ShapeError("compute_metrics: row count mismatch");
    const std::vector<int> pred = argmax_rows(probs);
    MetricsReport r;
    r.n_subjects = truth.size();
    r.acc = accuracy(pred, truth);
    r.confusion = confusion_matrix(pred, truth, std::max<std::size_t>(num_classes, 1));
    if (num_classes >= 2) {
        r.weighted_f1 = multiclass_f1(pred, truth, F1Average::Weighted, num_classes);
        r.macro_f1 = multiclass_f1(pred, truth, F1Average::Macro, num_classes);
    } else {
        r.weighted_f1 = r.macro_f1 = r.acc;
    }
    if (num_classes == 2) {
        r.f1 = f1_binary(pred, truth);
        std::vector<double> scores(truth.size());
        for (std::size_t j = 0; j < truth.size(); ++j) scores[j] = probs(j, 1);
        const bool both = std::find(truth.begin(), truth.end(), 0) != truth.end() &&
                          std::find(truth.begin(), truth.end(), 1) != truth.end();
        if (both) r.auc = auc_binary(scores, truth);
    }
    return r;
}

MetricsReport evaluate(Model& model, const MultiOmicsDataset& ds) {
    const Prediction p = predict(model, ds.views, ds.mask);
    MetricsReport r = compute_metrics(p.probs, ds.labels, ds.num_classes);
    r.eta = ds.missing_rate();
    return r;
}

double metric_value(const MetricsReport& report, const std::string& name) {
    if (name == "acc") return report.acc;
    if (name == "weighted_f1") return report.weighted_f1;
    if (name == "macro_f1") return report.macro_f1;
    if (name == "f1") {
        if (!report.f1) throw InvalidArgument("f1 is only defined for binary problems");
        return *report.f1;
    }
    if (name == "auc") {
        if (!report.auc) throw InvalidArgument("auc is only defined for binary problems");
        return *report.auc;
    }
    throw InvalidArgument("unknown metric: " + name);
}

} // namespace clclsa
