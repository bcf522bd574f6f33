// Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-9 gate the
// exit status; criterion 10 needs external data and is reported as skipped.
//
//   acceptance            run everything
//   acceptance 6 7        run only the listed criteria

#include "cli_runner.hpp"
#include "clclsa/experiments.hpp"
#include "clclsa/metrics.hpp"
#include "clclsa/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

using namespace clclsa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    double worst = 0.0;
    std::string where;
    std::size_t scalars = 0;
    for (Reduction red : {Reduction::Mean, Reduction::Sum}) {
        const auto c = oracle::objective_gradient_check(LossWeights{0.1, 1.0, 0.01, 9.0}, red, 21);
        scalars = c.scalars;
        if (c.max_relative_error >= worst) {
            worst = c.max_relative_error;
            where = c.worst_parameter;
        }
    }
    return {worst < 1e-4, fmt("max relative error %.3g over %zu parameters x 2 reductions (worst %s)", worst,
                              scalars, where.c_str())};
}

Outcome contrastive_oracle() {
    RngStream rng(2024, "acceptance/contrastive");
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
        const Tensor p = oracle::random_distribution(r, c, rng);
        for (double alpha : {0.0, 1.0, 9.0})
            worst = std::max(worst, std::abs(loss_contrastive_pair(p, alpha) - oracle::contrastive_pair(p, alpha)));
    }
    double uniform = 0.0;
    for (std::size_t d = 1; d <= 8; ++d) {
        const Tensor u(d, d, 1.0 / static_cast<double>(d * d));
        for (double alpha : {0.0, 1.0, 9.0})
            uniform = std::max(uniform, std::abs(loss_contrastive_pair(u, alpha) +
                                                 2.0 * alpha * std::log(static_cast<double>(d))));
    }
    return {worst < 1e-10 && uniform < 1e-12,
            fmt("oracle gap %.3g on 100 P x 3 alpha, uniform closed-form gap %.3g", worst, uniform)};
}

Outcome cross_omics_oracle() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = oracle::cross_setup(testing::tiny_config(), testing::mixed_mask(), seed);
        worst = std::max({worst, std::abs(s.lib_mean - oracle::cross_omics(s.pred, s.z, testing::mixed_mask(), true)),
                          std::abs(s.lib_sum - oracle::cross_omics(s.pred, s.z, testing::mixed_mask(), false))});
    }
    bool exact = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ObservationMask mask(6, 2, true);
        mask.set(1, 0, false);
        mask.set(4, 1, false);
        const auto s = oracle::cross_setup(testing::tiny_config(2), mask, seed);
        double per_subject = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            if (!mask.complete(j)) continue;
            per_subject += oracle::squared_distance(s.pred[0][1].row(j), s.z[0].row(j)) +
                   oracle::squared_distance(s.pred[1][0].row(j), s.z[1].row(j));
        }
        exact = exact && s.lib_sum == per_subject;
    }
    return {worst < 1e-10 && exact,
            fmt("triple-loop gap %.3g; two-view sum form %s", worst, exact ? "bit-identical" : "DIFFERS")};
}

Outcome loss_wiring() {
    const auto ds = testing::tiny_dataset();
    auto model_cfg = testing::tiny_config();
    model_cfg.dropout_p = 0.5;
    auto base = desk_train_config(3);
    base.epochs = 20;

    double recon = 0.0;
    const auto full = train(ds, model_cfg, base);
    for (const auto& l : full.logs) {
        recon = std::max(recon, std::abs(l.loss.total - (l.loss.l_clf + full.weights.lambda_al * l.loss.l_al +
                                                         full.weights.lambda_co * l.loss.l_co +
                                                         full.weights.lambda_cl * l.loss.l_cl)));
    }
    std::string bitwise;
    bool all_same = true;
    for (LossTerm term : {LossTerm::Auxiliary, LossTerm::CrossOmics, LossTerm::Contrastive}) {
        auto zero = base;
        if (term == LossTerm::Auxiliary) zero.weights.lambda_al = 0.0;
        if (term == LossTerm::CrossOmics) zero.weights.lambda_co = 0.0;
        if (term == LossTerm::Contrastive) zero.weights.lambda_cl = 0.0;
        auto off = base;
        off.disabled_terms = {term};
        const bool same = testing::same_parameters(train(ds, model_cfg, zero).model, train(ds, model_cfg, off).model);
        all_same = all_same && same;
        bitwise += loss_term_name(term) + (same ? "=same " : "=DIFF ");
    }
    return {recon < 1e-12 && all_same, fmt("total reconstruction gap %.3g; 20-epoch params %s", recon, bitwise.c_str())};
}

Outcome metric_oracles() {
    RngStream rng(7, "acceptance/metrics");
    double auc_gap = 0.0, f1_gap = 0.0, balanced_gap = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + rng.below(499);
        std::vector<int> y(n);
        std::vector<double> s(n);
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = static_cast<int>(rng.below(2));
            s[j] = t % 2 ? std::round(rng.uniform() * 20.0) / 20.0 : rng.uniform();
        }
        y[0] = 0;
        y[1] = 1;
        auc_gap = std::max(auc_gap, std::abs(auc_binary(s, y) - oracle::auc_pairwise(s, y)));

        const std::size_t c = 2 + rng.below(4);
        std::vector<int> truth(n), pred(n);
        for (std::size_t j = 0; j < n; ++j) {
            truth[j] = static_cast<int>(rng.below(c));
            pred[j] = rng.uniform() < 0.6 ? truth[j] : static_cast<int>(rng.below(c));
        }
        const auto cm = confusion_matrix(pred, truth, c);
        const auto f1 = oracle::per_class_f1(cm);
        double macro = 0.0, weighted = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            double support = 0.0;
            for (std::size_t o = 0; o < c; ++o) support += static_cast<double>(cm[k][o]);
            macro += f1[k] / static_cast<double>(c);
            weighted += f1[k] * support / static_cast<double>(n);
        }
        f1_gap = std::max({f1_gap, std::abs(multiclass_f1(pred, truth, F1Average::Macro, c) - macro),
                           std::abs(multiclass_f1(pred, truth, F1Average::Weighted, c) - weighted)});
        if (c == 2) f1_gap = std::max(f1_gap, std::abs(f1_binary(pred, truth) - f1[1]));

        std::vector<int> bal;
        for (std::size_t k = 0; k < c; ++k) bal.insert(bal.end(), 5 + t % 7, static_cast<int>(k));
        std::vector<int> bal_pred(bal.size());
        for (auto& v : bal_pred) v = static_cast<int>(rng.below(c));
        balanced_gap = std::max(balanced_gap, std::abs(multiclass_f1(bal_pred, bal, F1Average::Weighted, c) -
                                                       multiclass_f1(bal_pred, bal, F1Average::Macro, c)));
    }
    return {auc_gap < 1e-12 && f1_gap < 1e-12 && balanced_gap < 1e-12,
            fmt("AUC gap %.3g, F1 gap %.3g, balanced weighted-macro gap %.3g", auc_gap, f1_gap, balanced_gap)};
}

// ---------------------------------------------------------------------------
// Desk-scale experiments on the synthetic family. Trial seed s uses the
// dataset drawn with seed 100 + s, so every seed sees fresh data.

MultiOmicsDataset desk_dataset(std::uint64_t s) {
    SyntheticSpec spec; // N=400, three 20-feature views, C=3, SNR=5
    spec.seed = 100 + s;
    return synth_generate(spec);
}

ExperimentSetup desk_setup() {
    ExperimentSetup setup;
    setup.model = desk_config({}, 0);
    setup.train = desk_train_config();
    return setup;
}

struct SeedRun {
    double mean = 0.0;
    std::vector<double> accs;
    std::size_t failed = 0;
    double slowest = 0.0;
};

SeedRun mean_accuracy(const ExperimentSetup& setup, double eta, std::size_t seeds) {
    SeedRun out;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto row = run_trial(desk_dataset(s), setup, eta, s);
        out.slowest = std::max(out.slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        if (row.status != "ok") {
            ++out.failed;
            out.accs.push_back(0.0);
            continue;
        }
        out.accs.push_back(row.metrics->acc);
    }
    for (double a : out.accs) out.mean += a / static_cast<double>(out.accs.size());
    return out;
}

std::string list(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += fmt("%s%.4f", s.empty() ? "" : " ", x);
    return s;
}

Outcome learnability() {
    const auto r = mean_accuracy(desk_setup(), 0.0, 5);
    return {r.mean >= 0.95 && r.failed == 0 && r.slowest < 120.0,
            fmt("mean test ACC %.4f over 5 seeds [%s], slowest run %.1f s", r.mean, list(r.accs).c_str(), r.slowest)};
}

Outcome completion_benefit() {
    const auto cross = mean_accuracy(desk_setup(), 0.5, 10);
    auto zero_setup = desk_setup();
    zero_setup.model.completion = CompletionMode::ZeroFill;
    const auto zero = mean_accuracy(zero_setup, 0.5, 10);
    const double gain = cross.mean - zero.mean;

    std::vector<double> trend;
    bool monotone = true;
    for (int k = 0; k <= 8; ++k) {
        const double eta = 0.1 * k;
        trend.push_back(k == 5 ? cross.mean : mean_accuracy(desk_setup(), eta, 10).mean);
        if (k > 0 && trend[k] > trend[k - 1] + 0.02) monotone = false;
    }
    return {gain >= 0.03 && monotone && cross.failed == 0 && zero.failed == 0,
            fmt("eta=0.5: cross-view %.4f vs zero-fill %.4f (gain %+.2f points); ACC by eta 0..0.8: %s%s",
                cross.mean, zero.mean, 100.0 * gain, list(trend).c_str(), monotone ? "" : " (rises > 2 points)")};
}

Outcome ablation_trend() {
    std::string detail;
    bool ok = true;
    for (double eta : {0.2, 0.4}) {
        double means[2];
        const char* names[2] = {"ctst+aux", "plain"};
        for (int v = 0; v < 2; ++v) {
            auto setup = desk_setup();
            setup.train.weights = ablation_weights(names[v], setup.train.weights, 0.1);
            setup.variant = names[v];
            const auto r = mean_accuracy(setup, eta, 5);
            ok = ok && r.failed == 0;
            means[v] = r.mean;
        }
        ok = ok && means[0] >= means[1] - 0.01;
        detail += fmt("%seta=%.1f ctst+aux %.4f vs plain %.4f", detail.empty() ? "" : "; ", eta, means[0], means[1]);
    }
    return {ok, detail};
}

Outcome determinism() {
    const auto dir = testing::scratch_dir("acceptance_determinism");
    const std::string small = " --model.embed_dim 8 --model.ae_hidden 8,4 --threads 1";
    const std::string ds = (dir / "ds").string(), masked = (dir / "masked").string();
    const std::string run = (dir / "run").string(), grid = (dir / "grid").string();
    const std::string common = " --seed 4 --synth.n 60 --synth.dim 6 --epochs 4 --experiment.seeds 2" + small;
    struct Step {
        std::string args;
        std::vector<fs::path> files;
    };
    const std::vector<Step> steps{
        {"synth --n 80 --views 3 --classes 3 --synth.dim 6 --seed 9 --out " + ds,
         {dir / "ds" / "view_0.csv", dir / "ds" / "view_2.csv", dir / "ds" / "labels.txt", dir / "ds" / "manifest.json"}},
        {"mask --data " + ds + " --eta 0.4 --seed 2 --out " + masked, {dir / "masked" / "mask.csv"}},
        {"train --data " + masked + " --epochs 12 --seed 5 --out " + run + small,
         {dir / "run" / "epoch_log.csv", dir / "run" / "checkpoint.json", dir / "run" / "config.json"}},
        {"eval --checkpoint " + run + "/checkpoint.json --data " + masked, {}},
        {"sweep" + common + " --experiment.etas 0.2,0.5 --report " + (dir / "sweep.csv").string(), {dir / "sweep.csv"}},
        {"grid --data " + masked + " --seed 1 --epochs 3 --grid.lambda_al 0,0.1 --grid.lambda_co 0.1 --grid.lambda_cl 0.05 --out " +
             grid + small,
         {dir / "grid" / "grid_summary.csv", dir / "grid" / "best.json"}},
        {"ablate" + common + " --ablation.etas 0.3 --report " + (dir / "ablate.csv").string(), {dir / "ablate.csv"}},
        {"surface" + common + " --surface.lambda_co 0.1,1 --surface.lambda_cl 0.05 --format json --report " +
             (dir / "surface.json").string(),
         {dir / "surface.json"}},
    };
    const std::vector<fs::path> manifests{dir / "ds" / "run_manifest.json",   dir / "masked" / "run_manifest.json",
                                          dir / "run" / "run_manifest.json",  "",
                                          dir / "sweep.csv.run_manifest.json", dir / "grid" / "run_manifest.json",
                                          dir / "ablate.csv.run_manifest.json", dir / "surface.json.run_manifest.json"};
    std::size_t compared = 0;
    std::string mismatch;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto first = testing::run_cli(steps[i].args, dir);
        std::vector<std::string> outputs;
        bool present = true;
        for (const auto& f : steps[i].files) {
            outputs.push_back(testing::read_text(f));
            present = present && !outputs.back().empty();
        }
        nlohmann::json manifest;
        if (!manifests[i].empty()) manifest = testing::stable_manifest(manifests[i]);
        const auto second = testing::run_cli(steps[i].args, dir);
        const std::string name = steps[i].args.substr(0, steps[i].args.find(' '));
        if (first.code != 0 || second.code != 0) {
            mismatch += name + "(exit " + std::to_string(first.code) + ") ";
            continue;
        }
        if (!present) {
            mismatch += name + "(missing output) ";
            continue;
        }
        bool same = first.out == second.out;
        for (std::size_t k = 0; k < steps[i].files.size(); ++k) same = same && testing::read_text(steps[i].files[k]) == outputs[k];
        if (!manifests[i].empty()) same = same && testing::stable_manifest(manifests[i]) == manifest;
        compared += steps[i].files.size() + 1 + !manifests[i].empty();
        if (!same) mismatch += name + " ";
    }
    return {mismatch.empty(), mismatch.empty() ? fmt("8 subcommands re-run, %zu outputs bit-identical", compared)
                                               : "differences or failures in: " + mismatch};
}

struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const std::vector<Criterion> criteria{
        {1, "gradient correctness", gradient_correctness},
        {2, "contrastive oracle", contrastive_oracle},
        {3, "cross-omics oracle", cross_omics_oracle},
        {4, "loss decomposition and ablation wiring", loss_wiring},
        {5, "metric oracles", metric_oracles},
        {6, "end-to-end learnability", learnability},
        {7, "completion benefit and missing-rate trend", completion_benefit},
        {8, "ablation trend", ablation_trend},
        {9, "determinism", determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.contains(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %d %-44s %s  %s (%.1f s)\n", c.id, c.title, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    if (only.empty() || only.contains(10)) {
        std::printf("criterion 10 %-43s SKIP  non-gating; needs user-supplied cohort data, see README\n",
                    "published-cohort reproduction");
    }
    return failures == 0 ? 0 : 1;
}
