#include "clclsa/experiments.hpp"

#include "clclsa/errors.hpp"

#include <cmath>
#include <functional>

namespace clclsa {

MetricValues MetricValues::from(const MetricsReport& r) {
    return MetricValues{r.acc, r.f1, r.auc, r.weighted_f1, r.macro_f1};
}

ModelConfig adapt_config(const ModelConfig& base, const MultiOmicsDataset& ds) {
    ModelConfig cfg = base;
    const auto dims = ds.input_dims();
    if (cfg.input_dims.empty()) {
        const std::size_t d = cfg.embed_dims.empty() ? 32 : cfg.embed_dims.front();
        cfg.input_dims = dims;
        cfg.embed_dims.assign(dims.size(), d);
        cfg.num_classes = ds.num_classes;
    } else if (cfg.input_dims != dims || cfg.num_classes != ds.num_classes) {
        throw ShapeError("model configuration does not match the dataset's view dimensions or classes");
    }
    cfg.view_names = ds.view_names.size() == dims.size() ? ds.view_names : std::vector<std::string>{};
    return cfg;
}

TrialRow run_trial(const MultiOmicsDataset& ds, const ExperimentSetup& setup, double eta,
                   std::uint64_t seed) {
    TrialRow row;
    row.dataset = setup.dataset;
    row.variant = setup.variant;
    row.eta = eta;
    row.seed = seed;
    row.weights = setup.train.weights;
    try {
        auto [train_part, test_part] = split(ds, SplitSpec{setup.train_fraction, seed, true});
        if (eta > 0.0) {
            train_part = apply_missingness(train_part, {eta, seed, setup.policy, "missing/train"});
            if (setup.mask_test) {
                test_part = apply_missingness(test_part, {eta, seed, setup.policy, "missing/test"});
            }
        }
        ModelConfig mc = adapt_config(setup.model, train_part);
        if (setup.complete_case) {
            std::vector<std::size_t> keep;
            for (std::size_t s = 0; s < train_part.num_subjects(); ++s)
                if (train_part.mask.complete(s)) keep.push_back(s);
            if (keep.empty()) throw InvalidArgument("complete-case baseline: no complete training subject");
            train_part = train_part.select_subjects(keep);
            mc.completion = CompletionMode::ZeroFill;
        }
        TrainConfig cfg = setup.train;
        cfg.seed = seed;
        TrainResult r = train(train_part, mc, cfg);
        row.weights = r.weights;
        if (r.aborted) {
            row.status = "failed";
            row.message = r.diagnostic;
            return row;
        }
        row.metrics = MetricValues::from(evaluate(r.model, test_part));
    } catch (const std::exception& e) {
        row.status = "failed";
        row.message = e.what();
    }
    return row;
}

namespace {

std::optional<double> mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

std::optional<double> sd_of(const std::vector<double>& xs) {
    const auto m = mean_of(xs);
    if (!m) return std::nullopt;
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : xs) ss += (x - *m) * (x - *m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

} // namespace

std::pair<std::optional<MetricValues>, std::optional<MetricValues>>
aggregate(const std::vector<TrialRow>& rows) {
    std::vector<double> acc, f1, auc, wf1, mf1;
    for (const auto& r : rows) {
        if (r.status != "ok" || !r.metrics) continue;
        acc.push_back(r.metrics->acc);
        if (r.metrics->f1) f1.push_back(*r.metrics->f1);
        if (r.metrics->auc) auc.push_back(*r.metrics->auc);
        wf1.push_back(r.metrics->weighted_f1);
        mf1.push_back(r.metrics->macro_f1);
    }
    if (acc.empty()) return {std::nullopt, std::nullopt};
    MetricValues mean{*mean_of(acc), mean_of(f1), mean_of(auc), *mean_of(wf1), *mean_of(mf1)};
    MetricValues sd{*sd_of(acc), sd_of(f1), sd_of(auc), *sd_of(wf1), *sd_of(mf1)};
    return {mean, sd};
}

SweepResult missing_rate_sweep(const MultiOmicsDataset& ds, const ExperimentSetup& setup,
                               const std::vector<double>& etas,
                               const std::vector<std::uint64_t>& seeds) {
    if (etas.empty() || seeds.empty()) throw InvalidArgument("sweep needs at least one eta and one seed");
    for (std::size_t i = 0; i < etas.size(); ++i) {
        if (!(etas[i] >= 0.0 && etas[i] < 1.0)) throw InvalidArgument("eta must lie in [0, 1)");
        if (i > 0 && !(etas[i] > etas[i - 1])) throw InvalidArgument("etas must be strictly increasing");
    }
    SweepResult result;
    result.points.resize(etas.size());
    for (std::size_t e = 0; e < etas.size(); ++e) {
        result.points[e].eta = etas[e];
        result.points[e].trials.resize(seeds.size());
    }
    run_parallel(etas.size() * seeds.size(), setup.threads, [&](std::size_t k) {
        const std::size_t e = k / seeds.size();
        const std::size_t s = k % seeds.size();
        result.points[e].trials[s] = run_trial(ds, setup, etas[e], seeds[s]);
    });
    for (auto& p : result.points) std::tie(p.mean, p.stddev) = aggregate(p.trials);
    return result;
}

std::vector<SubsetResult> partial_omics_run(const MultiOmicsDataset& ds,
                                            const std::vector<std::vector<std::size_t>>& subsets,
                                            const ExperimentSetup& setup,
                                            const std::vector<double>& etas,
                                            const std::vector<std::uint64_t>& seeds) {
    for (const auto& sub : subsets) {
        if (sub.size() < 2) throw InvalidArgument("view subset must contain at least two views");
        for (std::size_t v : sub)
            if (v >= ds.num_views()) throw InvalidArgument("view subset names view " + std::to_string(v) + " which does not exist");
    }
    std::vector<SubsetResult> out;
    for (const auto& sub : subsets) {
        ExperimentSetup s = setup;
        if (!s.model.input_dims.empty()) {
            ModelConfig m = s.model;
            m.input_dims.clear();
            m.embed_dims.clear();
            for (std::size_t v : sub) {
                m.input_dims.push_back(setup.model.input_dims.at(v));
                m.embed_dims.push_back(setup.model.embed_dims.at(v));
            }
            s.model = m;
        }
        std::string tag;
        for (std::size_t v : sub) tag += (tag.empty() ? "" : "+") + std::to_string(v);
        s.variant = setup.variant + "@" + tag;
        out.push_back({sub, missing_rate_sweep(ds.select_views(sub), s, etas, seeds)});
    }
    return out;
}

void SurfaceSpec::validate() const {
    const std::vector<double>* sets[] = {&lambda_al, &lambda_co, &lambda_cl};
    for (std::size_t i = 0; i < 3; ++i) {
        if (sets[i]->empty()) throw InvalidArgument("surface: every lambda set must be nonempty");
    }
    if (sets[static_cast<std::size_t>(fixed)]->size() != 1) {
        throw InvalidArgument("surface: the fixed lambda must have exactly one value");
    }
    if (seeds.empty()) throw InvalidArgument("surface: seeds must be nonempty");
}

std::vector<TrialRow> hyperparam_surface(const MultiOmicsDataset& ds, const SurfaceSpec& spec,
                                         const ExperimentSetup& setup) {
    spec.validate();
    std::vector<LossWeights> cells;
    for (double al : spec.lambda_al)
        for (double co : spec.lambda_co)
            for (double cl : spec.lambda_cl) {
                LossWeights w = setup.train.weights;
                w.lambda_al = al;
                w.lambda_co = co;
                w.lambda_cl = cl;
                cells.push_back(w);
            }
    std::vector<TrialRow> rows(cells.size() * spec.seeds.size());
    run_parallel(rows.size(), setup.threads, [&](std::size_t k) {
        ExperimentSetup s = setup;
        s.train.weights = cells[k / spec.seeds.size()];
        rows[k] = run_trial(ds, s, spec.eta, spec.seeds[k % spec.seeds.size()]);
    });
    return rows;
}

LossWeights ablation_weights(const std::string& variant, const LossWeights& base, double lambda_co) {
    LossWeights w = base;
    w.lambda_co = lambda_co;
    if (variant == "ctst+aux") return w;
    if (variant == "ctst") {
        w.lambda_al = 0.0;
        return w;
    }
    if (variant == "aux") {
        w.lambda_cl = 0.0;
        return w;
    }
    if (variant == "plain") {
        w.lambda_al = 0.0;
        w.lambda_cl = 0.0;
        return w;
    }
    throw InvalidArgument("unknown ablation variant: " + variant);
}

std::vector<AblationResult> ablation_run(const MultiOmicsDataset& ds, const AblationSpec& spec,
                                         const ExperimentSetup& setup) {
    std::vector<AblationResult> out;
    for (const auto& v : spec.variants) {
        ExperimentSetup s = setup;
        s.variant = v;
        s.train.weights = ablation_weights(v, setup.train.weights, spec.lambda_co);
        out.push_back({v, missing_rate_sweep(ds, s, spec.etas, spec.seeds)});
    }
    return out;
}

std::vector<TrialRow> report_rows(const SweepResult& sweep, bool with_aggregates) {
    std::vector<TrialRow> rows;
    for (const auto& p : sweep.points) {
        rows.insert(rows.end(), p.trials.begin(), p.trials.end());
        if (!with_aggregates || p.trials.empty()) continue;
        TrialRow base = p.trials.front();
        base.seed.reset();
        base.message.clear();
        base.metrics = p.mean;
        base.status = "aggregate_mean";
        rows.push_back(base);
        base.metrics = p.stddev;
        base.status = "aggregate_std";
        rows.push_back(base);
    }
    return rows;
}

} // namespace clclsa
