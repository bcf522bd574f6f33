#include "clclsa/train.hpp"

#include "clclsa/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace clclsa {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

void TrainConfig::validate() const {
    if (!(initial_lr > 0.0)) throw InvalidArgument("initial_lr must be positive");
    if (schedule.kind == LrSchedule::Kind::Step &&
        (schedule.step_every == 0 || !(schedule.factor > 0.0))) {
        throw InvalidArgument("step schedule needs step_every > 0 and factor > 0");
    }
    weights.validate();
}

bool TrainConfig::disabled(LossTerm term) const {
    return std::find(disabled_terms.begin(), disabled_terms.end(), term) != disabled_terms.end();
}

TrainConfig desk_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.initial_lr = 1e-3;
    cfg.seed = seed;
    return cfg;
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (cfg.schedule.kind == LrSchedule::Kind::Constant) return cfg.initial_lr;
    const auto plateau = static_cast<double>(epoch / cfg.schedule.step_every);
    return cfg.initial_lr * std::pow(cfg.schedule.factor, plateau);
}

ObjectiveGraph build_objective(Graph& g, Model& model, std::span<const Tensor> views,
                               const ObservationMask& mask, std::span<const int> labels,
                               const TrainConfig& cfg, const LossWeights& weights,
                               RngStream* dropout_rng, std::span<const Tensor> aux_targets) {
    const bool use_al = !cfg.disabled(LossTerm::Auxiliary);
    const bool use_co = !cfg.disabled(LossTerm::CrossOmics);
    const bool use_cl = !cfg.disabled(LossTerm::Contrastive);

    ObjectiveGraph out;
    out.forward = forward_batch(g, model, views, mask, ForwardOptions{use_co, dropout_rng});
    const BatchForward& fwd = out.forward;

    std::vector<Var> terms{loss_classification(g, fwd.probs, labels, cfg.reduction)};
    std::vector<double> coefs{1.0};
    double l_al = 0.0, l_co = 0.0, l_cl = 0.0;
    if (use_al) {
        terms.push_back(loss_auxiliary(g, fwd, labels, cfg.reduction, aux_targets));
        coefs.push_back(weights.lambda_al);
        l_al = g.value(terms.back()).item();
    }
    if (use_co) {
        terms.push_back(loss_cross_omics(g, fwd.completion, mask, cfg.reduction));
        coefs.push_back(weights.lambda_co);
        l_co = g.value(terms.back()).item();
    }
    if (use_cl) {
        terms.push_back(loss_contrastive(g, fwd.completion.latents, mask, weights.alpha));
        coefs.push_back(weights.lambda_cl);
        l_cl = g.value(terms.back()).item();
    }
    out.loss = total_loss(g.value(terms.front()).item(), l_al, l_co, l_cl, weights);
    out.total = weighted_sum(g, terms, coefs);
    return out;
}

StepOutcome train_step(Model& model, Adam& optimizer, std::span<const Tensor> views,
                       const ObservationMask& mask, std::span<const int> labels,
                       const TrainConfig& cfg, const LossWeights& weights, double lr,
                       RngStream& dropout_rng) {
    Graph g(Mode::Train);
    ObjectiveGraph obj = build_objective(g, model, views, mask, labels, cfg, weights, &dropout_rng);
    g.backward(obj.total);
    auto grads = g.parameter_gradients(model.params());
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].all_finite()) {
            throw NumericError("non-finite gradient for parameter " + model.params().name(i));
        }
    }
    optimizer.step(model.params(), grads, lr);

    StepOutcome s;
    s.loss = obj.loss;
    s.train_acc = accuracy(argmax_rows(g.value(obj.forward.probs)), labels);
    s.latent_variance = latent_variance(g, obj.forward);
    return s;
}

TrainResult train(const MultiOmicsDataset& ds, const ModelConfig& model_config,
                  const TrainConfig& cfg_in, const MultiOmicsDataset* validation) {
    ds.validate();
    if (ds.num_subjects() == 0) throw InvalidArgument("train: empty training set");
    if (ds.input_dims() != model_config.input_dims || ds.num_classes != model_config.num_classes) {
        throw ShapeError("train: dataset shape does not match the model configuration");
    }
    TrainConfig cfg = cfg_in;
    cfg.validate();
    LossWeights weights = cfg.weights;
    if (ds.mask.all_complete()) {
        // No view is ever missing: the cross-view autoencoders have no role.
        weights.lambda_co = 0.0;
        if (!cfg.disabled(LossTerm::CrossOmics)) cfg.disabled_terms.push_back(LossTerm::CrossOmics);
    }

    TrainResult result{Model(model_config, cfg.seed), {}, 0, weights, false, {}};
    Model& model = result.model;
    Adam optimizer(model.params());
    RngStream dropout_rng(cfg.seed, "dropout");
    RngStream batch_rng(cfg.seed, "batches");

    const std::size_t n = ds.num_subjects();
    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        try {
            if (full_batch) {
                StepOutcome s = train_step(model, optimizer, ds.views, ds.mask, ds.labels, cfg,
                                           weights, lr, dropout_rng);
                log.loss = s.loss;
                log.train_acc = s.train_acc;
                log.latent_variance = std::move(s.latent_variance);
            } else {
                batch_rng.shuffle(order);
                std::size_t batches = 0;
                LossBreakdown acc{};
                double acc_train = 0.0;
                for (std::size_t start = 0; start < n; start += cfg.batch_size) {
                    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                  order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + cfg.batch_size)));
                    std::sort(rows.begin(), rows.end());
                    const MultiOmicsDataset batch = ds.select_subjects(rows);
                    StepOutcome s = train_step(model, optimizer, batch.views, batch.mask,
                                               batch.labels, cfg, weights, lr, dropout_rng);
                    acc.l_clf += s.loss.l_clf;
                    acc.l_al += s.loss.l_al;
                    acc.l_co += s.loss.l_co;
                    acc.l_cl += s.loss.l_cl;
                    acc.total += s.loss.total;
                    acc_train += s.train_acc;
                    log.latent_variance = std::move(s.latent_variance);
                    ++batches;
                }
                const double inv = 1.0 / static_cast<double>(batches);
                log.loss = {acc.l_clf * inv, acc.l_al * inv, acc.l_co * inv, acc.l_cl * inv,
                            acc.total * inv};
                log.train_acc = acc_train * inv;
            }
        } catch (const NumericError& e) {
            result.aborted = true;
            result.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
            break;
        }
        if (validation != nullptr && cfg.eval_every > 0 &&
            ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)) {
            log.val_acc = evaluate(model, *validation).acc;
        }
        result.logs.push_back(std::move(log));
    }
    result.optimizer_steps = optimizer.steps();
    return result;
}

// ---------------------------------------------------------------------------

void run_parallel(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& job) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) job(i);
        });
    }
    for (auto& th : pool) th.join();
}

GridResult grid_search(const MultiOmicsDataset& train_ds, const MultiOmicsDataset* val_ds,
                       const ModelConfig& model_config, const GridSpec& grid,
                       const TrainConfig& base, std::size_t threads) {
    if (grid.lambda_al.empty() || grid.lambda_co.empty() || grid.lambda_cl.empty()) {
        throw InvalidArgument("grid_search: every candidate set must be nonempty");
    }
    MultiOmicsDataset fit_set;
    MultiOmicsDataset holdout;
    if (val_ds != nullptr) {
        fit_set = train_ds;
        holdout = *val_ds;
    } else {
        SplitSpec s{1.0 - grid.validation_fraction, base.seed, true};
        std::tie(fit_set, holdout) = split(train_ds, s);
    }

    std::vector<double> co = grid.lambda_co;
    if (fit_set.mask.all_complete()) co = {0.0};

    std::vector<GridTrial> trials;
    for (double al : grid.lambda_al)
        for (double c : co)
            for (double cl : grid.lambda_cl) {
                GridTrial t;
                t.weights = base.weights;
                t.weights.lambda_al = al;
                t.weights.lambda_co = c;
                t.weights.lambda_cl = cl;
                trials.push_back(t);
            }

    run_parallel(trials.size(), threads, [&](std::size_t i) {
        GridTrial& t = trials[i];
        try {
            TrainConfig cfg = base;
            cfg.weights = t.weights;
            TrainResult r = train(fit_set, model_config, cfg);
            if (r.aborted) {
                t.status = "failed";
                t.message = r.diagnostic;
                return;
            }
            t.metric = metric_value(evaluate(r.model, holdout), grid.metric);
        } catch (const std::exception& e) {
            t.status = "failed";
            t.message = e.what();
        }
    });

    std::vector<GridTrial> ok;
    std::vector<GridTrial> failed;
    for (auto& t : trials) (t.status == "ok" ? ok : failed).push_back(std::move(t));
    std::stable_sort(ok.begin(), ok.end(), [](const GridTrial& a, const GridTrial& b) {
        if (*a.metric != *b.metric) return *a.metric > *b.metric;
        if (a.weights.lambda_cl != b.weights.lambda_cl) return a.weights.lambda_cl < b.weights.lambda_cl;
        if (a.weights.lambda_co != b.weights.lambda_co) return a.weights.lambda_co < b.weights.lambda_co;
        return a.weights.lambda_al < b.weights.lambda_al;
    });
    GridResult result;
    result.validation_subjects = holdout.num_subjects();
    if (!ok.empty()) result.best = 0;
    result.trials = std::move(ok);
    for (auto& t : failed) result.trials.push_back(std::move(t));
    return result;
}

// ---------------------------------------------------------------------------

std::string loss_term_name(LossTerm term) {
    switch (term) {
    case LossTerm::Auxiliary: return "auxiliary";
    case LossTerm::CrossOmics: return "cross_omics";
    case LossTerm::Contrastive: return "contrastive";
    }
    return "unknown";
}

LossTerm parse_loss_term(const std::string& name) {
    if (name == "auxiliary") return LossTerm::Auxiliary;
    if (name == "cross_omics") return LossTerm::CrossOmics;
    if (name == "contrastive") return LossTerm::Contrastive;
    throw InvalidArgument("unknown loss term: " + name);
}

void to_json(json& j, const LossWeights& w) {
    j = json{{"lambda_al", w.lambda_al}, {"lambda_co", w.lambda_co}, {"lambda_cl", w.lambda_cl},
             {"alpha", w.alpha}};
}

void from_json(const json& j, LossWeights& w) {
    LossWeights d;
    w.lambda_al = j.value("lambda_al", d.lambda_al);
    w.lambda_co = j.value("lambda_co", d.lambda_co);
    w.lambda_cl = j.value("lambda_cl", d.lambda_cl);
    w.alpha = j.value("alpha", d.alpha);
}

void to_json(json& j, const TrainConfig& cfg) {
    std::vector<std::string> disabled;
    for (LossTerm t : cfg.disabled_terms) disabled.push_back(loss_term_name(t));
    j = json{{"epochs", cfg.epochs},
             {"initial_lr", cfg.initial_lr},
             {"schedule",
              {{"kind", cfg.schedule.kind == LrSchedule::Kind::Step ? "step" : "constant"},
               {"step_every", cfg.schedule.step_every},
               {"factor", cfg.schedule.factor}}},
             {"batch_size", cfg.batch_size},
             {"seed", cfg.seed},
             {"weights", cfg.weights},
             {"reduction", cfg.reduction == Reduction::Mean ? "mean" : "sum"},
             {"eval_every", cfg.eval_every},
             {"disabled_terms", disabled}};
}

void from_json(const json& j, TrainConfig& cfg) {
    TrainConfig d;
    cfg.epochs = j.value("epochs", d.epochs);
    cfg.initial_lr = j.value("initial_lr", d.initial_lr);
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        const std::string kind = s.value("kind", std::string("step"));
        if (kind != "step" && kind != "constant") throw InvalidArgument("unknown lr schedule: " + kind);
        cfg.schedule.kind = kind == "step" ? LrSchedule::Kind::Step : LrSchedule::Kind::Constant;
        cfg.schedule.step_every = s.value("step_every", d.schedule.step_every);
        cfg.schedule.factor = s.value("factor", d.schedule.factor);
    }
    cfg.batch_size = j.value("batch_size", d.batch_size);
    cfg.seed = j.value("seed", d.seed);
    cfg.weights = j.value("weights", d.weights);
    const std::string red = j.value("reduction", std::string("mean"));
    if (red != "mean" && red != "sum") throw InvalidArgument("unknown reduction: " + red);
    cfg.reduction = red == "mean" ? Reduction::Mean : Reduction::Sum;
    cfg.eval_every = j.value("eval_every", d.eval_every);
    cfg.disabled_terms.clear();
    for (const auto& t : j.value("disabled_terms", std::vector<std::string>{}))
        cfg.disabled_terms.push_back(parse_loss_term(t));
}

void to_json(json& j, const GridSpec& grid) {
    j = json{{"lambda_al", grid.lambda_al}, {"lambda_co", grid.lambda_co},
             {"lambda_cl", grid.lambda_cl}, {"metric", grid.metric},
             {"validation_fraction", grid.validation_fraction}};
}

void from_json(const json& j, GridSpec& grid) {
    GridSpec d;
    grid.lambda_al = j.value("lambda_al", d.lambda_al);
    grid.lambda_co = j.value("lambda_co", d.lambda_co);
    grid.lambda_cl = j.value("lambda_cl", d.lambda_cl);
    grid.metric = j.value("metric", d.metric);
    grid.validation_fraction = j.value("validation_fraction", d.validation_fraction);
}

void write_epoch_log_csv(const std::vector<EpochLog>& logs, const std::filesystem::path& path) {
    std::ostringstream os;
    const std::size_t views = logs.empty() ? 0 : logs.front().latent_variance.size();
    os << "epoch,l_clf,l_al,l_co,l_cl,total,lr,train_acc,val_acc";
    for (std::size_t i = 0; i < views; ++i) os << ",latent_var_" << i;
    os << '\n';
    for (const auto& l : logs) {
        os << l.epoch << ',' << fmt(l.loss.l_clf) << ',' << fmt(l.loss.l_al) << ','
           << fmt(l.loss.l_co) << ',' << fmt(l.loss.l_cl) << ',' << fmt(l.loss.total) << ','
           << fmt(l.lr) << ',' << fmt(l.train_acc) << ',';
        if (l.val_acc) os << fmt(*l.val_acc);
        for (double v : l.latent_variance) os << ',' << fmt(v);
        os << '\n';
    }
    write_file(path, os.str());
}

void write_grid_summary_csv(const GridResult& result, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "lambda_al,lambda_co,lambda_cl,metric,status\n";
    for (const auto& t : result.trials) {
        os << fmt(t.weights.lambda_al) << ',' << fmt(t.weights.lambda_co) << ','
           << fmt(t.weights.lambda_cl) << ',';
        if (t.metric) os << fmt(*t.metric);
        os << ',' << t.status << '\n';
    }
    write_file(path, os.str());
}

} // namespace clclsa
