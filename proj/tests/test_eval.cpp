#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clclsa/errors.hpp"
#include "clclsa/experiments.hpp"
#include "clclsa/metrics.hpp"
#include "clclsa/report.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace clclsa;

namespace {

std::vector<int> random_labels(std::size_t n, std::size_t c, RngStream& rng) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(c));
    return y;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentSetup quick_setup() {
    ExperimentSetup s;
    s.model = desk_config({}, 0);
    s.model.embed_dims = {8};
    s.model.ae_hidden = {8, 4};
    s.train = desk_train_config();
    s.train.epochs = 5;
    return s;
}

MultiOmicsDataset quick_data() {
    SyntheticSpec spec;
    spec.n = 60;
    spec.dims = {6, 5, 4};
    spec.seed = 9;
    return synth_generate(spec);
}

} // namespace

TEST_CASE("accuracy and relabelling") {
    const std::vector<int> p{0, 1, 2, 2, 1}, t{0, 1, 1, 2, 0};
    CHECK(accuracy(p, t) == doctest::Approx(0.6));
    const std::vector<int> perm{2, 0, 1};
    std::vector<int> pp, tt;
    for (int v : p) pp.push_back(perm[v]);
    for (int v : t) tt.push_back(perm[v]);
    CHECK(accuracy(pp, tt) == accuracy(p, t));
    CHECK_THROWS(accuracy(std::vector<int>{1}, t));
}

TEST_CASE("binary auc against the pairwise oracle") {
    RngStream rng(1, "auc");
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + rng.below(499);
        std::vector<int> y = random_labels(n, 2, rng);
        y[0] = 0;
        y[1] = 1;
        std::vector<double> s(n);
        // coarse scores so ties are common
        for (auto& v : s) v = t % 2 ? std::round(rng.uniform() * 10.0) / 10.0 : rng.uniform();
        CHECK(std::abs(auc_binary(s, y) - oracle::auc_pairwise(s, y)) < 1e-12);
    }
    CHECK(auc_binary(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}) == 1.0);
    CHECK(auc_binary(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
    CHECK_THROWS_AS(auc_binary(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), InvalidArgument);
}

TEST_CASE("f1 scores against confusion-matrix oracles") {
    RngStream rng(2, "f1");
    for (int t = 0; t < 100; ++t) {
        const std::size_t c = 2 + rng.below(4);
        const std::size_t n = 5 + rng.below(60);
        const auto truth = random_labels(n, c, rng);
        const auto pred = random_labels(n, c, rng);
        const auto cm = confusion_matrix(pred, truth, c);
        const auto f1 = oracle::per_class_f1(cm);
        double macro = 0.0, weighted = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            std::size_t support = 0;
            for (std::size_t o = 0; o < c; ++o) support += cm[k][o];
            macro += f1[k] / static_cast<double>(c);
            weighted += f1[k] * static_cast<double>(support) / static_cast<double>(n);
        }
        CHECK(std::abs(multiclass_f1(pred, truth, F1Average::Macro, c) - macro) < 1e-12);
        CHECK(std::abs(multiclass_f1(pred, truth, F1Average::Weighted, c) - weighted) < 1e-12);
        if (c == 2) {
            CHECK(std::abs(f1_binary(pred, truth, 1) - f1[1]) < 1e-12);
            const double mean = (f1_binary(pred, truth, 0) + f1_binary(pred, truth, 1)) / 2.0;
            CHECK(std::abs(multiclass_f1(pred, truth, F1Average::Macro, 2) - mean) < 1e-12);
        }
    }
    // balanced classes: weighted equals macro
    for (int t = 0; t < 50; ++t) {
        std::vector<int> truth;
        for (int k = 0; k < 4; ++k) truth.insert(truth.end(), 7, k);
        const auto pred = random_labels(truth.size(), 4, rng);
        CHECK(std::abs(multiclass_f1(pred, truth, F1Average::Weighted, 4) -
                       multiclass_f1(pred, truth, F1Average::Macro, 4)) < 1e-12);
    }
    // degenerate conventions
    CHECK(f1_binary(std::vector<int>{0, 0}, std::vector<int>{0, 0}) == 0.0);
    CHECK(f1_binary(std::vector<int>{1, 1}, std::vector<int>{1, 1}) == 1.0);
}

TEST_CASE("compute_metrics") {
    const Tensor probs = Tensor::from_rows({{0.9, 0.1}, {0.4, 0.6}, {0.7, 0.3}, {0.2, 0.8}});
    const std::vector<int> truth{0, 1, 1, 1};
    const auto r = compute_metrics(probs, truth, 2);
    CHECK(r.acc == 0.75);
    REQUIRE(r.f1.has_value());
    CHECK(*r.f1 == doctest::Approx(0.8));
    REQUIRE(r.auc.has_value());
    CHECK(*r.auc == 1.0);
    CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{1, 0}, {1, 2}});
    CHECK(metric_value(r, "acc") == 0.75);
    CHECK(metric_value(r, "auc") == 1.0);
    CHECK_THROWS_AS(metric_value(r, "loss"), InvalidArgument);

    const Tensor three = Tensor::from_rows({{0.5, 0.3, 0.2}, {0.1, 0.1, 0.8}});
    const auto m = compute_metrics(three, std::vector<int>{0, 2}, 3);
    CHECK_FALSE(m.f1.has_value());
    CHECK_FALSE(m.auc.has_value());
    CHECK(m.acc == 1.0);
    CHECK_THROWS_AS(metric_value(m, "f1"), InvalidArgument);
}

TEST_CASE("aggregation matches recomputation") {
    std::vector<TrialRow> rows(4);
    const double accs[] = {0.8, 0.9, 0.85, 0.1};
    for (int i = 0; i < 4; ++i) {
        rows[i].seed = i;
        rows[i].metrics = MetricValues{accs[i], std::nullopt, std::nullopt, accs[i] / 2, accs[i] / 3};
    }
    rows[3].status = "failed";
    const auto [mean, sd] = aggregate(rows);
    REQUIRE(mean);
    const double mu = (0.8 + 0.9 + 0.85) / 3.0;
    CHECK(std::abs(mean->acc - mu) < 1e-12);
    const double var = ((0.8 - mu) * (0.8 - mu) + (0.9 - mu) * (0.9 - mu) + (0.85 - mu) * (0.85 - mu)) / 2.0;
    CHECK(std::abs(sd->acc - std::sqrt(var)) < 1e-12);
    CHECK(std::abs(mean->macro_f1 - mu / 3.0) < 1e-12);

    const std::vector<TrialRow> single(rows.begin(), rows.begin() + 1);
    CHECK(aggregate(single).second->acc == 0.0);
    const std::vector<TrialRow> failed(rows.begin() + 3, rows.end());
    CHECK_FALSE(aggregate(failed).first.has_value());
}

TEST_CASE("report round-trip") {
    std::vector<TrialRow> rows(3);
    rows[0] = TrialRow{"synthetic", "clclsa", 0.2, 3, LossWeights{0.1, 0.02, 0.05, 9.0},
                       MetricValues{1.0 / 3.0, 0.25, 0.7, 0.123456789012345678, 2.0 / 7.0}, "ok", ""};
    rows[1] = TrialRow{"syn,thetic", "plain", 0.4, std::nullopt, LossWeights{},
                       MetricValues{0.5, std::nullopt, std::nullopt, 0.1, 0.2}, "aggregate_mean", ""};
    rows[2] = TrialRow{"synthetic", "clclsa", 0.4, 7, LossWeights{}, std::nullopt, "failed", "epoch 3: nan"};

    auto same = [](const std::vector<TrialRow>& a, const std::vector<TrialRow>& b, bool messages) {
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].dataset == b[i].dataset);
            CHECK(a[i].variant == b[i].variant);
            CHECK(a[i].eta == b[i].eta);
            CHECK(a[i].seed == b[i].seed);
            CHECK(a[i].weights == b[i].weights);
            CHECK(a[i].status == b[i].status);
            if (messages) CHECK(a[i].message == b[i].message);
            REQUIRE(a[i].metrics.has_value() == b[i].metrics.has_value());
            if (!a[i].metrics) continue;
            CHECK(a[i].metrics->acc == b[i].metrics->acc);
            CHECK(a[i].metrics->f1 == b[i].metrics->f1);
            CHECK(a[i].metrics->auc == b[i].metrics->auc);
            CHECK(a[i].metrics->weighted_f1 == b[i].metrics->weighted_f1);
            CHECK(a[i].metrics->macro_f1 == b[i].metrics->macro_f1);
        }
    };
    same(rows, parse_report_csv(report_csv(rows)), false);
    same(rows, parse_report_json(report_json(rows)), true);
    CHECK(report_csv({}) == std::string(kReportHeader) + "\n");
    CHECK_THROWS_AS(parse_report_csv("bad,header\n"), ParseError);
    CHECK_THROWS_AS(parse_report_json("{"), ParseError);

    const auto dir = testing::scratch_dir("report");
    emit_report(rows, dir / "r.csv", ReportFormat::Csv);
    CHECK(slurp(dir / "r.csv") == report_csv(rows));
    emit_report(rows, dir / "r.json", parse_report_format("json"));
    same(rows, parse_report_json(slurp(dir / "r.json")), true);
    CHECK_THROWS_AS(emit_report(rows, dir / "no" / "such" / "dir" / "r.csv", ReportFormat::Csv), IoError);
    CHECK_THROWS_AS(parse_report_format("xml"), InvalidArgument);
}

TEST_CASE("ablation toggles") {
    const LossWeights base{0.1, 0.5, 0.05, 9.0};
    CHECK(ablation_weights("ctst+aux", base, 0.1) == LossWeights{0.1, 0.1, 0.05, 9.0});
    CHECK(ablation_weights("ctst", base, 0.1) == LossWeights{0.0, 0.1, 0.05, 9.0});
    CHECK(ablation_weights("aux", base, 0.1) == LossWeights{0.1, 0.1, 0.0, 9.0});
    CHECK(ablation_weights("plain", base, 0.1) == LossWeights{0.0, 0.1, 0.0, 9.0});
    CHECK_THROWS_AS(ablation_weights("none", base, 0.1), InvalidArgument);
}

TEST_CASE("adapt_config follows the dataset") {
    const auto ds = quick_data();
    const auto cfg = adapt_config(quick_setup().model, ds);
    CHECK(cfg.input_dims == std::vector<std::size_t>{6, 5, 4});
    CHECK(cfg.embed_dims == std::vector<std::size_t>{8, 8, 8});
    CHECK(cfg.num_classes == 3);
    auto fixed = cfg;
    fixed.input_dims = {6, 5, 7};
    CHECK_THROWS_AS(adapt_config(fixed, ds), ShapeError);
}

TEST_CASE("sweep bookkeeping") {
    const auto ds = quick_data();
    const auto setup = quick_setup();
    const std::vector<double> etas{0.0, 0.3};
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    const auto sweep = missing_rate_sweep(ds, setup, etas, seeds);
    REQUIRE(sweep.points.size() == 2);
    for (std::size_t p = 0; p < 2; ++p) {
        CHECK(sweep.points[p].eta == etas[p]);
        CHECK(sweep.points[p].trials.size() == 3);
        const auto [mean, sd] = aggregate(sweep.points[p].trials);
        REQUIRE(mean);
        CHECK(std::abs(mean->acc - sweep.points[p].mean->acc) < 1e-12);
        CHECK(std::abs(sd->acc - sweep.points[p].stddev->acc) < 1e-12);
    }
    const auto rows = report_rows(sweep);
    CHECK(rows.size() == 6 + 4);
    CHECK(rows[3].status == "aggregate_mean");
    CHECK(rows[4].status == "aggregate_std");
    CHECK(rows[9].status == "aggregate_std");
    CHECK_FALSE(rows[3].seed.has_value());
    CHECK(report_rows(sweep, false).size() == 6);
    // complete data has no λ_co
    CHECK(sweep.points[0].trials[0].weights.lambda_co == 0.0);
    CHECK(sweep.points[1].trials[0].weights.lambda_co == setup.train.weights.lambda_co);

    CHECK_THROWS_AS(missing_rate_sweep(ds, setup, {0.3, 0.3}, seeds), InvalidArgument);
    CHECK_THROWS_AS(missing_rate_sweep(ds, setup, {0.5, 0.2}, seeds), InvalidArgument);

    auto threaded = setup;
    threaded.threads = 3;
    const auto again = missing_rate_sweep(ds, threaded, etas, seeds);
    CHECK(report_csv(report_rows(again)) == report_csv(rows));
}

TEST_CASE("partial omics, surface and ablation runners") {
    const auto ds = quick_data();
    const auto setup = quick_setup();
    const std::vector<std::uint64_t> seeds{0};
    const auto subsets = partial_omics_run(ds, {{0, 2}, {1, 2}}, setup, {0.2}, seeds);
    REQUIRE(subsets.size() == 2);
    CHECK(subsets[0].views == std::vector<std::size_t>{0, 2});
    CHECK(subsets[0].sweep.points[0].trials[0].variant.find("@0+2") != std::string::npos);
    CHECK_THROWS_AS(partial_omics_run(ds, {{1}}, setup, {0.2}, seeds), InvalidArgument);
    CHECK_THROWS_AS(partial_omics_run(ds, {{0, 5}}, setup, {0.2}, seeds), InvalidArgument);

    SurfaceSpec surface;
    surface.lambda_co = {0.01, 0.1};
    surface.lambda_cl = {0.05, 1.0};
    const auto cells = hyperparam_surface(ds, surface, setup);
    REQUIRE(cells.size() == 4);
    CHECK(cells[0].weights.lambda_co == 0.01);
    CHECK(cells[0].weights.lambda_cl == 0.05);
    CHECK(cells[1].weights.lambda_cl == 1.0);
    CHECK(cells[3].weights.lambda_co == 0.1);
    CHECK(cells[3].weights.lambda_al == 0.1);

    AblationSpec ablation;
    ablation.etas = {0.2};
    const auto abl = ablation_run(ds, ablation, setup);
    REQUIRE(abl.size() == 4);
    CHECK(abl[0].variant == "ctst+aux");
    CHECK(abl[3].sweep.points[0].trials[0].weights.lambda_al == 0.0);
    CHECK(abl[3].sweep.points[0].trials[0].weights.lambda_cl == 0.0);
    CHECK(abl[1].sweep.points[0].trials[0].weights.lambda_cl == setup.train.weights.lambda_cl);
}

TEST_CASE("failed trials are reported, not thrown") {
    const auto ds = quick_data();
    auto setup = quick_setup();
    setup.train.initial_lr = 1e6;
    setup.train.epochs = 50;
    setup.train.schedule.kind = LrSchedule::Kind::Constant;
    const auto row = run_trial(ds, setup, 0.3, 0);
    if (row.status == "failed") {
        CHECK_FALSE(row.message.empty());
        CHECK_FALSE(row.metrics.has_value());
    } else {
        CHECK(row.status == "ok");
    }
    auto bad = quick_setup();
    bad.train_fraction = 1.5;
    const auto failed = run_trial(ds, bad, 0.3, 0);
    CHECK(failed.status == "failed");
    CHECK_FALSE(failed.message.empty());
}

TEST_CASE("evaluate on a masked dataset") {
    auto ds = apply_missingness(quick_data(), MissingnessSpec{0.5, 1, {}, "missing"});
    auto cfg = adapt_config(quick_setup().model, ds);
    Model model(cfg, 0);
    const auto r = evaluate(model, ds);
    CHECK(r.n_subjects == 60);
    CHECK(r.acc >= 0.0);
    CHECK(r.acc <= 1.0);
    std::size_t total = 0;
    for (const auto& row : r.confusion)
        for (auto v : row) total += v;
    CHECK(total == 60);
}
