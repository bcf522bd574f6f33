#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cli_runner.hpp"
#include "clclsa/cli.hpp"
#include "clclsa/data.hpp"
#include "clclsa/errors.hpp"
#include "clclsa/report.hpp"
#include "support.hpp"

#include <limits>

using namespace clclsa;
using nlohmann::json;
using testing::read_text;
using testing::run_cli;
namespace fs = std::filesystem;

namespace {

const std::string kSmallModel = " --model.embed_dim 8 --model.ae_hidden 8,4";

/// Dataset directory shared by the end-to-end cases.
fs::path prepared_data(const fs::path& dir) {
    const auto ds = dir / "ds";
    if (!fs::exists(ds / "manifest.json")) {
        const auto r = run_cli("synth --n 60 --views 3 --classes 3 --synth.dim 8 --seed 7 --out " + ds.string(), dir);
        REQUIRE(r.code == 0);
    }
    const auto masked = dir / "masked";
    if (!fs::exists(masked / "manifest.json")) {
        const auto r = run_cli("mask --data " + ds.string() + " --eta 0.3 --seed 1 --out " + masked.string(), dir);
        REQUIRE(r.code == 0);
    }
    return masked;
}

} // namespace

TEST_CASE("config plumbing") {
    json c = cli::default_config("train");
    CHECK(c.at("seed").is_null());
    CHECK(c.at("train").at("epochs") == 2500);
    CHECK_FALSE(c.at("train").contains("seed"));
    CHECK_THROWS_AS(cli::default_config("fly"), std::out_of_range);
    CHECK_FALSE(cli::default_config("eval").contains("seed"));

    cli::overlay_config(c, json{{"train", {{"epochs", 10}, {"weights", {{"lambda_cl", 1}}}}},
                                {"unrelated", {{"x", 1}}}});
    CHECK(c["train"]["epochs"] == 10);
    CHECK(c["train"]["weights"]["lambda_cl"].get<double>() == 1.0);
    CHECK(c["train"]["weights"]["lambda_cl"].is_number_float());
    CHECK_FALSE(c.contains("unrelated"));
    CHECK_THROWS_AS(cli::overlay_config(c, json{{"train", {{"epoch", 10}}}}), Error);
    CHECK_THROWS_AS(cli::overlay_config(c, json{{"train", {{"epochs", "ten"}}}}), Error);

    cli::set_dotted(c, "train.initial_lr", "0.5");
    CHECK(c["train"]["initial_lr"] == 0.5);
    cli::set_dotted(c, "model.ae_hidden", "7,3");
    CHECK(c["model"]["ae_hidden"] == json::array({7, 3}));
    cli::set_dotted(c, "model.ae_hidden", "[9,4]");
    CHECK(c["model"]["ae_hidden"] == json::array({9, 4}));
    cli::set_dotted(c, "seed", "12");
    CHECK(c["seed"] == 12);
    CHECK_THROWS_AS(cli::set_dotted(c, "train.epochs", "-3"), Error);
    CHECK_THROWS_AS(cli::set_dotted(c, "train.nope", "1"), Error);

    const auto leaves = cli::leaf_paths(cli::default_config("mask"));
    CHECK(std::find(leaves.begin(), leaves.end(), "mask.eta") != leaves.end());
    CHECK(std::find(leaves.begin(), leaves.end(), "seed") != leaves.end());
}

TEST_CASE("usage errors exit with 1") {
    const auto dir = testing::scratch_dir("cli_usage");
    CHECK(run_cli("", dir).code == 1);
    CHECK(run_cli("fly", dir).code == 1);
    CHECK(run_cli("train --data x --out y", dir).code == 1);
    const auto missing_seed = run_cli("synth --out " + (dir / "d").string(), dir);
    CHECK(missing_seed.code == 1);
    CHECK(missing_seed.err.find("--seed") != std::string::npos);
    CHECK(run_cli("train --seed 1 --bogus 3", dir).code == 1);
    CHECK(run_cli("train --seed 1 --epochs many", dir).code == 1);
    CHECK(run_cli("train --seed 1 --out " + (dir / "o").string(), dir).code == 1); // no --data
    CHECK(run_cli("train --seed 1 --preset mouse", dir).code == 1);
    CHECK(run_cli("surface --seed 1 --surface.fixed xx --report " + (dir / "s.csv").string(), dir).code == 1);
    const auto version = run_cli("--version", dir);
    CHECK(version.code == 0);
    CHECK(version.out.find(cli::kVersion) != std::string::npos);
    CHECK(run_cli("train --help", dir).code == 0);
}

TEST_CASE("synth, mask, train and eval end to end") {
    const auto dir = testing::scratch_dir("cli_e2e");
    const auto masked = prepared_data(dir);
    const auto ds = load_dataset_dir(masked);
    CHECK(ds.num_subjects() == 60);
    CHECK(ds.input_dims() == std::vector<std::size_t>{8, 8, 8});
    CHECK(ds.missing_rate() == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(fs::exists(dir / "ds" / "run_manifest.json"));

    const auto run = dir / "run";
    const std::string train_args =
        "train --data " + masked.string() + " --epochs 10 --seed 3 --out " + run.string() + kSmallModel;
    const auto t = run_cli(train_args, dir);
    REQUIRE(t.code == 0);
    for (const char* f : {"config.json", "epoch_log.csv", "checkpoint.json", "run_manifest.json"})
        CHECK(fs::exists(run / f));
    const auto log = read_text(run / "epoch_log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 11);

    const auto manifest = json::parse(read_text(run / "run_manifest.json"));
    CHECK(manifest["command"] == "train");
    CHECK(manifest["config"]["train"]["epochs"] == 10);
    CHECK(manifest["config"]["seed"] == 3);
    CHECK(manifest["version"] == cli::kVersion);
    CHECK(manifest["inputs"].size() == 6); // three views, labels, mask, dataset manifest
    CHECK(manifest["artifacts"].size() == 3);

    const auto e = run_cli("eval --checkpoint " + (run / "checkpoint.json").string() + " --data " + masked.string() +
                               " --out " + (dir / "metrics.json").string(),
                           dir);
    REQUIRE(e.code == 0);
    const auto metrics = json::parse(e.out);
    CHECK(metrics.contains("acc"));
    CHECK(metrics.contains("macro_f1"));
    CHECK(metrics["n_subjects"] == 60);
    CHECK(json::parse(read_text(dir / "metrics.json")) == metrics);
    CHECK(fs::exists(dir / "metrics.json.run_manifest.json"));

    SUBCASE("same command line reproduces every output") {
        const auto first_log = read_text(run / "epoch_log.csv");
        const auto first_ckpt = read_text(run / "checkpoint.json");
        const auto first_manifest = testing::stable_manifest(run / "run_manifest.json");
        REQUIRE(run_cli(train_args, dir).code == 0);
        CHECK(read_text(run / "epoch_log.csv") == first_log);
        CHECK(read_text(run / "checkpoint.json") == first_ckpt);
        CHECK(testing::stable_manifest(run / "run_manifest.json") == first_manifest);
    }
    SUBCASE("a manifest re-executes the run") {
        const auto again = dir / "again";
        REQUIRE(run_cli("train --config " + (run / "run_manifest.json").string() + " --out " + again.string(), dir).code == 0);
        CHECK(read_text(again / "checkpoint.json") == read_text(run / "checkpoint.json"));
        CHECK(read_text(again / "epoch_log.csv") == read_text(run / "epoch_log.csv"));
    }
    SUBCASE("flags override the config file field by field") {
        const auto cfg = dir / "cfg.json";
        std::ofstream(cfg) << R"({"seed": 5, "train": {"epochs": 4, "initial_lr": 0.01}, "model": {"embed_dim": 8, "ae_hidden": [8, 4]}})";
        const auto out = dir / "overlay";
        REQUIRE(run_cli("train --config " + cfg.string() + " --epochs 6 --data " + masked.string() + " --out " + out.string(), dir).code == 0);
        const auto m = json::parse(read_text(out / "run_manifest.json"))["config"];
        json expected = cli::default_config("train");
        cli::overlay_config(expected, json::parse(read_text(cfg)));
        cli::set_dotted(expected, "train.epochs", "6");
        cli::set_dotted(expected, "data", masked.string());
        cli::set_dotted(expected, "out", out.string());
        CHECK(m == expected);
    }
}

TEST_CASE("numeric failure exits with 2") {
    const auto dir = testing::scratch_dir("cli_numeric");
    SyntheticSpec spec;
    spec.n = 30;
    spec.dims = {4, 4};
    auto ds = synth_generate(spec);
    ds.views[0](0, 0) = std::numeric_limits<double>::infinity();
    write_dataset(ds, dir / "bad");
    const auto r = run_cli("train --data " + (dir / "bad").string() + " --epochs 3 --seed 1 --out " +
                               (dir / "run").string() + kSmallModel,
                           dir);
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("experiment subcommands write reports and reproduce them") {
    const auto dir = testing::scratch_dir("cli_experiments");
    const std::string common = " --seed 2 --synth.n 60 --synth.dim 6 --epochs 3 --experiment.seeds 2" + kSmallModel;

    const auto sweep_csv = dir / "sweep.csv";
    const std::string sweep = "sweep" + common + " --experiment.etas 0.2,0.4 --report " + sweep_csv.string();
    REQUIRE(run_cli(sweep, dir).code == 0);
    const auto rows = parse_report_csv(read_text(sweep_csv));
    CHECK(rows.size() == 2 * (2 + 2));
    CHECK(rows[0].seed == 2u);
    CHECK(rows[1].seed == 3u);
    CHECK(fs::exists(dir / "sweep.csv.run_manifest.json"));
    const auto first = read_text(sweep_csv);
    REQUIRE(run_cli(sweep, dir).code == 0);
    CHECK(read_text(sweep_csv) == first);

    const auto subsets = dir / "subsets.json";
    REQUIRE(run_cli("sweep" + common + " --experiment.etas 0.2 --experiment.views 0+1,1+2 --format json --report " +
                        subsets.string(),
                    dir)
                .code == 0);
    CHECK(parse_report_json(read_text(subsets)).size() == 2 * 4);

    const auto ablate = dir / "ablate.csv";
    REQUIRE(run_cli("ablate" + common + " --ablation.etas 0.2 --report " + ablate.string(), dir).code == 0);
    CHECK(parse_report_csv(read_text(ablate)).size() == 4 * 4);

    const auto surface = dir / "surface.csv";
    REQUIRE(run_cli("surface" + common + " --surface.lambda_co 0.1 --surface.lambda_cl 0.05,1 --report " +
                        surface.string(),
                    dir)
                .code == 0);
    CHECK(parse_report_csv(read_text(surface)).size() == 2 * 2);

    const auto baseline = dir / "zero.csv";
    REQUIRE(run_cli("sweep" + common + " --experiment.etas 0.5 --experiment.baseline zero_fill --report " +
                        baseline.string(),
                    dir)
                .code == 0);
    CHECK(parse_report_csv(read_text(baseline)).front().variant != rows.front().variant);
}

TEST_CASE("grid subcommand") {
    const auto dir = testing::scratch_dir("cli_grid");
    const auto masked = prepared_data(dir);
    const auto out = dir / "grid";
    const std::string args = "grid --data " + masked.string() + " --seed 1 --epochs 2 --grid.lambda_al 0,0.1" +
                             " --grid.lambda_co 0.1 --grid.lambda_cl 0.05 --out " + out.string() + kSmallModel;
    REQUIRE(run_cli(args, dir).code == 0);
    const auto summary = read_text(out / "grid_summary.csv");
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
    CHECK(fs::exists(out / "best.json"));
    REQUIRE(run_cli(args, dir).code == 0);
    CHECK(read_text(out / "grid_summary.csv") == summary);
}
