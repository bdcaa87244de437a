#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "noiseadapt/cli.hpp"
#include "noiseadapt/config.hpp"
#include "noiseadapt/experiment.hpp"
#include "noiseadapt/trainer.hpp"

using namespace noiseadapt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("noiseadapt_test_harness") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json small_config_json() {
    return json::parse(R"({
      "seed": 3,
      "dataset": {"classes": 3, "dim": 4, "train_size": 900, "test_size": 300, "separation": 6},
      "noise": {"mode": "flip-random", "level": 0.5, "fan_out": 2},
      "model": {"hidden": [16], "learning_rate": 0.05, "momentum": 0.9, "batch_size": 32, "epochs": 12},
      "q": {"freeze_epochs": 3, "weight_decay": 0.1, "learning_rate": 0.05},
      "sweep": {"noise_levels": [0.5], "train_sizes": [900], "seeds": 1}
    })");
}

ExperimentConfig small_config() { return config_from_json(small_config_json()); }

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("round trip") {
        const ExperimentConfig c = small_config();
        CHECK(c.classes == 3);
        CHECK(c.noise_level == 0.5);
        CHECK(c.schedule.learning_rate == 0.05);
        const json echoed = config_to_json(c);
        CHECK(config_to_json(config_from_json(echoed)) == echoed);
    }
    SUBCASE("unknown keys are errors") {
        json j = small_config_json();
        j["epochs"] = 3;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
        j = small_config_json();
        j["model"]["lr"] = 0.1;
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
        j = small_config_json();
        j["noise"]["mode"] = "flip";
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
        j = small_config_json();
        j["dataset"]["classes"] = "three";
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SUBCASE("validation") {
        ExperimentConfig c = small_config();
        CHECK_NOTHROW(c.validate(true));
        c.noise_levels.clear();
        CHECK_THROWS_AS(c.validate(true), std::invalid_argument);
        CHECK_NOTHROW(c.validate(false));
        c = small_config();
        c.alpha = 1.5;
        CHECK_THROWS_AS(c.validate(false), std::invalid_argument);
        c = small_config();
        c.fan_out = 3;
        CHECK_THROWS_AS(c.validate(false), std::invalid_argument);
        c = small_config();
        c.schedule.freeze_epochs = 13;
        CHECK_THROWS_AS(c.validate(false), std::invalid_argument);
        CHECK_THROWS_AS(load_config("/nonexistent/config.json"), std::invalid_argument);
    }
    SUBCASE("defaults") {
        const ExperimentConfig c = config_from_json(json::object());
        CHECK(c.classes == 10);
        CHECK(c.dim == 16);
        CHECK(c.schedule.freeze_epochs == 10);
        CHECK(c.schedule.weight_decay == 0.1);
        CHECK(c.schedule.regularizer == RegularizerKind::ridge);
        CHECK(c.seeds == 3);
        CHECK(c.effective_q_learning_rate() == c.hyper.learning_rate);
    }
}

TEST_CASE("run_single without noise equals plain baseline training") {
    ExperimentConfig c = small_config();
    c.mode = NoiseKind::none;
    c.noise_level = 0.0;
    const RunReport report = run_single(c);
    REQUIRE(report.variants.size() == 1);
    const VariantReport& v = report.variants[0];
    CHECK(v.variant == Variant::none);
    CHECK(!v.q.has_value());

    const PreparedData data = prepare_data(c, c.seed);
    CHECK(data.train.noisy_labels == data.train.true_labels);
    TrainSetup setup;
    setup.hidden = c.hidden;
    setup.hyper = c.hyper;
    const Rng root(c.seed);
    Rng init = root.fork(kInit), shuffle = root.fork(kShuffle);
    const TrainResult plain = train_model(data.train.features, data.train.noisy_labels, c.classes, setup, init, shuffle);
    CHECK(plain.params == v.params);
    CHECK(plain.epoch_losses == v.epoch_losses);
    CHECK(test_error(plain.params, data.test.features, data.test.true_labels) == v.test_error);
}

TEST_CASE("learned Q moves towards Q*") {
    ExperimentConfig c = small_config();
    c.train_size = 3000;
    c.hyper.epochs = 30;
    const RunReport report = run_single(c);
    const VariantReport& v = report.variants.at(0);
    REQUIRE(v.variant == Variant::learned);
    REQUIRE(v.q_recovery.has_value());
    CHECK(*v.q_recovery < *v.identity_recovery);
    REQUIRE(v.q.has_value());
    CHECK(is_column_stochastic(*v.q, 1e-9));
}

TEST_CASE("run_single is deterministic") {
    const ExperimentConfig c = small_config();
    const std::string a = report_to_json(run_single(c)).dump();
    const std::string b = report_to_json(run_single(c)).dump();
    CHECK(a == b);
}

TEST_CASE("a 1x1 sweep reproduces run_single for every variant") {
    const ExperimentConfig c = small_config();
    const SweepResult sweep = run_sweep(c);
    REQUIRE(sweep.cells.size() == 1);
    const RunReport& cell = sweep.cells[0].report;
    REQUIRE(cell.variants.size() == 3);
    for (const VariantReport& v : cell.variants) {
        ExperimentConfig single = c;
        single.variant = v.variant;
        const RunReport r = run_single(single);
        CAPTURE(v.label);
        CHECK(r.variants[0].params == v.params);
        CHECK(r.variants[0].test_error == v.test_error);
        CHECK(r.variants[0].q == v.q);
        CHECK(variant_to_json(r.variants[0]) == variant_to_json(v));
    }
}

TEST_CASE("outlier mode reports average precision") {
    json j = small_config_json();
    j["noise"] = {{"mode", "outlier"}, {"level", 0.5}, {"known_fraction", 0.1}};
    j["sweep"] = {{"noise_levels", {0.5}}, {"train_sizes", {900}}, {"seeds", 1}, {"alpha_scales", {0.85, 1.15}}};
    const ExperimentConfig c = config_from_json(j);
    const RunReport single = run_single(c);
    const VariantReport& v = single.variants.at(0);
    CHECK(v.variant == Variant::outlier);
    REQUIRE(v.alpha_used.has_value());
    CHECK(*v.alpha_used == doctest::Approx(0.1).epsilon(1e-12));
    REQUIRE(v.pr.has_value());
    CHECK(v.pr->average_precision > 0.0);
    CHECK(v.pr->average_precision <= 1.0);
    CHECK(v.params.output_dim() == 4);

    const auto variants = sweep_variants(c);
    REQUIRE(variants.size() == 3);
    CHECK(variants[0].variant == Variant::none);
    CHECK(variants[1].alpha_scale == 0.85);
    CHECK(variants[2].alpha_scale == 1.15);
}

TEST_CASE("cli: train is byte-for-byte reproducible") {
    const fs::path dir = scratch("train");
    const fs::path cfg = write_config(dir, small_config_json());
    const auto a = cli({"train", "--config", cfg.string(), "--seed", "7", "--out", (dir / "a").string()});
    const auto b = cli({"train", "--config", cfg.string(), "--seed", "7", "--out", (dir / "b").string()});
    REQUIRE(a.code == kExitOk);
    REQUIRE(b.code == kExitOk);
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        if (entry.path().filename() == "timing.json") continue;
        ++files;
        CAPTURE(entry.path().filename().string());
        CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
    }
    CHECK(files >= 4);
    const json report = json::parse(slurp(dir / "a" / "report.json"));
    CHECK(report["seed"] == 7);

    SUBCASE("inspect-q against itself reports zero") {
        const auto q = (dir / "a" / "q_star.csv").string();
        const auto r = cli({"inspect-q", "--q", q, "--q-star", q});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("q_recovery_error 0\n") != std::string::npos);
    }
    SUBCASE("eval re-scores the saved model") {
        const auto r = cli({"eval", "--config", cfg.string(), "--seed", "7", "--model",
                            (dir / "a" / "model_learned.json").string()});
        REQUIRE(r.code == kExitOk);
        const json e = json::parse(r.out);
        CHECK(e["test_error"] == report["variants"][0]["test_error"]);
    }
}

TEST_CASE("cli: sweep over a 2x2 grid") {
    const fs::path dir = scratch("sweep");
    json j = small_config_json();
    j["sweep"] = {{"noise_levels", {0.3, 0.5}}, {"train_sizes", {300, 600}}, {"seeds", 1}};
    const fs::path cfg = write_config(dir, j);
    const auto r = cli({"sweep", "--config", cfg.string(), "--out", (dir / "out").string()});
    REQUIRE(r.code == kExitOk);

    std::vector<fs::path> reports;
    for (const auto& entry : fs::directory_iterator(dir / "out")) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("report_", 0) == 0) reports.push_back(entry.path());
    }
    CHECK(reports.size() == 4);
    CHECK(!fs::exists(dir / "out" / "summary_aggregate.csv"));

    const auto rows = read_csv(slurp(dir / "out" / "summary.csv"));
    REQUIRE(rows.size() == 1 + 4 * 3);
    CHECK(rows[0] == std::vector<std::string>{"noise_level", "train_size", "variant", "test_error",
                                              "q_recovery", "ap", "seed"});

    // Summary values equal the per-report values exactly.
    std::size_t matched = 0;
    for (const auto& path : reports) {
        const json rep = json::parse(slurp(path));
        for (const auto& v : rep["variants"]) {
            for (std::size_t i = 1; i < rows.size(); ++i) {
                if (std::stod(rows[i][0]) == rep["noise_level"].get<double>() &&
                    std::stoul(rows[i][1]) == rep["train_size"].get<std::size_t>() &&
                    rows[i][2] == v["variant"].get<std::string>()) {
                    CHECK(std::stod(rows[i][3]) == v["test_error"].get<double>());
                    if (!v["q_recovery_error"].is_null()) {
                        CHECK(std::stod(rows[i][4]) == v["q_recovery_error"].get<double>());
                    }
                    ++matched;
                }
            }
        }
    }
    CHECK(matched == 12);
}

TEST_CASE("cli: error handling and exit codes") {
    const fs::path dir = scratch("errors");
    const fs::path cfg = write_config(dir, small_config_json());

    const auto unknown = cli({"train", "--config", cfg.string(), "--bogus"});
    CHECK(unknown.code == kExitUsage);
    CHECK(!unknown.err.empty());

    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"train"}).code == kExitUsage);
    CHECK(cli({"train", "--config", (dir / "missing.json").string()}).code == kExitUsage);

    json bad = small_config_json();
    bad["model"]["typo"] = 1;
    const fs::path bad_cfg = dir / "bad.json";
    std::ofstream(bad_cfg) << bad.dump();
    const auto bad_run = cli({"train", "--config", bad_cfg.string()});
    CHECK(bad_run.code == kExitUsage);
    CHECK(bad_run.err.find("typo") != std::string::npos);

    json wild = small_config_json();
    wild["model"]["learning_rate"] = 1e8;
    wild["model"]["epochs"] = 4;
    wild["q"]["freeze_epochs"] = 1;
    const fs::path wild_cfg = dir / "wild.json";
    std::ofstream(wild_cfg) << wild.dump();
    const auto diverged = cli({"train", "--config", wild_cfg.string(), "--out", (dir / "wild").string()});
    CHECK(diverged.code == kExitDiverged);
    const json rep = json::parse(slurp(dir / "wild" / "report.json"));
    CHECK(rep["variants"][0]["status"] == "diverged");

    const auto help = cli({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("inspect-q") != std::string::npos);
}

TEST_CASE("cli: generate writes datasets") {
    const fs::path dir = scratch("generate");
    const fs::path cfg = write_config(dir, small_config_json());
    const auto r = cli({"generate", "--config", cfg.string(), "--out", (dir / "data").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(fs::exists(dir / "data" / "train.csv"));
    CHECK(fs::exists(dir / "data" / "test.csv"));
    CHECK(fs::exists(dir / "data" / "q_star.csv"));
    const Dataset train = read_dataset_csv((dir / "data" / "train.csv").string(), 3, false);
    const PreparedData data = prepare_data(small_config(), 3);
    CHECK(train.features == data.train.features);
    CHECK(train.noisy_labels == data.train.noisy_labels);
}
