#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "noiseadapt/config.hpp"
#include "noiseadapt/metrics.hpp"
#include "noiseadapt/mlp.hpp"
#include "noiseadapt/noise_layer.hpp"
#include "noiseadapt/synth.hpp"

namespace noiseadapt {

// Independent random streams derived from the run seed.
enum RngStream : std::uint64_t {
    kMixture = 1,
    kTrainSample = 2,
    kTestSample = 3,
    kNoiseMatrix = 4,
    kLabelFlips = 5,
    kTrainOutliers = 6,
    kHeldout = 7,
    kInit = 8,
    kShuffle = 9,
    kCleanModelInit = 10,
    kCleanModelShuffle = 11,
};

// Data for one (config, seed): a noisy training set, a clean test set and,
// in outlier mode, a held-out noisy set for inlier/outlier detection.
struct PreparedData {
    Dataset train;
    Dataset test;
    std::optional<Dataset> heldout;
    TrueNoiseSpec noise;
};

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

struct VariantOptions {
    Variant variant = Variant::none;
    double alpha_scale = 1.0;              // outlier variant only
    std::optional<double> q_weight_decay;  // learned variant; overrides config
    std::string label;                     // name used in reports; defaults to the variant name
};

struct VariantReport {
    std::string label;
    Variant variant = Variant::none;
    std::string status = "ok";  // "ok" or "diverged"
    std::string message;
    std::vector<double> epoch_losses;
    double test_error = 1.0;
    std::optional<Matrix> q;
    std::optional<double> q_recovery;           // |Q - Q*|_max
    std::optional<double> identity_recovery;    // |I - Q*|_max
    std::optional<Matrix> confusion;            // base model, training set
    std::optional<Matrix> combined;             // Q C
    std::optional<double> qc_gap_at_unfreeze;   // |Q C - Q*|_max when Q starts learning
    std::optional<double> qc_gap_final;
    std::optional<double> alpha_used;
    std::optional<PRCurve> pr;
    ModelParams params;
    double seconds = 0.0;  // wall clock; kept out of report files

    bool diverged() const { return status != "ok"; }
};

VariantReport run_variant(const ExperimentConfig& config, const PreparedData& data,
                          const VariantOptions& options, std::uint64_t seed);

struct RunReport {
    std::uint64_t seed = 0;
    nlohmann::json config;
    TrueNoiseSpec noise;
    std::vector<VariantReport> variants;

    bool diverged() const;
};

// generate -> corrupt -> train the configured variant -> evaluate on the clean test set.
RunReport run_single(const ExperimentConfig& config);

// Variants a sweep cell trains for the configured noise mode.
std::vector<VariantOptions> sweep_variants(const ExperimentConfig& config);

struct SweepCell {
    double noise_level = 0.0;
    std::size_t train_size = 0;
    std::uint64_t seed = 0;
    RunReport report;
};

struct SweepResult {
    std::vector<SweepCell> cells;
};

// Full noise_level x train_size x seed cross product. Seeds are config.seed,
// config.seed + 1, ... A diverged variant is recorded and the sweep continues.
SweepResult run_sweep(const ExperimentConfig& config);

// Report serialization. Timing is excluded so identical inputs give identical bytes.
nlohmann::json variant_to_json(const VariantReport& v);
nlohmann::json report_to_json(const RunReport& r);
nlohmann::json sweep_cell_to_json(const SweepCell& cell);
nlohmann::json timing_to_json(const RunReport& r);

// CSV header: noise_level,train_size,variant,test_error,q_recovery,ap,seed
std::string sweep_summary_csv(const SweepResult& sweep);
// Per (cell, variant) min/median/max over seeds.
std::string sweep_aggregate_csv(const SweepResult& sweep);
std::string pr_curve_csv(const PRCurve& curve);

nlohmann::json params_to_json(const ModelParams& p);
ModelParams params_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

// Writes report.json, timing.json, model_<variant>.json, q_<variant>.csv,
// q_star.csv and pr_<variant>.csv (when applicable) into dir.
void write_run_outputs(const std::string& dir, const RunReport& report);

// Writes one report per cell plus summary.csv (and summary_aggregate.csv with several seeds).
void write_sweep_outputs(const std::string& dir, const SweepResult& sweep);

}  // namespace noiseadapt
