#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "noiseadapt/mlp.hpp"
#include "noiseadapt/noise_layer.hpp"

namespace noiseadapt {

enum class NoiseKind { none, flip_random, flip_adversarial, outlier };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view s);

// Model variants compared by the harness.
enum class Variant {
    none,     // plain base model
    learned,  // noise layer with learned Q
    true_q,   // noise layer fixed to the generating Q*
    outlier,  // fixed (K+1)x(K+1) outlier noise matrix
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

// Everything needed to reproduce a run. Loaded from JSON; unknown keys are errors.
//
// {
//   "seed": 1, "output_dir": "out",
//   "dataset": {"classes", "dim", "train_size", "test_size", "separation",
//               "outlier_separation", "outlier_spread"},
//   "noise":   {"mode": "none|flip-random|flip-adversarial|outlier", "level",
//               "fan_out", "outliers", "known_outliers", "known_fraction", "alpha"},
//   "model":   {"hidden": [64], "learning_rate", "momentum", "weight_decay",
//               "batch_size", "epochs"},
//   "q":       {"freeze_epochs", "weight_decay", "regularizer": "ridge|trace",
//               "learning_rate", "momentum"},
//   "variant": "none|learned|true|outlier",
//   "sweep":   {"noise_levels", "train_sizes", "seeds", "alpha_scales", "q_weight_decays"}
// }
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    // dataset
    std::size_t classes = 10;
    std::size_t dim = 16;
    std::size_t train_size = 10000;  // inlier count in outlier mode
    std::size_t test_size = 10000;
    double separation = 4.0;
    std::optional<double> outlier_separation;  // default 3 * separation
    double outlier_spread = 1.0;

    // noise
    NoiseKind mode = NoiseKind::none;
    double noise_level = 0.0;  // flip probability, or outlier fraction of the training set
    std::size_t fan_out = 2;
    std::optional<std::size_t> outliers;        // randomly labelled outliers (N_out)
    std::optional<std::size_t> known_outliers;  // outliers labelled K+1 (N_known)
    double known_fraction = 0.05;               // N_known / all outliers when counts are derived
    std::optional<double> alpha;                // overrides the synthesized alpha

    // model
    std::vector<std::size_t> hidden{64};
    TrainHyper hyper{.learning_rate = 0.05, .momentum = 0.9, .weight_decay = 0.0,
                     .batch_size = 128, .epochs = 100};

    // noise matrix schedule; q_learning_rate defaults to the model learning rate
    QSchedule schedule;
    std::optional<double> q_learning_rate;

    std::optional<Variant> variant;  // default: learned for flip modes, outlier for outlier mode

    // sweep
    std::vector<double> noise_levels;
    std::vector<std::size_t> train_sizes;
    std::size_t seeds = 3;
    std::vector<double> alpha_scales{1.0};
    std::vector<double> q_weight_decays;

    double effective_outlier_separation() const {
        return outlier_separation.value_or(3.0 * separation);
    }
    double effective_q_learning_rate() const {
        return q_learning_rate.value_or(hyper.learning_rate);
    }
    Variant effective_variant() const;

    // Throws std::invalid_argument describing the first problem found.
    void validate(bool sweep_mode) const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
// Echo of every setting that affects results (output_dir is left out).
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

}  // namespace noiseadapt
