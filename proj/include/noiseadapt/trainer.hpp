#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "noiseadapt/matrix.hpp"
#include "noiseadapt/mlp.hpp"
#include "noiseadapt/noise_layer.hpp"
#include "noiseadapt/rng.hpp"

namespace noiseadapt {

// How the noise layer participates in training.
enum class NoiseLayerUse {
    none,     // plain softmax + cross-entropy
    learned,  // Q starts at I, frozen for schedule.freeze_epochs, then learned
    fixed,    // Q held at a given matrix for the whole run
};

struct TrainSetup {
    std::vector<std::size_t> hidden{64};
    TrainHyper hyper;
    QSchedule schedule;
    NoiseLayerUse layer = NoiseLayerUse::none;
    std::optional<NoiseMatrix> fixed_q;  // required when layer == fixed
};

struct TrainResult {
    ModelParams params;
    std::optional<NoiseMatrix> q;       // final noise matrix, if a layer was used
    std::vector<double> epoch_losses;   // mean training loss of each epoch
};

// Called once before training and after every epoch with the number of
// completed epochs and the current state.
using EpochObserver =
    std::function<void(std::size_t completed_epochs, const ModelParams&, const std::optional<NoiseMatrix>&)>;

// Trains a base model of `output_dim` classes on (features, noisy_labels).
// Only the noisy labels are visible here. `init_rng` seeds the weights,
// `shuffle_rng` the per-epoch minibatch order. Throws TrainingDiverged.
TrainResult train_model(const Matrix& features, std::span<const std::size_t> noisy_labels,
                        std::size_t output_dim, const TrainSetup& setup, Rng& init_rng,
                        Rng& shuffle_rng, const EpochObserver& observer = {});

}  // namespace noiseadapt
