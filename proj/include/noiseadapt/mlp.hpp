#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "noiseadapt/matrix.hpp"
#include "noiseadapt/rng.hpp"

namespace noiseadapt {

// Clamp applied inside every -log term.
inline constexpr double kLogClamp = 1e-12;

struct DenseLayer {
    Matrix weights;              // fan_in x fan_out
    std::vector<double> bias;    // fan_out

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Softmax MLP: ReLU hidden layers followed by a linear layer and softmax.
// With no hidden layers it is multinomial logistic regression.
struct ModelParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;
    bool all_finite() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TrainHyper {
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t batch_size = 128;
    std::size_t epochs = 100;

    // Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

// Glorot-uniform weights in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero biases.
ModelParams init_params(std::size_t input_dim, std::span<const std::size_t> hidden,
                        std::size_t output_dim, Rng& rng);

// Same shapes as `like`, all zeros.
ModelParams zeros_like(const ModelParams& like);

// Intermediate values kept for the backward pass. activations[0] is the input
// batch; activations[l] is the (post-ReLU) input to layer l.
struct ForwardCache {
    std::vector<Matrix> activations;
    Matrix probs;
};

ForwardCache forward_cached(const ModelParams& params, const Matrix& batch);

// Row-wise class probabilities for each row of `batch`.
Matrix forward(const ModelParams& params, const Matrix& batch);

// Numerically stable row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

// Mean of -log max(p[label], eps) over rows.
double nll_loss(const Matrix& probs, std::span<const std::size_t> labels);

// Maps a gradient on the softmax outputs to a gradient on the logits.
Matrix softmax_backward(const Matrix& probs, const Matrix& prob_grad);

// Parameter gradients given dL/dlogits for the cached batch.
ModelParams backward_from_logits(const ModelParams& params, const ForwardCache& cache,
                                 const Matrix& logit_grad);

// Parameter gradients given dL/dprobs (e.g. coming back through the noise layer).
ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Matrix& prob_grad);

// Parameter gradients of nll_loss against plain labels.
ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const std::size_t> labels);

// Momentum SGD with L2 weight decay:
//   v <- momentum * v - lr * (g + wd * p);  p <- p + v
// `velocity` must have the same shapes as `params` (see zeros_like).
// Throws TrainingDiverged if any gradient or updated parameter is non-finite.
void sgd_step(ModelParams& params, const ModelParams& grads, const TrainHyper& hyper,
              ModelParams& velocity);

// Index of the largest entry; ties go to the smaller index.
std::size_t argmax(std::span<const double> row);

}  // namespace noiseadapt
