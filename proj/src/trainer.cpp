#include "noiseadapt/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace noiseadapt {

namespace {

void gather_rows(const Matrix& src, std::span<const std::size_t> rows, Matrix& dst) {
    const std::size_t d = src.cols();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(src.row(rows[i]).data(), d, dst.row(i).data());
    }
}

}  // namespace

TrainResult train_model(const Matrix& features, std::span<const std::size_t> noisy_labels,
                        std::size_t output_dim, const TrainSetup& setup, Rng& init_rng,
                        Rng& shuffle_rng, const EpochObserver& observer) {
    setup.hyper.validate();
    if (features.rows() != noisy_labels.size() || features.rows() == 0) {
        throw std::invalid_argument("train_model: need one label per (non-empty) feature row");
    }
    for (std::size_t y : noisy_labels) {
        if (y >= output_dim) {
            throw std::invalid_argument("train_model: label out of range");
        }
    }

    TrainResult result;
    result.params = init_params(features.cols(), setup.hidden, output_dim, init_rng);
    ModelParams velocity = zeros_like(result.params);

    bool learn_q = false;
    switch (setup.layer) {
        case NoiseLayerUse::none:
            break;
        case NoiseLayerUse::learned:
            setup.schedule.validate(setup.hyper.epochs);
            result.q = NoiseMatrix::identity(output_dim, NoiseMode::learned);
            learn_q = true;
            break;
        case NoiseLayerUse::fixed:
            if (!setup.fixed_q || setup.fixed_q->dim() != output_dim) {
                throw std::invalid_argument("train_model: fixed noise matrix missing or wrong size");
            }
            result.q = NoiseMatrix(setup.fixed_q->matrix(), NoiseMode::fixed);
            break;
    }
    Matrix q_velocity;

    const std::size_t n = features.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> labels;
    Matrix batch;
    if (observer) {
        observer(0, result.params, result.q);
    }

    for (std::size_t epoch = 0; epoch < setup.hyper.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        const bool update_q = learn_q && q_active(epoch, setup.schedule);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += setup.hyper.batch_size) {
            const std::size_t len = std::min(setup.hyper.batch_size, n - start);
            const auto rows = std::span<const std::size_t>(order).subspan(start, len);
            if (batch.rows() != len) {
                batch = Matrix(len, features.cols());
            }
            gather_rows(features, rows, batch);
            labels.resize(len);
            for (std::size_t i = 0; i < len; ++i) {
                labels[i] = noisy_labels[rows[i]];
            }

            const ForwardCache cache = forward_cached(result.params, batch);
            ModelParams grads;
            if (!result.q) {
                loss_sum += nll_loss(cache.probs, labels) * static_cast<double>(len);
                grads = backward(result.params, cache, labels);
                sgd_step(result.params, grads, setup.hyper, velocity);
                continue;
            }

            const NoiseMatrix& q = *result.q;
            loss_sum += combined_loss(q, cache.probs, labels) * static_cast<double>(len);
            grads = backward_from_logits(result.params, cache,
                                         combined_logit_grad(q, cache.probs, labels));
            Matrix q_grad;
            if (update_q) {
                q_grad = noise_backward(q, cache.probs, labels).q_grad;
                q_grad += q_regularizer_grad(q.matrix(), setup.schedule.regularizer,
                                             setup.schedule.weight_decay);
            }
            sgd_step(result.params, grads, setup.hyper, velocity);
            if (update_q) {
                result.q = setup.schedule.momentum > 0.0
                               ? q_update_and_project(q, q_grad, setup.schedule.learning_rate,
                                                      setup.schedule.momentum, q_velocity)
                               : q_update_and_project(q, q_grad, setup.schedule.learning_rate);
            }
        }
        result.epoch_losses.push_back(loss_sum / static_cast<double>(n));
        if (observer) {
            observer(epoch + 1, result.params, result.q);
        }
    }
    return result;
}

}  // namespace noiseadapt
