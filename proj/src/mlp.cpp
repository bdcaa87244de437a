#include "noiseadapt/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "noiseadapt/errors.hpp"

namespace noiseadapt {

std::size_t ModelParams::input_dim() const {
    return layers.empty() ? 0 : layers.front().weights.rows();
}

std::size_t ModelParams::output_dim() const {
    return layers.empty() ? 0 : layers.back().weights.cols();
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += l.weights.size() + l.bias.size();
    }
    return n;
}

bool ModelParams::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weights.all_finite()) {
            return false;
        }
        for (double b : l.bias) {
            if (!std::isfinite(b)) {
                return false;
            }
        }
    }
    return true;
}

void TrainHyper::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning rate must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("momentum must be in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw std::invalid_argument("weight decay must be non-negative");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("batch size must be positive");
    }
}

ModelParams init_params(std::size_t input_dim, std::span<const std::size_t> hidden,
                        std::size_t output_dim, Rng& rng) {
    if (input_dim == 0 || output_dim == 0) {
        throw std::invalid_argument("init_params: zero-sized input or output");
    }
    ModelParams p;
    std::size_t fan_in = input_dim;
    auto add_layer = [&](std::size_t fan_out) {
        if (fan_out == 0) {
            throw std::invalid_argument("init_params: zero-width hidden layer");
        }
        DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : layer.weights.values()) {
            w = rng.uniform(-a, a);
        }
        p.layers.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (std::size_t h : hidden) {
        add_layer(h);
    }
    add_layer(output_dim);
    return p;
}

ModelParams zeros_like(const ModelParams& like) {
    ModelParams z;
    z.layers.reserve(like.layers.size());
    for (const auto& l : like.layers) {
        z.layers.push_back({Matrix(l.weights.rows(), l.weights.cols()),
                            std::vector<double>(l.bias.size(), 0.0)});
    }
    return z;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto in = logits.row(r);
        auto dst = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            dst[c] = std::exp(in[c] - mx);
            total += dst[c];
        }
        for (double& v : dst) {
            v /= total;
        }
    }
    return out;
}

ForwardCache forward_cached(const ModelParams& params, const Matrix& batch) {
    if (params.layers.empty()) {
        throw std::invalid_argument("forward: model has no layers");
    }
    if (batch.cols() != params.input_dim()) {
        throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                    " features, model expects " +
                                    std::to_string(params.input_dim()));
    }
    ForwardCache cache;
    cache.activations.reserve(params.layers.size());
    cache.activations.push_back(batch);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        Matrix z = matmul(cache.activations.back(), layer.weights);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto row = z.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) {
                row[c] += layer.bias[c];
            }
        }
        if (l + 1 < params.layers.size()) {
            for (double& v : z.values()) {
                v = v > 0.0 ? v : 0.0;
            }
            cache.activations.push_back(std::move(z));
        } else {
            cache.probs = softmax_rows(z);
        }
    }
    return cache;
}

Matrix forward(const ModelParams& params, const Matrix& batch) {
    return forward_cached(params, batch).probs;
}

double nll_loss(const Matrix& probs, std::span<const std::size_t> labels) {
    if (labels.size() != probs.rows()) {
        throw std::invalid_argument("nll_loss: label count does not match batch size");
    }
    if (labels.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        if (labels[r] >= probs.cols()) {
            throw std::invalid_argument("nll_loss: label out of range");
        }
        total += -std::log(std::max(probs(r, labels[r]), kLogClamp));
    }
    return total / static_cast<double>(probs.rows());
}

Matrix softmax_backward(const Matrix& probs, const Matrix& prob_grad) {
    if (probs.rows() != prob_grad.rows() || probs.cols() != prob_grad.cols()) {
        throw std::invalid_argument("softmax_backward: shape mismatch");
    }
    Matrix dz(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto p = probs.row(r);
        const auto g = prob_grad.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) {
            dot += g[c] * p[c];
        }
        auto out = dz.row(r);
        for (std::size_t c = 0; c < p.size(); ++c) {
            out[c] = p[c] * (g[c] - dot);
        }
    }
    return dz;
}

ModelParams backward_from_logits(const ModelParams& params, const ForwardCache& cache,
                                 const Matrix& logit_grad) {
    const std::size_t n_layers = params.layers.size();
    if (cache.activations.size() != n_layers || logit_grad.rows() != cache.probs.rows() ||
        logit_grad.cols() != params.output_dim()) {
        throw std::invalid_argument("backward: cache or gradient shape does not match model");
    }
    ModelParams grads;
    grads.layers.resize(n_layers);
    Matrix delta = logit_grad;
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& layer = params.layers[l];
        const Matrix& input = cache.activations[l];
        auto& g = grads.layers[l];
        g.weights = matmul_tn(input, delta);
        g.bias.assign(delta.cols(), 0.0);
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            const auto row = delta.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) {
                g.bias[c] += row[c];
            }
        }
        if (l > 0) {
            Matrix upstream = matmul_nt(delta, layer.weights);
            // ReLU mask: the cached activation is zero exactly where the unit was inactive.
            for (std::size_t i = 0; i < upstream.size(); ++i) {
                if (!(input.values()[i] > 0.0)) {
                    upstream.values()[i] = 0.0;
                }
            }
            delta = std::move(upstream);
        }
    }
    return grads;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Matrix& prob_grad) {
    return backward_from_logits(params, cache, softmax_backward(cache.probs, prob_grad));
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const std::size_t> labels) {
    const Matrix& p = cache.probs;
    if (labels.size() != p.rows()) {
        throw std::invalid_argument("backward: label count does not match batch size");
    }
    const double n = static_cast<double>(p.rows());
    Matrix dz(p.rows(), p.cols());
    for (std::size_t r = 0; r < p.rows(); ++r) {
        if (labels[r] >= p.cols()) {
            throw std::invalid_argument("backward: label out of range");
        }
        for (std::size_t c = 0; c < p.cols(); ++c) {
            const double target = c == labels[r] ? 1.0 : 0.0;
            dz(r, c) = (p(r, c) - target) / n;
        }
    }
    return backward_from_logits(params, cache, dz);
}

void sgd_step(ModelParams& params, const ModelParams& grads, const TrainHyper& hyper,
              ModelParams& velocity) {
    if (grads.layers.size() != params.layers.size() ||
        velocity.layers.size() != params.layers.size()) {
        throw std::invalid_argument("sgd_step: layer count mismatch");
    }
    auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> v) {
        if (p.size() != g.size() || p.size() != v.size()) {
            throw std::invalid_argument("sgd_step: shape mismatch");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw TrainingDiverged("non-finite gradient");
            }
            v[i] = hyper.momentum * v[i] - hyper.learning_rate * (g[i] + hyper.weight_decay * p[i]);
            p[i] += v[i];
            if (!std::isfinite(p[i])) {
                throw TrainingDiverged("non-finite parameter after update");
            }
        }
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& p = params.layers[l];
        const auto& g = grads.layers[l];
        auto& v = velocity.layers[l];
        update(p.weights.values(), g.weights.values(), v.weights.values());
        update(p.bias, g.bias, v.bias);
    }
}

std::size_t argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i) {
        if (row[i] > row[best]) {
            best = i;
        }
    }
    return best;
}

}  // namespace noiseadapt
