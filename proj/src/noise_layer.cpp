#include "noiseadapt/noise_layer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "noiseadapt/errors.hpp"
#include "noiseadapt/mlp.hpp"
#include "noiseadapt/simplex.hpp"

namespace noiseadapt {

std::string_view to_string(NoiseMode mode) {
    return mode == NoiseMode::learned ? "learned" : "fixed";
}

NoiseMode parse_noise_mode(std::string_view s) {
    if (s == "learned") {
        return NoiseMode::learned;
    }
    if (s == "fixed") {
        return NoiseMode::fixed;
    }
    throw std::invalid_argument("unknown noise matrix mode '" + std::string(s) + "'");
}

std::string_view to_string(RegularizerKind kind) {
    return kind == RegularizerKind::ridge ? "ridge" : "trace";
}

RegularizerKind parse_regularizer(std::string_view s) {
    if (s == "ridge") {
        return RegularizerKind::ridge;
    }
    if (s == "trace") {
        return RegularizerKind::trace;
    }
    throw std::invalid_argument("unknown regularizer '" + std::string(s) + "'");
}

NoiseMatrix::NoiseMatrix(Matrix q, NoiseMode mode) : q_(std::move(q)), mode_(mode) {
    if (!q_.is_square() || q_.empty()) {
        throw std::invalid_argument("NoiseMatrix: matrix must be square and non-empty");
    }
    if (!is_column_stochastic(q_, 1e-9)) {
        throw std::invalid_argument("NoiseMatrix: columns must lie on the probability simplex");
    }
}

NoiseMatrix NoiseMatrix::identity(std::size_t k, NoiseMode mode) {
    return NoiseMatrix(Matrix::identity(k), mode);
}

void QSchedule::validate(std::size_t total_epochs) const {
    if (freeze_epochs > total_epochs) {
        throw std::invalid_argument("freeze epochs exceed total epochs");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw std::invalid_argument("Q weight decay must be non-negative");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("Q learning rate must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("Q momentum must be in [0, 1)");
    }
}

namespace {

void check_batch(const NoiseMatrix& q, const Matrix& base_probs,
                 std::span<const std::size_t> labels) {
    if (base_probs.cols() != q.dim()) {
        throw std::invalid_argument("noise layer: base model has " +
                                    std::to_string(base_probs.cols()) + " outputs, Q is " +
                                    std::to_string(q.dim()) + "x" + std::to_string(q.dim()));
    }
    if (labels.size() != base_probs.rows()) {
        throw std::invalid_argument("noise layer: label count does not match batch size");
    }
    for (std::size_t y : labels) {
        if (y >= q.dim()) {
            throw std::invalid_argument("noise layer: label out of range");
        }
    }
}

// s = sum_i q_{y,i} p_i for one row.
double label_mass(const Matrix& q, std::size_t y, std::span<const double> p) {
    double s = 0.0;
    const auto qrow = q.row(y);
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += qrow[i] * p[i];
    }
    return s;
}

}  // namespace

Matrix noise_forward(const NoiseMatrix& q, const Matrix& base_probs) {
    if (base_probs.cols() != q.dim()) {
        throw std::invalid_argument("noise_forward: dimension mismatch");
    }
    return matmul_nt(base_probs, q.matrix());
}

double combined_loss(const NoiseMatrix& q, const Matrix& base_probs,
                     std::span<const std::size_t> noisy_labels) {
    check_batch(q, base_probs, noisy_labels);
    if (noisy_labels.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t r = 0; r < base_probs.rows(); ++r) {
        const double s = label_mass(q.matrix(), noisy_labels[r], base_probs.row(r));
        total += -std::log(std::max(s, kLogClamp));
    }
    return total / static_cast<double>(base_probs.rows());
}

double expected_noisy_cross_entropy(const Matrix& q_star, const Matrix& outputs) {
    if (q_star.rows() != q_star.cols() || outputs.rows() != q_star.rows() ||
        outputs.cols() != q_star.cols()) {
        throw std::invalid_argument("expected_noisy_cross_entropy: shape mismatch");
    }
    const std::size_t k = q_star.cols();
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
            if (q_star(j, c) > 0.0) {
                total -= q_star(j, c) * std::log(std::max(outputs(j, c), kLogClamp));
            }
        }
    }
    return total / static_cast<double>(k);
}

double mean_column_entropy(const Matrix& q) {
    double total = 0.0;
    for (std::size_t c = 0; c < q.cols(); ++c) {
        for (std::size_t j = 0; j < q.rows(); ++j) {
            if (q(j, c) > 0.0) {
                total -= q(j, c) * std::log(q(j, c));
            }
        }
    }
    return total / static_cast<double>(q.cols());
}

NoiseGradients noise_backward(const NoiseMatrix& q, const Matrix& base_probs,
                              std::span<const std::size_t> noisy_labels) {
    check_batch(q, base_probs, noisy_labels);
    const std::size_t k = q.dim();
    NoiseGradients g{Matrix(k, k), Matrix(base_probs.rows(), k)};
    if (noisy_labels.empty()) {
        return g;
    }
    const double n = static_cast<double>(base_probs.rows());
    for (std::size_t r = 0; r < base_probs.rows(); ++r) {
        const std::size_t y = noisy_labels[r];
        const auto p = base_probs.row(r);
        const double s = std::max(label_mass(q.matrix(), y, p), kLogClamp);
        auto qgrad_row = g.q_grad.row(y);
        auto pgrad_row = g.prob_grad.row(r);
        for (std::size_t i = 0; i < k; ++i) {
            qgrad_row[i] -= p[i] / s / n;
            pgrad_row[i] = -q.matrix()(y, i) / s / n;
        }
    }
    return g;
}

Matrix combined_logit_grad(const NoiseMatrix& q, const Matrix& base_probs,
                           std::span<const std::size_t> noisy_labels) {
    check_batch(q, base_probs, noisy_labels);
    const std::size_t k = q.dim();
    const double n = static_cast<double>(base_probs.rows());
    Matrix dz(base_probs.rows(), k);
    for (std::size_t r = 0; r < base_probs.rows(); ++r) {
        const std::size_t y = noisy_labels[r];
        const auto p = base_probs.row(r);
        const auto qrow = q.matrix().row(y);
        double s = label_mass(q.matrix(), y, p);
        if (!(s > 0.0)) {
            s = std::numeric_limits<double>::min();
        }
        auto out = dz.row(r);
        for (std::size_t i = 0; i < k; ++i) {
            out[i] = (p[i] - p[i] * qrow[i] / s) / n;
        }
    }
    return dz;
}

Matrix q_regularizer_grad(const Matrix& q, RegularizerKind kind, double lambda) {
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("q_regularizer_grad: lambda must be non-negative");
    }
    if (kind == RegularizerKind::ridge) {
        return q * lambda;
    }
    return Matrix::identity(q.rows()) * lambda;
}

NoiseMatrix q_update_and_project(const NoiseMatrix& q, const Matrix& grad, double q_lr) {
    if (!grad.all_finite()) {
        throw TrainingDiverged("non-finite gradient on Q");
    }
    Matrix stepped = q.matrix() - grad * q_lr;
    return NoiseMatrix(project_columns_stochastic(stepped), q.mode());
}

NoiseMatrix q_update_and_project(const NoiseMatrix& q, const Matrix& grad, double q_lr,
                                 double momentum, Matrix& velocity) {
    if (!grad.all_finite()) {
        throw TrainingDiverged("non-finite gradient on Q");
    }
    if (velocity.rows() != q.dim() || velocity.cols() != q.dim()) {
        velocity = Matrix(q.dim(), q.dim());
    }
    velocity *= momentum;
    velocity -= grad * q_lr;
    return NoiseMatrix(project_columns_stochastic(q.matrix() + velocity), q.mode());
}

bool q_active(std::size_t epoch, const QSchedule& schedule) {
    return epoch >= schedule.freeze_epochs;
}

NoiseMatrix build_outlier_q(const OutlierSpec& spec) {
    if (spec.classes == 0) {
        throw std::invalid_argument("build_outlier_q: need at least one inlier class");
    }
    if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) {
        throw std::invalid_argument("build_outlier_q: alpha must be in [0, 1]");
    }
    const std::size_t k = spec.classes;
    Matrix q(k + 1, k + 1);
    for (std::size_t i = 0; i < k; ++i) {
        q(i, i) = 1.0;
        q(i, k) = (1.0 - spec.alpha) / static_cast<double>(k);
    }
    q(k, k) = spec.alpha;
    NoiseMatrix out(std::move(q), NoiseMode::fixed);
    if (spec.alpha == 0.0) {
        out.mark_singular();
    }
    return out;
}

void write_q_csv(std::ostream& os, const NoiseMatrix& q) {
    os << "# Q K=" << q.dim() << " mode=" << to_string(q.mode()) << '\n';
    char buf[32];
    for (std::size_t r = 0; r < q.dim(); ++r) {
        for (std::size_t c = 0; c < q.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", q.matrix()(r, c));
            os << (c ? "," : "") << buf;
        }
        os << '\n';
    }
}

void write_q_csv(const std::string& path, const NoiseMatrix& q) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_q_csv(os, q);
}

NoiseMatrix read_q_csv(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) {
        throw std::invalid_argument("Q csv: missing header");
    }
    std::size_t dim = 0;
    char mode_buf[16] = {0};
    if (std::sscanf(header.c_str(), "# Q K=%zu mode=%15s", &dim, mode_buf) != 2 || dim == 0) {
        throw std::invalid_argument("Q csv: malformed header '" + header + "'");
    }
    const NoiseMode mode = parse_noise_mode(mode_buf);
    std::vector<double> values;
    values.reserve(dim * dim);
    std::string line;
    std::size_t rows = 0;
    while (rows < dim && std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            values.push_back(std::stod(cell, &used));
            ++cols;
        }
        if (cols != dim) {
            throw std::invalid_argument("Q csv: row " + std::to_string(rows) + " has " +
                                        std::to_string(cols) + " entries, expected " +
                                        std::to_string(dim));
        }
        ++rows;
    }
    if (rows != dim) {
        throw std::invalid_argument("Q csv: expected " + std::to_string(dim) + " rows");
    }
    return NoiseMatrix(Matrix::from_values(dim, dim, std::move(values)), mode);
}

NoiseMatrix read_q_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open " + path);
    }
    return read_q_csv(is);
}

}  // namespace noiseadapt
