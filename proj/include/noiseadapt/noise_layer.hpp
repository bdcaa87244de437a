#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "noiseadapt/matrix.hpp"

namespace noiseadapt {

enum class NoiseMode { learned, fixed };

std::string_view to_string(NoiseMode mode);
NoiseMode parse_noise_mode(std::string_view s);

// Column-stochastic noise matrix. Entry (j, i) is p(noisy label = j | true label = i),
// so each column, indexed by the true label, sums to one.
class NoiseMatrix {
public:
    // Throws std::invalid_argument unless q is square and column-stochastic within 1e-9.
    explicit NoiseMatrix(Matrix q, NoiseMode mode = NoiseMode::learned);

    static NoiseMatrix identity(std::size_t k, NoiseMode mode = NoiseMode::learned);

    const Matrix& matrix() const { return q_; }
    std::size_t dim() const { return q_.rows(); }
    NoiseMode mode() const { return mode_; }

    // Set when the matrix was built for a configuration known to be non-invertible.
    bool singular() const { return singular_; }
    void mark_singular() { singular_ = true; }

private:
    Matrix q_;
    NoiseMode mode_;
    bool singular_ = false;
};

enum class RegularizerKind { ridge, trace };

std::string_view to_string(RegularizerKind kind);
RegularizerKind parse_regularizer(std::string_view s);

// When and how the noise matrix is learned.
struct QSchedule {
    std::size_t freeze_epochs = 10;
    double weight_decay = 0.1;
    RegularizerKind regularizer = RegularizerKind::ridge;
    double learning_rate = 0.05;
    double momentum = 0.0;

    void validate(std::size_t total_epochs) const;
};

struct OutlierSpec {
    double alpha = 0.0;
    std::size_t classes = 0;  // inlier class count K
};

// Rows of base_probs pushed through the noise layer: out(r, j) = sum_i q_ji * p(r, i).
Matrix noise_forward(const NoiseMatrix& q, const Matrix& base_probs);

// Mean over rows of -log max(sum_i q_{label,i} p_i, eps).
double combined_loss(const NoiseMatrix& q, const Matrix& base_probs,
                     std::span<const std::size_t> noisy_labels);

// Exact expected combined loss when true classes are equally likely and noisy
// labels follow q_star. Column c of `outputs` is the combined prediction for a
// sample of true class c:  (1/K) sum_c sum_j -q*_jc log out_jc.
double expected_noisy_cross_entropy(const Matrix& q_star, const Matrix& outputs);

// (1/K) sum_c H(column c), natural log.
double mean_column_entropy(const Matrix& q);

struct NoiseGradients {
    Matrix q_grad;     // dL/dQ, same shape as Q
    Matrix prob_grad;  // dL/d(base_probs), one row per sample
};

// Batch-averaged gradients of combined_loss with respect to Q and the base probabilities.
NoiseGradients noise_backward(const NoiseMatrix& q, const Matrix& base_probs,
                              std::span<const std::size_t> noisy_labels);

// Gradient of combined_loss with respect to the base model's logits, folding the
// softmax Jacobian into the noise-layer chain rule:
//   dL/dz_i = (p_i - p_i q_{y,i} / s) / B,  s = sum_k q_{y,k} p_k.
// With Q = I this reduces to (p - onehot(y)) / B bit for bit.
Matrix combined_logit_grad(const NoiseMatrix& q, const Matrix& base_probs,
                           std::span<const std::size_t> noisy_labels);

// ridge: lambda * Q (gradient of lambda/2 ||Q||_F^2); trace: lambda * I (gradient of lambda tr Q).
Matrix q_regularizer_grad(const Matrix& q, RegularizerKind kind, double lambda);

// Gradient step on Q followed by column-wise projection onto the simplex.
// Throws TrainingDiverged on a non-finite gradient.
NoiseMatrix q_update_and_project(const NoiseMatrix& q, const Matrix& grad, double q_lr);

// Momentum variant: v <- momentum * v - lr * grad; Q <- proj(Q + v).
NoiseMatrix q_update_and_project(const NoiseMatrix& q, const Matrix& grad, double q_lr,
                                 double momentum, Matrix& velocity);

// False while Q is pinned to the identity (epoch < freeze_epochs).
bool q_active(std::size_t epoch, const QSchedule& schedule);

// Fixed (K+1)x(K+1) outlier noise matrix: identity on the inlier block, last
// column [(1-a)/K, ..., (1-a)/K, a]. alpha = 0 is returned but flagged singular.
NoiseMatrix build_outlier_q(const OutlierSpec& spec);

// CSV checkpoint: header `# Q K=<dim> mode=<learned|fixed>` then one comma-separated row per line.
void write_q_csv(std::ostream& os, const NoiseMatrix& q);
void write_q_csv(const std::string& path, const NoiseMatrix& q);
NoiseMatrix read_q_csv(std::istream& is);
NoiseMatrix read_q_csv(const std::string& path);

}  // namespace noiseadapt
