#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "noiseadapt/matrix.hpp"
#include "noiseadapt/mlp.hpp"
#include "noiseadapt/noise_layer.hpp"

namespace noiseadapt {

enum class ConfusionSource { base, combined };

std::string_view to_string(ConfusionSource source);

// Column j is the mean prediction vector over samples whose true class is j.
struct ConfusionMatrix {
    Matrix c;
    ConfusionSource source = ConfusionSource::base;
};

// Throws MissingClassError if some class in [0, probs.cols()) never occurs in true_labels.
ConfusionMatrix confusion_matrix(const Matrix& probs, std::span<const std::size_t> true_labels,
                                 ConfusionSource source = ConfusionSource::base);

// Q * C, tagged as the combined model's confusion.
ConfusionMatrix combined_confusion(const NoiseMatrix& q, const ConfusionMatrix& c);

// Fraction of rows whose base-model argmax differs from the true label. Takes
// no noise matrix: evaluation always runs on the bare base model.
double test_error(const ModelParams& params, const Matrix& features,
                  std::span<const std::size_t> true_labels);

// max_ij |a_ij - b_ij|
double q_recovery_error(const Matrix& q, const Matrix& q_star);

// -sum p_i log max(p_i, eps), natural log.
double entropy_score(std::span<const double> p);

struct PRPoint {
    double threshold;
    double recall;
    double precision;
};

struct PRCurve {
    std::vector<PRPoint> points;  // recall non-decreasing
    double average_precision = 0.0;
};

// Inlier-detection precision/recall: a sample is predicted inlier when its
// score is >= the threshold. Thresholds sweep the distinct scores in
// descending order, ties forming one step. AP is the step-wise sum of
// precision times recall increment. Throws std::invalid_argument when the
// flags are all the same or the lengths differ.
PRCurve inlier_pr_curve(std::span<const double> scores, std::span<const std::uint8_t> is_inlier);

}  // namespace noiseadapt
