#include "noiseadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "noiseadapt/errors.hpp"

namespace noiseadapt {

std::string_view to_string(ConfusionSource source) {
    return source == ConfusionSource::base ? "base" : "combined";
}

ConfusionMatrix confusion_matrix(const Matrix& probs, std::span<const std::size_t> true_labels,
                                 ConfusionSource source) {
    if (true_labels.size() != probs.rows()) {
        throw std::invalid_argument("confusion_matrix: label count does not match rows");
    }
    const std::size_t k = probs.cols();
    Matrix sums(k, k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const std::size_t j = true_labels[r];
        if (j >= k) {
            throw std::invalid_argument("confusion_matrix: label out of range");
        }
        ++counts[j];
        const auto p = probs.row(r);
        for (std::size_t i = 0; i < k; ++i) {
            sums(i, j) += p[i];
        }
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (counts[j] == 0) {
            throw MissingClassError(j);
        }
        for (std::size_t i = 0; i < k; ++i) {
            sums(i, j) /= static_cast<double>(counts[j]);
        }
    }
    return {std::move(sums), source};
}

ConfusionMatrix combined_confusion(const NoiseMatrix& q, const ConfusionMatrix& c) {
    if (q.dim() != c.c.rows()) {
        throw std::invalid_argument("combined_confusion: dimension mismatch");
    }
    return {matmul(q.matrix(), c.c), ConfusionSource::combined};
}

double test_error(const ModelParams& params, const Matrix& features,
                  std::span<const std::size_t> true_labels) {
    if (features.rows() != true_labels.size()) {
        throw std::invalid_argument("test_error: label count does not match rows");
    }
    if (true_labels.empty()) {
        return 0.0;
    }
    // Chunked so large test sets do not materialize every hidden activation at once.
    constexpr std::size_t kChunk = 4096;
    std::size_t wrong = 0;
    for (std::size_t start = 0; start < features.rows(); start += kChunk) {
        const std::size_t len = std::min(kChunk, features.rows() - start);
        Matrix chunk(len, features.cols());
        std::copy_n(features.row(start).data(), len * features.cols(), chunk.values().data());
        const Matrix probs = forward(params, chunk);
        for (std::size_t r = 0; r < len; ++r) {
            wrong += argmax(probs.row(r)) != true_labels[start + r] ? 1 : 0;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(true_labels.size());
}

double q_recovery_error(const Matrix& q, const Matrix& q_star) {
    return max_abs_diff(q, q_star);
}

double entropy_score(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(std::max(v, kLogClamp));
        }
    }
    return h;
}

PRCurve inlier_pr_curve(std::span<const double> scores, std::span<const std::uint8_t> is_inlier) {
    if (scores.size() != is_inlier.size()) {
        throw std::invalid_argument("inlier_pr_curve: scores and flags differ in length");
    }
    const std::size_t positives =
        static_cast<std::size_t>(std::count_if(is_inlier.begin(), is_inlier.end(),
                                               [](std::uint8_t f) { return f != 0; }));
    if (positives == 0 || positives == scores.size()) {
        throw std::invalid_argument("inlier_pr_curve: need at least one inlier and one outlier");
    }
    for (double s : scores) {
        if (std::isnan(s)) {
            throw std::invalid_argument("inlier_pr_curve: NaN score");
        }
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    PRCurve curve;
    std::size_t tp = 0;
    std::size_t fp = 0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (is_inlier[order[i]] ? tp : fp) += 1;
            ++i;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        curve.average_precision += (recall - prev_recall) * precision;
        prev_recall = recall;
        curve.points.push_back({threshold, recall, precision});
    }
    return curve;
}

}  // namespace noiseadapt
