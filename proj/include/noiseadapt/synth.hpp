#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "noiseadapt/matrix.hpp"
#include "noiseadapt/rng.hpp"

namespace noiseadapt {

// Labelled samples. Labels are 0-based; in outlier mode index `classes` is the
// extra outlier class. true_labels and inlier flags exist for evaluation only
// and are never handed to the training loop.
struct Dataset {
    Matrix features;                        // n x d
    std::vector<std::size_t> noisy_labels;  // what the learner sees
    std::vector<std::size_t> true_labels;   // hidden
    std::vector<std::uint8_t> inlier;       // hidden, 1 = inlier
    std::size_t classes = 0;                // inlier class count K
    bool has_outlier_class = false;         // labels may take value K

    std::size_t size() const { return noisy_labels.size(); }
    std::size_t dim() const { return features.cols(); }
    std::size_t label_count() const { return classes + (has_outlier_class ? 1 : 0); }

    // Throws std::invalid_argument when sizes or label ranges are inconsistent.
    void validate() const;

    // Rows whose index is in `rows`, in that order.
    Dataset subset(const std::vector<std::size_t>& rows) const;
};

// K spherical unit-variance Gaussians. When K <= d the means sit on scaled
// coordinate axes, so every pair is exactly `separation` apart; otherwise they
// are random directions of the same radius.
class GaussianMixture {
public:
    GaussianMixture(std::size_t classes, std::size_t dim, double separation, Rng& rng);

    std::size_t classes() const { return means_.rows(); }
    std::size_t dim() const { return means_.cols(); }
    double separation() const { return separation_; }
    const Matrix& means() const { return means_; }

    // n clean samples, labels balanced within one and randomly ordered.
    Dataset sample(std::size_t n, Rng& rng) const;

    // Centre of the outlier cloud: at least `distance` from every class mean.
    std::vector<double> outlier_center(double distance) const;

private:
    Matrix means_;
    double separation_;
};

// Clean Gaussian-mixture dataset (noisy labels equal true labels).
Dataset gen_gaussian_mixture(std::size_t classes, std::size_t dim, std::size_t n,
                             double separation, Rng& rng);

struct TrueNoiseSpec {
    Matrix q_star;
    double noise_level = 0.0;   // 1 - diagonal mass
    std::size_t fan_out = 0;
    std::optional<double> alpha_true;
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::size_t n_known = 0;
    // Columns of an adversarial construction that had no off-diagonal confusion mass.
    std::vector<std::size_t> uniform_fallback_columns;
};

// Each column keeps 1 - noise_level on the diagonal and splits noise_level
// equally over fan_out distinct random off-diagonal rows.
TrueNoiseSpec build_random_flip_matrix(std::size_t classes, double noise_level, std::size_t fan_out,
                                       Rng& rng);

// Each column keeps 1 - noise_level on the diagonal and spreads noise_level over
// the off-diagonal rows in proportion to a clean model's confusion column.
TrueNoiseSpec build_adversarial_flip_matrix(const Matrix& clean_confusion, double noise_level);

// Redraws every noisy label from column (true label) of Q*. Features and true
// labels are untouched.
Dataset apply_label_flips(const Dataset& clean, const TrueNoiseSpec& spec, Rng& rng);

struct OutlierInjection {
    Dataset data;
    std::optional<double> alpha_true;  // empty when no outliers were injected
};

// Appends n_out outliers with uniformly random inlier labels plus n_known
// outliers labelled with the extra class K. Outliers are drawn from a
// Gaussian of std `spread` centred `distance` away from every class mean.
OutlierInjection inject_outliers(const Dataset& inliers, const GaussianMixture& mixture,
                                 std::size_t n_out, std::size_t n_known, double distance,
                                 double spread, Rng& rng);

// Empirical p(noisy = j | true = i) with columns indexed by true label. Classes
// without samples get a zero column.
Matrix empirical_flip_matrix(const Dataset& data);

// CSV with header x_0,...,x_{d-1},noisy_label,true_label,is_inlier.
void write_dataset_csv(std::ostream& os, const Dataset& data);
void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(std::istream& is, std::size_t classes, bool has_outlier_class);
Dataset read_dataset_csv(const std::string& path, std::size_t classes, bool has_outlier_class);

}  // namespace noiseadapt
