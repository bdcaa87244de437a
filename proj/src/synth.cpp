#include "noiseadapt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace noiseadapt {

void Dataset::validate() const {
    const std::size_t n = noisy_labels.size();
    if (features.rows() != n || true_labels.size() != n || inlier.size() != n) {
        throw std::invalid_argument("Dataset: field lengths disagree");
    }
    const std::size_t labels = label_count();
    for (std::size_t i = 0; i < n; ++i) {
        if (noisy_labels[i] >= labels || true_labels[i] >= labels) {
            throw std::invalid_argument("Dataset: label out of range at row " + std::to_string(i));
        }
    }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.classes = classes;
    out.has_outlier_class = has_outlier_class;
    out.features = Matrix(rows.size(), dim());
    out.noisy_labels.reserve(rows.size());
    out.true_labels.reserve(rows.size());
    out.inlier.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows.at(i);
        std::copy(features.row(r).begin(), features.row(r).end(), out.features.row(i).begin());
        out.noisy_labels.push_back(noisy_labels[r]);
        out.true_labels.push_back(true_labels[r]);
        out.inlier.push_back(inlier[r]);
    }
    return out;
}

GaussianMixture::GaussianMixture(std::size_t classes, std::size_t dim, double separation, Rng& rng)
    : means_(classes, dim), separation_(separation) {
    if (classes < 2 || dim == 0) {
        throw std::invalid_argument("GaussianMixture: need K >= 2 and d >= 1");
    }
    if (!(separation >= 0.0) || !std::isfinite(separation)) {
        throw std::invalid_argument("GaussianMixture: separation must be non-negative");
    }
    const double radius = separation / std::sqrt(2.0);
    if (classes <= dim) {
        for (std::size_t k = 0; k < classes; ++k) {
            means_(k, k) = radius;
        }
        return;
    }
    for (std::size_t k = 0; k < classes; ++k) {
        auto row = means_.row(k);
        double norm2 = 0.0;
        while (norm2 == 0.0) {
            for (double& v : row) {
                v = rng.normal();
            }
            norm2 = std::inner_product(row.begin(), row.end(), row.begin(), 0.0);
        }
        const double scale = radius / std::sqrt(norm2);
        for (double& v : row) {
            v *= scale;
        }
    }
}

Dataset GaussianMixture::sample(std::size_t n, Rng& rng) const {
    const std::size_t k = classes();
    if (n < k) {
        throw std::invalid_argument("GaussianMixture::sample: need at least one sample per class");
    }
    Dataset out;
    out.classes = k;
    out.features = Matrix(n, dim());
    out.true_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.true_labels[i] = i % k;
    }
    rng.shuffle(std::span<std::size_t>(out.true_labels));
    for (std::size_t i = 0; i < n; ++i) {
        const auto mean = means_.row(out.true_labels[i]);
        auto x = out.features.row(i);
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] = mean[j] + rng.normal();
        }
    }
    out.noisy_labels = out.true_labels;
    out.inlier.assign(n, 1);
    return out;
}

std::vector<double> GaussianMixture::outlier_center(double distance) const {
    const std::size_t k = classes();
    const std::size_t d = dim();
    std::vector<double> centroid(d, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            centroid[j] += means_(c, j) / static_cast<double>(k);
        }
    }
    // Move away from the centroid, opposite to where the class means sit.
    std::vector<double> dir(d, 0.0);
    const double cnorm = std::sqrt(std::inner_product(centroid.begin(), centroid.end(),
                                                      centroid.begin(), 0.0));
    if (cnorm > 0.0) {
        for (std::size_t j = 0; j < d; ++j) {
            dir[j] = -centroid[j] / cnorm;
        }
    } else {
        dir[0] = 1.0;
    }
    // Smallest t >= 0 with |centroid + t * dir - mean_c| >= distance for every c.
    double t = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double b = 0.0;
        double a2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double a = means_(c, j) - centroid[j];
            b += dir[j] * a;
            a2 += a * a;
        }
        const double disc = b * b - a2 + distance * distance;
        if (disc > 0.0) {
            t = std::max(t, b + std::sqrt(disc));
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        centroid[j] += t * dir[j];
    }
    return centroid;
}

Dataset gen_gaussian_mixture(std::size_t classes, std::size_t dim, std::size_t n,
                             double separation, Rng& rng) {
    if (n < classes) {
        throw std::invalid_argument("gen_gaussian_mixture: n must be at least K");
    }
    const GaussianMixture mixture(classes, dim, separation, rng);
    return mixture.sample(n, rng);
}

TrueNoiseSpec build_random_flip_matrix(std::size_t classes, double noise_level, std::size_t fan_out,
                                       Rng& rng) {
    if (classes < 2) {
        throw std::invalid_argument("build_random_flip_matrix: need at least two classes");
    }
    if (!(noise_level >= 0.0 && noise_level < 1.0)) {
        throw std::invalid_argument("build_random_flip_matrix: noise level must be in [0, 1)");
    }
    if (fan_out < 1 || fan_out >= classes) {
        throw std::invalid_argument("build_random_flip_matrix: fan_out must be in [1, K-1]");
    }
    TrueNoiseSpec spec;
    spec.noise_level = noise_level;
    spec.fan_out = fan_out;
    spec.q_star = Matrix(classes, classes);
    std::vector<std::size_t> others(classes - 1);
    for (std::size_t i = 0; i < classes; ++i) {
        spec.q_star(i, i) = 1.0 - noise_level;
        std::size_t idx = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j != i) {
                others[idx++] = j;
            }
        }
        // Partial Fisher-Yates: the first fan_out entries become the targets.
        for (std::size_t f = 0; f < fan_out; ++f) {
            const std::size_t pick = f + rng.uniform_index(others.size() - f);
            std::swap(others[f], others[pick]);
            spec.q_star(others[f], i) = noise_level / static_cast<double>(fan_out);
        }
    }
    return spec;
}

TrueNoiseSpec build_adversarial_flip_matrix(const Matrix& clean_confusion, double noise_level) {
    const std::size_t k = clean_confusion.rows();
    if (!clean_confusion.is_square() || k < 2) {
        throw std::invalid_argument("build_adversarial_flip_matrix: confusion must be square, K >= 2");
    }
    if (!is_column_stochastic(clean_confusion, 1e-9)) {
        throw std::invalid_argument("build_adversarial_flip_matrix: confusion must be column-stochastic");
    }
    if (!(noise_level >= 0.0 && noise_level < 1.0)) {
        throw std::invalid_argument("build_adversarial_flip_matrix: noise level must be in [0, 1)");
    }
    TrueNoiseSpec spec;
    spec.noise_level = noise_level;
    spec.q_star = Matrix(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        spec.q_star(i, i) = 1.0 - noise_level;
        double off_mass = 0.0;
        std::size_t nonzero = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j != i) {
                const double c = std::max(clean_confusion(j, i), 0.0);
                off_mass += c;
                nonzero += c > 0.0 ? 1 : 0;
            }
        }
        if (off_mass > 0.0) {
            for (std::size_t j = 0; j < k; ++j) {
                if (j != i) {
                    spec.q_star(j, i) = noise_level * std::max(clean_confusion(j, i), 0.0) / off_mass;
                }
            }
        } else {
            spec.uniform_fallback_columns.push_back(i);
            nonzero = k - 1;
            for (std::size_t j = 0; j < k; ++j) {
                if (j != i) {
                    spec.q_star(j, i) = noise_level / static_cast<double>(k - 1);
                }
            }
        }
        spec.fan_out = std::max(spec.fan_out, nonzero);
    }
    return spec;
}

Dataset apply_label_flips(const Dataset& clean, const TrueNoiseSpec& spec, Rng& rng) {
    const std::size_t k = spec.q_star.rows();
    if (!spec.q_star.is_square() || k != clean.label_count()) {
        throw std::invalid_argument("apply_label_flips: Q* does not match the dataset's classes");
    }
    std::vector<std::vector<double>> columns(k);
    for (std::size_t i = 0; i < k; ++i) {
        columns[i] = spec.q_star.column(i);
    }
    Dataset out = clean;
    for (std::size_t r = 0; r < out.size(); ++r) {
        out.noisy_labels[r] = categorical_sample(columns[out.true_labels[r]], rng);
    }
    return out;
}

OutlierInjection inject_outliers(const Dataset& inliers, const GaussianMixture& mixture,
                                 std::size_t n_out, std::size_t n_known, double distance,
                                 double spread, Rng& rng) {
    const std::size_t k = inliers.classes;
    if (k != mixture.classes() || inliers.dim() != mixture.dim()) {
        throw std::invalid_argument("inject_outliers: mixture does not match the inlier dataset");
    }
    if (inliers.has_outlier_class) {
        throw std::invalid_argument("inject_outliers: dataset already has an outlier class");
    }
    OutlierInjection result;
    if (n_out + n_known == 0) {
        result.data = inliers;
        return result;
    }
    const std::size_t n_in = inliers.size();
    const std::size_t total = n_in + n_out + n_known;
    const auto center = mixture.outlier_center(distance);

    Dataset& out = result.data;
    out.classes = k;
    out.has_outlier_class = true;
    out.features = Matrix(total, inliers.dim());
    std::copy(inliers.features.values().begin(), inliers.features.values().end(),
              out.features.values().begin());
    out.noisy_labels = inliers.noisy_labels;
    out.true_labels = inliers.true_labels;
    out.inlier = inliers.inlier;
    out.noisy_labels.reserve(total);
    out.true_labels.reserve(total);
    out.inlier.reserve(total);
    for (std::size_t i = 0; i < n_out + n_known; ++i) {
        auto x = out.features.row(n_in + i);
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] = center[j] + spread * rng.normal();
        }
        out.noisy_labels.push_back(i < n_out ? rng.uniform_index(k) : k);
        out.true_labels.push_back(k);
        out.inlier.push_back(0);
    }
    result.alpha_true = static_cast<double>(n_known) / static_cast<double>(n_out + n_known);
    return result;
}

Matrix empirical_flip_matrix(const Dataset& data) {
    const std::size_t k = data.label_count();
    Matrix counts(k, k);
    std::vector<double> per_class(k, 0.0);
    for (std::size_t r = 0; r < data.size(); ++r) {
        counts(data.noisy_labels[r], data.true_labels[r]) += 1.0;
        per_class[data.true_labels[r]] += 1.0;
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (per_class[i] > 0.0) {
            for (std::size_t j = 0; j < k; ++j) {
                counts(j, i) /= per_class[i];
            }
        }
    }
    return counts;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
        os << "x_" << j << ',';
    }
    os << "noisy_label,true_label,is_inlier\n";
    char buf[32];
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (double v : data.features.row(r)) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << buf << ',';
        }
        os << data.noisy_labels[r] << ',' << data.true_labels[r] << ','
           << static_cast<int>(data.inlier[r]) << '\n';
    }
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_dataset_csv(os, data);
}

Dataset read_dataset_csv(std::istream& is, std::size_t classes, bool has_outlier_class) {
    std::string line;
    if (!std::getline(is, line)) {
        throw std::invalid_argument("dataset csv: missing header");
    }
    const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 4) {
        throw std::invalid_argument("dataset csv: header has too few columns");
    }
    const std::size_t d = columns - 3;
    Dataset out;
    out.classes = classes;
    out.has_outlier_class = has_outlier_class;
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != columns) {
            throw std::invalid_argument("dataset csv: row " + std::to_string(out.size()) +
                                        " has wrong column count");
        }
        for (std::size_t j = 0; j < d; ++j) {
            values.push_back(std::stod(cells[j]));
        }
        out.noisy_labels.push_back(std::stoul(cells[d]));
        out.true_labels.push_back(std::stoul(cells[d + 1]));
        out.inlier.push_back(static_cast<std::uint8_t>(std::stoi(cells[d + 2]) != 0));
    }
    out.features = Matrix::from_values(out.noisy_labels.size(), d, std::move(values));
    out.validate();
    return out;
}

Dataset read_dataset_csv(const std::string& path, std::size_t classes, bool has_outlier_class) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open " + path);
    }
    return read_dataset_csv(is, classes, has_outlier_class);
}

}  // namespace noiseadapt
