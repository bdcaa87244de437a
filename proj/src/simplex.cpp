#include "noiseadapt/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace noiseadapt {

std::vector<double> project_to_simplex(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("project_to_simplex: empty vector");
    }
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument("project_to_simplex: non-finite entry");
        }
    }

    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());

    // Largest rho with sorted[rho] - (cumsum[rho] - 1) / (rho + 1) > 0.
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        cumsum += sorted[j];
        const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (sorted[j] - t > 0.0) {
            theta = t;
        }
    }

    std::vector<double> w(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        w[i] = std::max(v[i] - theta, 0.0);
        total += w[i];
    }
    // Rounding in the threshold can leave the sum a few ulps off 1.
    if (total > 0.0 && total != 1.0) {
        for (double& x : w) {
            x /= total;
        }
    }
    return w;
}

Matrix project_columns_stochastic(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        const auto col = m.column(c);
        out.set_column(c, project_to_simplex(col));
    }
    return out;
}

}  // namespace noiseadapt
