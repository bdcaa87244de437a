#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noiseadapt {

// A parameter or gradient became non-finite during training.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A class index has no samples where one is required (e.g. a confusion-matrix column).
class MissingClassError : public std::invalid_argument {
public:
    explicit MissingClassError(std::size_t cls)
        : std::invalid_argument("no samples with true class " + std::to_string(cls)), cls_(cls) {}
    std::size_t missing_class() const { return cls_; }

private:
    std::size_t cls_;
};

}  // namespace noiseadapt
