#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace noiseadapt {

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix from_values(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    bool is_square() const { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::vector<double> column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> v);

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    Matrix transposed() const;
    double trace() const;
    bool all_finite() const;

    void fill(double v);
    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

// a * b. Throws std::invalid_argument on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

std::vector<double> matvec(const Matrix& m, std::span<const double> v);

// Largest |a_ij - b_ij|. Throws on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

// True when every column is non-negative (>= -tol) and sums to 1 within tol.
bool is_column_stochastic(const Matrix& m, double tol);

}  // namespace noiseadapt
