#pragma once

#include <initializer_list>
#include <span>
#include <vector>

#include "lifelora/errors.hpp"

namespace lifelora {

// Dense row-major matrix of doubles. The single numeric carrier for the
// whole project; persistence narrows to f32 but all arithmetic is f64.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols);
    Mat(int rows, int cols, std::vector<double> data);

    static Mat identity(int n);
    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> row(int i) { return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const double> row(int i) const { return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)}; }

    bool same_shape(const Mat& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
    bool all_finite() const;

    bool operator==(const Mat& other) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Thin SVD: u is m x k, s has k = min(m,n) descending non-negative values,
// vt is k x n with orthonormal rows.
struct SvdResult {
    Mat u;
    std::vector<double> s;
    Mat vt;
};

// Product with a fixed summation order (ascending shared index per output
// element), so the parallel kernel and the serial reference agree bitwise.
Mat matmul(const Mat& a, const Mat& b);
Mat matmul_serial(const Mat& a, const Mat& b);

// One-sided Jacobi with a deterministic sweep order and sign convention
// (first nonzero entry of each right singular vector is non-negative).
// Throws NumericError if the sweep cap is hit, UsageError on bad input.
SvdResult svd(const Mat& x);

double frobenius_norm(const Mat& m);
double trace_product(const Mat& a, const Mat& b); // tr(a^T b) without forming a^T b
double cosine(std::span<const double> u, std::span<const double> v);

// Elementwise plumbing.
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double alpha);
Mat hadamard(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

std::vector<double> mat_vec(const Mat& a, std::span<const double> v);  // a * v
std::vector<double> vec_mat(std::span<const double> v, const Mat& a);  // v^T * a
double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> v);

} // namespace lifelora
