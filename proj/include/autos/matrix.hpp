#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "autos/common.hpp"

namespace autos {

using Vector = std::vector<double>;

// Dense row-major matrix, just enough for the MLP and the selection math.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

// out[r] = M.row(r) . v  for each row
inline Vector matvec(const Matrix& m, const Vector& v) {
    if (v.size() != m.cols) throw ShapeError("matvec dims");
    Vector out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) out[r] = dot(m.row(r), v.data(), m.cols);
    return out;
}

// C = A * B^T, A: n x d, B: m x d  ->  n x m
inline Matrix mul_abt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw ShapeError("mul_abt dims");
    Matrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) c(i, j) = dot(a.row(i), b.row(j), a.cols);
    return c;
}

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace autos
