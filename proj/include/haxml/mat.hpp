#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace haxml {

// Row-major dense matrix of doubles.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double* operator[](std::size_t r) { return a.data() + r * cols; }
    const double* operator[](std::size_t r) const { return a.data() + r * cols; }

    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    friend bool operator==(const Mat&, const Mat&) = default;
};

inline double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

// y += alpha * x
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace haxml
