#ifndef MBPRE_VECMAT_HPP
#define MBPRE_VECMAT_HPP

#include <cstddef>
#include <vector>

namespace mbpre {

// K is small (1..~16), so a flat row-major buffer is all we need.
using Vec = std::vector<double>;

struct Mat {
    std::size_t k = 0;
    std::vector<double> a;  // row-major, k*k

    Mat() = default;
    explicit Mat(std::size_t k_, double fill = 0.0) : k(k_), a(k_ * k_, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * k + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * k + j]; }

    static Mat identity(std::size_t k_) {
        Mat m(k_);
        for (std::size_t i = 0; i < k_; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline double dot(const Vec& x, const Vec& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm1(const Vec& x) {
    double s = 0.0;
    for (double v : x) s += v;  // components are nonnegative throughout
    return s;
}

// y = x * M (row vector times matrix)
inline Vec vecmat(const Vec& x, const Mat& m) {
    Vec y(m.k, 0.0);
    for (std::size_t i = 0; i < m.k; ++i)
        for (std::size_t j = 0; j < m.k; ++j) y[j] += x[i] * m(i, j);
    return y;
}

// y = M * x (matrix times column vector)
inline Vec matvec(const Mat& m, const Vec& x) {
    Vec y(m.k, 0.0);
    for (std::size_t i = 0; i < m.k; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.k; ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.k);
    for (std::size_t i = 0; i < a.k; ++i)
        for (std::size_t l = 0; l < a.k; ++l) {
            double ail = a(i, l);
            if (ail == 0.0) continue;
            for (std::size_t j = 0; j < a.k; ++j) c(i, j) += ail * b(l, j);
        }
    return c;
}

inline double row_sum(const Mat& m, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.k; ++j) s += m(i, j);
    return s;
}

}  // namespace mbpre

#endif
