// ============================================================================
// linalg.hpp - small dense matrices: Cholesky, symmetric eigen, moments
//
// Dimensions here are representation sizes (d <= 512), so plain O(d^3) loops
// are plenty.
// ============================================================================

#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "con2/util.hpp"

namespace con2 {

struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

inline double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(const double* x, std::size_t n) { return std::sqrt(dot(x, x, n)); }

inline double cosine_sim(const double* x, const double* y, std::size_t n) {
    double nx = norm2(x, n), ny = norm2(y, n);
    if (nx == 0.0 || ny == 0.0) throw NumericError("cosine similarity of a zero vector");
    return dot(x, y, n) / (nx * ny);
}

// Lower Cholesky factor of a symmetric positive definite matrix.
// Returns false (factor unusable) when the matrix is not SPD.
inline bool cholesky(const Matrix& m, Matrix& lower) {
    std::size_t n = m.rows;
    lower = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = m.at(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= lower.at(j, k) * lower.at(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) return false;
        double dj = std::sqrt(diag);
        lower.at(j, j) = dj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= lower.at(i, k) * lower.at(j, k);
            lower.at(i, j) = s / dj;
        }
    }
    return true;
}

// Solves (L L^T) x = b given the lower factor.
inline std::vector<double> cholesky_solve(const Matrix& lower, const std::vector<double>& b) {
    std::size_t n = lower.rows;
    std::vector<double> y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= lower.at(i, k) * y[k];
        y[i] = s / lower.at(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= lower.at(k, ii) * x[k];
        x[ii] = s / lower.at(ii, ii);
    }
    return x;
}

inline double cholesky_logdet(const Matrix& lower) {
    double s = 0.0;
    for (std::size_t i = 0; i < lower.rows; ++i) s += std::log(lower.at(i, i));
    return 2.0 * s;
}

// Cyclic Jacobi eigendecomposition for symmetric matrices. Eigenpairs come
// back sorted by descending eigenvalue; eigenvectors are the columns of v.
inline void jacobi_eigen_sym(Matrix m, std::vector<double>& eigvals, Matrix& eigvecs) {
    std::size_t n = m.rows;
    eigvecs = Matrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = m.at(p, q);
                if (apq == 0.0) continue;
                double app = m.at(p, p), aqq = m.at(q, q);
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = m.at(k, p), akq = m.at(k, q);
                    m.at(k, p) = c * akp - s * akq;
                    m.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = m.at(p, k), aqk = m.at(q, k);
                    m.at(p, k) = c * apk - s * aqk;
                    m.at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = eigvecs.at(k, p), vkq = eigvecs.at(k, q);
                    eigvecs.at(k, p) = c * vkp - s * vkq;
                    eigvecs.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.resize(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        eigvals[i] = m.at(i, i);
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eigvals[a] > eigvals[b]; });
    std::vector<double> sorted_vals(n);
    Matrix sorted_vecs(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        sorted_vals[j] = eigvals[order[j]];
        for (std::size_t i = 0; i < n; ++i) sorted_vecs.at(i, j) = eigvecs.at(i, order[j]);
    }
    eigvals = sorted_vals;
    eigvecs = sorted_vecs;
}

// Row mean of an n x d sample matrix.
inline std::vector<double> row_mean(const std::vector<std::vector<double>>& rows) {
    std::size_t n = rows.size(), d = rows.empty() ? 0 : rows[0].size();
    std::vector<double> mu(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) mu[j] += r[j];
    for (auto& v : mu) v /= static_cast<double>(n);
    return mu;
}

// Empirical covariance (1/n normalization) around the given mean.
inline Matrix covariance(const std::vector<std::vector<double>>& rows,
                         const std::vector<double>& mu) {
    std::size_t n = rows.size(), d = mu.size();
    Matrix cov(d, d);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < d; ++i) {
            double di = r[i] - mu[i];
            for (std::size_t j = i; j < d; ++j) cov.at(i, j) += di * (r[j] - mu[j]);
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov.at(i, j) /= static_cast<double>(n);
            cov.at(j, i) = cov.at(i, j);
        }
    return cov;
}

}  // namespace con2
