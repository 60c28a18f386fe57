#pragma once

#include "tomodiff/linops.hpp"
#include "tomodiff/volume.hpp"

#include <Eigen/Dense>

#include <cstring>
#include <random>

namespace testutil {

inline tomodiff::Volume3 random_volume(tomodiff::Shape3 s, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sd);
    tomodiff::Volume3 v(s);
    for (double& x : v.data()) x = nd(rng);
    return v;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (double& x : v) x = nd(rng);
    return v;
}

/// Dense matrix of A built column by column from canonical basis vectors.
inline Eigen::MatrixXd dense_matrix(const tomodiff::LinearOperator& A) {
    const std::size_t n = A.domain_size(), m = A.range_size();
    Eigen::MatrixXd M(m, n);
    std::vector<double> e(n, 0.0), col(m);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        A.apply(e, col);
        for (std::size_t i = 0; i < m; ++i) M(i, j) = col[i];
        e[j] = 0.0;
    }
    return M;
}

inline Eigen::MatrixXd dense_adjoint(const tomodiff::LinearOperator& A) {
    const std::size_t n = A.domain_size(), m = A.range_size();
    Eigen::MatrixXd M(n, m);
    std::vector<double> e(m, 0.0), col(n);
    for (std::size_t j = 0; j < m; ++j) {
        e[j] = 1.0;
        A.adjoint(e, col);
        for (std::size_t i = 0; i < n; ++i) M(i, j) = col[i];
        e[j] = 0.0;
    }
    return M;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    return true;
}

} // namespace testutil
