#pragma once

#include <random>

namespace eventcast {

template <typename Derived>
RowMatrixXd add_noise(const Eigen::MatrixBase<Derived>& p, double alpha, std::uint64_t seed) {
    if (!(alpha >= 0.0)) throw DomainError("add_noise: alpha must be non-negative");
    RowMatrixXd out = p;
    if (alpha == 0.0 || out.rows() == 0) return out;
    const Eigen::RowVectorXd sigma = column_std(out);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += alpha * sigma(j) * normal(rng);
    return out;
}

}  // namespace eventcast
