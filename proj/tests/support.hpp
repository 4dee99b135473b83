#pragma once

// Random mixed-model instances shared by the unit and acceptance tests.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lmmsel/blup.hpp"
#include "lmmsel/model.hpp"
#include "lmmsel/rng.hpp"

namespace lmmsel::testing {

struct Instance {
    MixedModelData data;
    Variances variances;
    Vector beta;  // generating coefficients
};

struct InstanceShape {
    std::size_t n = 40;
    std::size_t p = 10;
    std::vector<std::size_t> levels{5, 4};  // N_k per effect
    bool interaction = true;                // effect 1 interacts with column 1
    bool relationship = false;              // effect 0 gets a relationship matrix
    std::size_t sparsity = 3;               // nonzero generating coefficients besides the intercept
};

inline GroupingFactor random_factor(Philox4x32& rng, std::size_t n, std::size_t levels) {
    std::vector<std::size_t> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = i % levels;
    std::shuffle(a.begin(), a.end(), rng);
    return GroupingFactor(std::move(a), levels);
}

inline Matrix random_spd(Philox4x32& rng, std::size_t m) {
    Matrix B(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < B.rows(); ++i)
        for (Eigen::Index j = 0; j < B.cols(); ++j) B(i, j) = rng.normal();
    Matrix A = B * B.transpose() / static_cast<double>(m) + 0.5 * Matrix::Identity(B.rows(), B.rows());
    return (A + A.transpose()) / 2.0;
}

inline Instance random_instance(std::uint64_t seed, const InstanceShape& s = {}) {
    Philox4x32 rng(seed, 77);
    const auto n = static_cast<Eigen::Index>(s.n);
    const auto p = static_cast<Eigen::Index>(s.p);
    Matrix X(n, p);
    X.col(0).setOnes();
    for (Eigen::Index j = 1; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = rng.normal();

    Vector beta = Vector::Zero(p);
    beta(0) = 1.0;
    for (std::size_t j = 1; j <= s.sparsity && static_cast<Eigen::Index>(j) < p; ++j)
        beta(static_cast<Eigen::Index>(j)) = (j % 2 ? 1.5 : -1.0);

    Variances var;
    var.residual = 0.5 + rng.uniform();
    std::vector<RandomEffectSpec> effects;
    Vector y = X * beta;
    for (std::size_t k = 0; k < s.levels.size(); ++k) {
        RandomEffectSpec e;
        e.name = "u" + std::to_string(k + 1);
        e.factor = random_factor(rng, s.n, s.levels[k]);
        if (k == 1 && s.interaction && p > 1) e.covariate_column = 1;
        if (k == 0 && s.relationship) e.relationship = random_spd(rng, s.levels[k]);
        const double sk = 0.3 + rng.uniform();
        var.effect.push_back(sk);
        Vector u(static_cast<Eigen::Index>(s.levels[k]));
        for (Eigen::Index l = 0; l < u.size(); ++l) u(l) = std::sqrt(sk) * rng.normal();
        if (e.relationship) u = e.relationship->llt().matrixL() * u;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = e.covariate_column ? X(i, static_cast<Eigen::Index>(*e.covariate_column)) : 1.0;
            y(i) += c * u(static_cast<Eigen::Index>(e.factor.level(static_cast<std::size_t>(i))));
        }
        effects.push_back(std::move(e));
    }
    for (Eigen::Index i = 0; i < n; ++i) y(i) += std::sqrt(var.residual) * rng.normal();
    return {MixedModelData(std::move(y), std::move(X), std::move(effects), {0}), var, beta};
}

// The four-observation instance: one factor with levels (1,1,2,2), y = (1,1,2,2)
// and a single non-intercept column whose coefficient stays at zero.
inline MixedModelData four_obs_data() {
    Vector y(4);
    y << 1, 1, 2, 2;
    Matrix X(4, 1);
    X << 1, -1, 2, -2;
    RandomEffectSpec e;
    e.name = "u1";
    e.factor = GroupingFactor({0, 0, 1, 1}, 2);
    return MixedModelData(y, X, {e});
}

}  // namespace lmmsel::testing
