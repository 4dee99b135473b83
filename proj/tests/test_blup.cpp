#include "doctest.h"

#include "lmmsel/blup.hpp"
#include "lmmsel/oracle.hpp"
#include "support.hpp"

using namespace lmmsel;

TEST_CASE("four-observation Henderson solve") {
    const auto d = testing::four_obs_data();
    const auto gamma = GammaMatrix::from_variances({0}, {1.0}, 1.0);
    const auto res = henderson_solve(d, gamma, Vector::Zero(1));
    CHECK(res.u(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(res.u(1) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
    CHECK(res.trace_T[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    // tr(Z C^-1 Z') = N - gamma tr(T) = 2 - 2/3
    CHECK(res.conditional_trace == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("four-observation marginal route") {
    const auto d = testing::four_obs_data();
    Variances v{{1.0}, 1.0};
    const Vector u = blup_marginal_oracle(d, v, Vector::Zero(1));
    CHECK(u(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(u(1) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("zero residual gives zero BLUP") {
    auto inst = testing::random_instance(21);
    const auto& d = inst.data;
    const Vector beta = Vector::LinSpaced(static_cast<Eigen::Index>(d.p()), 0.1, 1.0);
    const MixedModelData exact(d.X() * beta, d.X(), d.effects(), {0});
    const auto res = henderson_solve(exact, GammaMatrix::from_variances({0, 1}, inst.variances.effect, 0.7), beta);
    CHECK(res.u.cwiseAbs().maxCoeff() <= 1e-12);
    const Vector uo = blup_marginal_oracle(exact, inst.variances, beta);
    CHECK(uo.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("single level: u = n / (n + 1)") {
    const std::size_t n = 9;
    RandomEffectSpec e;
    e.factor = GroupingFactor(std::vector<std::size_t>(n, 0), 1);
    Matrix X(n, 1);
    for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i) - 4.0;
    const MixedModelData d(Vector::Ones(n), X, {e});
    const auto res = henderson_solve(d, GammaMatrix::from_variances({0}, {1.0}, 1.0), Vector::Zero(1));
    CHECK(res.u(0) == doctest::Approx(9.0 / 10.0).epsilon(1e-14));
    const Vector uo = blup_marginal_oracle(d, Variances{{1.0}, 1.0}, Vector::Zero(1));
    CHECK(uo(0) == doctest::Approx(9.0 / 10.0).epsilon(1e-12));
}

TEST_CASE("huge gamma shrinks the BLUP to zero") {
    auto inst = testing::random_instance(23);
    const auto& d = inst.data;
    const auto res = henderson_solve(d, GammaMatrix::from_variances({0, 1}, {1e-8, 1e-8}, 1.0), inst.beta);
    const Vector ztr = d.Zt_times({0, 1}, d.y() - d.X() * inst.beta);
    CHECK(res.u.norm() <= 1e-6 * ztr.norm());
}

TEST_CASE("Henderson and marginal routes agree, with and without relationship") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto inst = testing::random_instance(100 + seed, {.n = 30, .p = 6, .relationship = seed % 2 == 0});
        const auto& d = inst.data;
        const auto h = henderson_solve(d, GammaMatrix::from_variances({0, 1}, inst.variances.effect,
                                                                      inst.variances.residual),
                                       inst.beta);
        const Vector o = blup_marginal_oracle(d, inst.variances, inst.beta);
        CHECK((h.u - o).cwiseAbs().maxCoeff() <= 1e-8);

        // Trace identity against a dense evaluation of tr(Z C^-1 Z').
        const Matrix Z = d.Z({0, 1});
        const double dense = (Z * h.system->inverse() * Z.transpose()).trace();
        CHECK(h.conditional_trace == doctest::Approx(dense).epsilon(1e-10));
        CHECK(h.block(0).size() == 5);
        CHECK(h.block(1).size() == 4);
        CHECK(h.block(7).size() == 0);
    }
}

TEST_CASE("weighted square norm uses the relationship inverse") {
    auto inst = testing::random_instance(31, {.relationship = true});
    const auto& d = inst.data;
    const Vector u = Vector::LinSpaced(5, 1.0, 2.0);
    CHECK(weighted_square_norm(d, 0, u) ==
          doctest::Approx(u.dot(d.effect(0).relationship->ldlt().solve(u))).epsilon(1e-10));
    const Vector v = Vector::LinSpaced(4, 1.0, 2.0);
    CHECK(weighted_square_norm(d, 1, v) == doctest::Approx(v.squaredNorm()));
}

TEST_CASE("gamma validation") {
    CHECK_THROWS_AS(GammaMatrix::from_variances({0}, {0.0}, 1.0), NumericError);
    const auto d = testing::four_obs_data();
    CHECK_THROWS_AS(henderson_solve(d, GammaMatrix{}, Vector::Zero(1)), ConfigError);
}
